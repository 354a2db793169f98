#include "aqi/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "aqi/error.hpp"

namespace aqi {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    std::string field = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(std::move(field));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  fail(ErrorCode::kSchema, "missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingArtifact, "cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto fields = split_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      fail(ErrorCode::kSchema, path.string() + ": row has " + std::to_string(fields.size()) +
                                   " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) fail(ErrorCode::kSchema, path.string() + ": empty file");
  return table;
}

double parse_double(std::string_view text) {
  if (text.empty() || text == "nan" || text == "NaN" || text == "NA") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::kInvalidInput, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

long long parse_int(std::string_view text) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::kInvalidInput, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  write_binary_atomic(path, std::vector<char>(content.begin(), content.end()));
}

void write_binary_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::append(const std::string& field, bool& first) {
  if (!first) out_ << ',';
  out_ << field;
  first = false;
}

}  // namespace aqi
