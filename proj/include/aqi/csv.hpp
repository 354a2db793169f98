#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace aqi {

// Minimal comma-separated table. No quoting; fields never contain commas here.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws kSchema when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Parses a double; "nan", "NaN" and the empty string map to quiet NaN.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string format_double(double value);

// Writes `content` to `path` through a temporary sibling and a rename, so
// readers never observe a half-written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
void write_binary_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);

// Helper for building CSV text line by line.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header);

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((append(fields, first)), ...);
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  void append(const std::string& field, bool& first);
  void append(const char* field, bool& first) { append(std::string(field), first); }
  void append(double field, bool& first) { append(format_double(field), first); }
  void append(int field, bool& first) { append(std::to_string(field), first); }
  void append(long field, bool& first) { append(std::to_string(field), first); }
  void append(long long field, bool& first) { append(std::to_string(field), first); }
  void append(std::size_t field, bool& first) { append(std::to_string(field), first); }

  std::ostringstream out_;
};

}  // namespace aqi
