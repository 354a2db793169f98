#include "aqi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aqi/csv.hpp"
#include "aqi/error.hpp"

namespace aqi {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) { return fs::path(stem.string() + suffix); }

}  // namespace

void write_checkpoint(const fs::path& stem, const Mtstn& model, const Checkpoint& meta) {
  const ModelConfig& m = model.config();
  std::ostringstream man;
  man << "aqi-checkpoint 1\n";
  man << "config_hash " << meta.config_hash << '\n';
  man << "fold " << meta.fold << '\n';
  man << "label " << format_double(meta.label_scale.mean) << ' ' << format_double(meta.label_scale.scale) << '\n';
  man << "model d_p=" << m.d_p << " d_t=" << m.d_t << " heads_od=" << m.heads_od << " heads_se=" << m.heads_se
      << " heads_sup=" << m.heads_sup << " head_dim=" << m.head_dim << " tau=" << m.tau << " d_sup=" << m.d_sup
      << " d_ss=" << m.d_ss << " ss_hidden=" << m.ss_hidden << " leaky_slope=" << format_double(m.leaky_slope)
      << " use_positional=" << m.use_positional << " use_ss_head=" << m.use_ss_head << '\n';
  std::vector<char> bytes;
  for (const Parameter& p : model.parameters()) {
    man << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const double v = p.value(r, c);
        char buf[sizeof(double)];
        std::memcpy(buf, &v, sizeof v);
        bytes.insert(bytes.end(), buf, buf + sizeof buf);
      }
  }
  man << "schema\n" << meta.schema.to_text();
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_binary_atomic(with_suffix(stem, ".bin"), bytes);
  write_file_atomic(with_suffix(stem, ".manifest"), man.str());
}

LoadedCheckpoint read_checkpoint(const fs::path& stem) {
  const fs::path man_path = with_suffix(stem, ".manifest");
  const fs::path bin_path = with_suffix(stem, ".bin");
  for (const fs::path& p : {man_path, bin_path})
    if (!fs::exists(p)) fail(ErrorCode::kMissingArtifact, "checkpoint file '" + p.string() + "' not found");
  std::ifstream man(man_path);
  std::string line;
  std::getline(man, line);
  require(line == "aqi-checkpoint 1", ErrorCode::kSchema, "unrecognized checkpoint manifest");
  Checkpoint meta;
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> shapes;
  std::string schema_text;
  bool in_schema = false;
  while (std::getline(man, line)) {
    if (in_schema) {
      schema_text += line + "\n";
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "config_hash") {
      ls >> meta.config_hash;
    } else if (key == "fold") {
      ls >> meta.fold;
    } else if (key == "label") {
      std::string a, b;
      ls >> a >> b;
      meta.label_scale = {parse_double(a), parse_double(b)};
    } else if (key == "model") {
      std::string kv;
      ModelConfig& m = meta.model_config;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        require(eq != std::string::npos, ErrorCode::kSchema, "bad model entry in checkpoint");
        const std::string k = kv.substr(0, eq);
        const std::string v = kv.substr(eq + 1);
        if (k == "leaky_slope") {
          m.leaky_slope = parse_double(v);
          continue;
        }
        const int iv = static_cast<int>(parse_int(v));
        if (k == "d_p") m.d_p = iv;
        else if (k == "d_t") m.d_t = iv;
        else if (k == "heads_od") m.heads_od = iv;
        else if (k == "heads_se") m.heads_se = iv;
        else if (k == "heads_sup") m.heads_sup = iv;
        else if (k == "head_dim") m.head_dim = iv;
        else if (k == "tau") m.tau = iv;
        else if (k == "d_sup") m.d_sup = iv;
        else if (k == "d_ss") m.d_ss = iv;
        else if (k == "ss_hidden") m.ss_hidden = iv;
        else if (k == "use_positional") m.use_positional = iv != 0;
        else if (k == "use_ss_head") m.use_ss_head = iv != 0;
        else fail(ErrorCode::kSchema, "unknown model entry '" + k + "' in checkpoint");
      }
    } else if (key == "param") {
      std::string name;
      Eigen::Index r = 0, c = 0;
      ls >> name >> r >> c;
      shapes.emplace_back(name, r, c);
    } else if (key == "schema") {
      in_schema = true;
    } else if (!key.empty()) {
      fail(ErrorCode::kSchema, "unknown checkpoint manifest line '" + line + "'");
    }
  }
  meta.schema = FeatureSchema::from_text(schema_text);
  Mtstn model(meta.model_config, FeatureDims::from_schema(meta.schema), 0);
  auto& params = model.parameters();
  require(params.size() == shapes.size(), ErrorCode::kSchema, "checkpoint parameter count mismatch");

  std::ifstream bin(bin_path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, r, c] = shapes[i];
    Parameter& p = params[i];
    require(p.name == name && p.value.rows() == r && p.value.cols() == c, ErrorCode::kSchema,
            "checkpoint parameter '" + name + "' does not match the model");
    for (Eigen::Index a = 0; a < r; ++a)
      for (Eigen::Index b = 0; b < c; ++b) {
        require(offset + sizeof(double) <= bytes.size(), ErrorCode::kSchema, "checkpoint binary is truncated");
        double v;
        std::memcpy(&v, bytes.data() + offset, sizeof v);
        p.value(a, b) = v;
        offset += sizeof(double);
      }
  }
  require(offset == bytes.size(), ErrorCode::kSchema, "checkpoint binary has trailing bytes");
  model.parameters_changed();
  return {meta, std::move(model)};
}

}  // namespace aqi
