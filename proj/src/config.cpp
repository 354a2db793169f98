#include "aqi/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aqi/error.hpp"

namespace aqi {

using nlohmann::json;

PretextTask parse_pretext(const std::string& name) {
  if (name == "idw") return PretextTask::kIdw;
  if (name == "knn") return PretextTask::kKnn;
  if (name == "graph_completion") return PretextTask::kGraphCompletion;
  if (name == "none") return PretextTask::kNone;
  fail(ErrorCode::kInvalidConfig, "unknown pretext task '" + name + "'");
}

std::string to_string(PretextTask task) {
  switch (task) {
    case PretextTask::kIdw: return "idw";
    case PretextTask::kKnn: return "knn";
    case PretextTask::kGraphCompletion: return "graph_completion";
    case PretextTask::kNone: return "none";
  }
  return "?";
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

json to_json_value(const RunConfig& c) {
  const SynthConfig& s = c.synth;
  const FeatureOptions& f = c.features;
  const ModelConfig& m = c.experiment.model;
  const TrainConfig& t = c.experiment.train;
  const ExperimentConfig& e = c.experiment;
  const EvaluationConfig& v = c.evaluation;
  json j;
  j["data_dir"] = c.data_dir;
  j["out_dir"] = c.out_dir;
  j["pollutant"] = to_string(c.pollutant);
  j["split_seed"] = c.split_seed;
  j["synth"] = {{"n_rows", s.n_rows},
                {"n_cols", s.n_cols},
                {"cell_size_m", s.cell_size_m},
                {"hours", s.hours},
                {"start_time", s.start_time},
                {"origin_lat_deg", s.origin_lat_deg},
                {"origin_lon_deg", s.origin_lon_deg},
                {"n_ss", s.n_ss},
                {"n_ms", s.n_ms},
                {"n_sources", s.n_sources},
                {"n_roads", s.n_roads},
                {"n_trucks", s.n_trucks},
                {"ss_noise_std", s.ss_noise_std},
                {"field_noise_std", s.field_noise_std},
                {"noise_feature", s.noise_feature},
                {"seed", s.seed},
                {"sensor",
                 {{"gain", s.sensor.gain},
                  {"offset", s.sensor.offset},
                  {"drift_per_day", s.sensor.drift_per_day},
                  {"noise_std", s.sensor.noise_std},
                  {"exponent", s.sensor.exponent},
                  {"spread", s.sensor.spread}}}};
  j["features"] = {{"include_flow", f.include_flow},
                   {"embed_dim", f.embed_dim},
                   {"semantic_k", f.semantic_k},
                   {"symmetrize_od", f.symmetrize_od},
                   {"idw_power", f.idw_power},
                   {"expected_feature_count", f.expected_feature_count},
                   {"stl",
                    {{"period", f.stl.period},
                     {"seasonal_window", f.stl.seasonal_window},
                     {"trend_window", f.stl.trend_window},
                     {"lowpass_window", f.stl.lowpass_window},
                     {"inner_iterations", f.stl.inner_iterations},
                     {"robust_iterations", f.stl.robust_iterations},
                     {"center_seasonal", f.stl.center_seasonal}}}};
  j["model"] = {{"d_p", m.d_p},
                {"d_t", m.d_t},
                {"heads_od", m.heads_od},
                {"heads_se", m.heads_se},
                {"heads_sup", m.heads_sup},
                {"head_dim", m.head_dim},
                {"tau", m.tau},
                {"d_sup", m.d_sup},
                {"ss_hidden", m.ss_hidden},
                {"leaky_slope", m.leaky_slope},
                {"use_positional", m.use_positional}};
  j["train"] = {{"alpha_sup", t.alpha_sup},
                {"alpha_ss", t.alpha_ss},
                {"beta", t.beta},
                {"gamma", t.gamma},
                {"learning_rate", t.learning_rate},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"steps_per_epoch", t.steps_per_epoch},
                {"validation_stride", t.validation_stride},
                {"seed", t.seed},
                {"grad_penalty_mode", to_string(t.grad_penalty_mode)},
                {"penalty_step", t.penalty_step}};
  j["experiment"] = {{"pretext", to_string(e.pretext)},
                     {"pretext_knn_k", e.pretext_knn_k},
                     {"mask_rate", e.mask_rate},
                     {"select_keep", e.select_keep},
                     {"model_seed", e.model_seed}};
  j["evaluation"] = {{"missing_ratios", v.missing_ratios},
                     {"corruption_seed", v.corruption_seed},
                     {"variants", v.variants},
                     {"baselines", v.baselines},
                     {"knn_k", v.knn_k},
                     {"importance_stride", v.importance_stride},
                     {"importance_top", v.importance_top}};
  return j;
}

// Overlays `patch` onto `base`, rejecting keys `base` does not have.
void merge(json& base, const json& patch, const std::string& path) {
  require(patch.is_object(), ErrorCode::kInvalidConfig, "config section '" + path + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (it.key().rfind("_comment", 0) == 0) continue;
    require(base.contains(it.key()), ErrorCode::kInvalidConfig, "unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge(slot, it.value(), key);
    } else {
      const bool numeric = slot.is_number() && it.value().is_number();
      require(numeric || slot.type() == it.value().type(), ErrorCode::kInvalidConfig,
              "config key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

RunConfig from_json_value(const json& j) {
  RunConfig c;
  c.data_dir = j.at("data_dir").get<std::string>();
  c.out_dir = j.at("out_dir").get<std::string>();
  c.pollutant = parse_pollutant(j.at("pollutant").get<std::string>());
  c.split_seed = j.at("split_seed").get<std::uint64_t>();

  const json& s = j.at("synth");
  SynthConfig& sc = c.synth;
  sc.n_rows = s.at("n_rows").get<int>();
  sc.n_cols = s.at("n_cols").get<int>();
  sc.cell_size_m = s.at("cell_size_m").get<double>();
  sc.hours = s.at("hours").get<int>();
  sc.start_time = s.at("start_time").get<std::string>();
  sc.origin_lat_deg = s.at("origin_lat_deg").get<double>();
  sc.origin_lon_deg = s.at("origin_lon_deg").get<double>();
  sc.n_ss = s.at("n_ss").get<int>();
  sc.n_ms = s.at("n_ms").get<int>();
  sc.n_sources = s.at("n_sources").get<int>();
  sc.n_roads = s.at("n_roads").get<int>();
  sc.n_trucks = s.at("n_trucks").get<int>();
  sc.ss_noise_std = s.at("ss_noise_std").get<double>();
  sc.field_noise_std = s.at("field_noise_std").get<double>();
  sc.noise_feature = s.at("noise_feature").get<bool>();
  sc.seed = s.at("seed").get<std::uint64_t>();
  const json& sd = s.at("sensor");
  sc.sensor.gain = sd.at("gain").get<double>();
  sc.sensor.offset = sd.at("offset").get<double>();
  sc.sensor.drift_per_day = sd.at("drift_per_day").get<double>();
  sc.sensor.noise_std = sd.at("noise_std").get<double>();
  sc.sensor.exponent = sd.at("exponent").get<double>();
  sc.sensor.spread = sd.at("spread").get<double>();

  const json& f = j.at("features");
  FeatureOptions& fo = c.features;
  fo.include_flow = f.at("include_flow").get<bool>();
  fo.embed_dim = f.at("embed_dim").get<int>();
  fo.semantic_k = f.at("semantic_k").get<int>();
  fo.symmetrize_od = f.at("symmetrize_od").get<bool>();
  fo.idw_power = f.at("idw_power").get<double>();
  fo.expected_feature_count = f.at("expected_feature_count").get<int>();
  const json& stl = f.at("stl");
  fo.stl.period = stl.at("period").get<int>();
  fo.stl.seasonal_window = stl.at("seasonal_window").get<int>();
  fo.stl.trend_window = stl.at("trend_window").get<int>();
  fo.stl.lowpass_window = stl.at("lowpass_window").get<int>();
  fo.stl.inner_iterations = stl.at("inner_iterations").get<int>();
  fo.stl.robust_iterations = stl.at("robust_iterations").get<int>();
  fo.stl.center_seasonal = stl.at("center_seasonal").get<bool>();

  const json& m = j.at("model");
  ModelConfig& mc = c.experiment.model;
  mc.d_p = m.at("d_p").get<int>();
  mc.d_t = m.at("d_t").get<int>();
  mc.heads_od = m.at("heads_od").get<int>();
  mc.heads_se = m.at("heads_se").get<int>();
  mc.heads_sup = m.at("heads_sup").get<int>();
  mc.head_dim = m.at("head_dim").get<int>();
  mc.tau = m.at("tau").get<int>();
  mc.d_sup = m.at("d_sup").get<int>();
  mc.ss_hidden = m.at("ss_hidden").get<int>();
  mc.leaky_slope = m.at("leaky_slope").get<double>();
  mc.use_positional = m.at("use_positional").get<bool>();

  const json& t = j.at("train");
  TrainConfig& tc = c.experiment.train;
  tc.alpha_sup = t.at("alpha_sup").get<double>();
  tc.alpha_ss = t.at("alpha_ss").get<double>();
  tc.beta = t.at("beta").get<double>();
  tc.gamma = t.at("gamma").get<double>();
  tc.learning_rate = t.at("learning_rate").get<double>();
  tc.adam_beta1 = t.at("adam_beta1").get<double>();
  tc.adam_beta2 = t.at("adam_beta2").get<double>();
  tc.adam_eps = t.at("adam_eps").get<double>();
  tc.max_epochs = t.at("max_epochs").get<int>();
  tc.patience = t.at("patience").get<int>();
  tc.steps_per_epoch = t.at("steps_per_epoch").get<int>();
  tc.validation_stride = t.at("validation_stride").get<int>();
  tc.seed = t.at("seed").get<std::uint64_t>();
  tc.grad_penalty_mode = parse_grad_penalty_mode(t.at("grad_penalty_mode").get<std::string>());
  tc.penalty_step = t.at("penalty_step").get<double>();

  const json& e = j.at("experiment");
  ExperimentConfig& ec = c.experiment;
  ec.pretext = parse_pretext(e.at("pretext").get<std::string>());
  ec.model.use_ss_head = ec.pretext != PretextTask::kNone;
  ec.pretext_knn_k = e.at("pretext_knn_k").get<int>();
  ec.mask_rate = e.at("mask_rate").get<double>();
  ec.select_keep = e.at("select_keep").get<int>();
  ec.model_seed = e.at("model_seed").get<std::uint64_t>();

  const json& v = j.at("evaluation");
  EvaluationConfig& vc = c.evaluation;
  vc.missing_ratios = v.at("missing_ratios").get<std::vector<double>>();
  vc.corruption_seed = v.at("corruption_seed").get<std::uint64_t>();
  vc.variants = v.at("variants").get<std::vector<std::string>>();
  vc.baselines = v.at("baselines").get<std::vector<std::string>>();
  vc.knn_k = v.at("knn_k").get<int>();
  vc.importance_stride = v.at("importance_stride").get<int>();
  vc.importance_top = v.at("importance_top").get<int>();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  experiment.validate();
  require(features.embed_dim >= 1 && features.semantic_k >= 1, ErrorCode::kInvalidConfig,
          "embed_dim and semantic_k must be >= 1");
  require(features.idw_power > 0.0, ErrorCode::kInvalidConfig, "idw_power must be > 0");
  for (double r : evaluation.missing_ratios)
    require(r >= 0.0 && r < 1.0, ErrorCode::kInvalidConfig, "missing ratios must lie in [0, 1)");
  for (const std::string& v : evaluation.variants) parse_variant(v);
  for (const std::string& b : evaluation.baselines) parse_baseline(b);
  require(evaluation.knn_k >= 1 && evaluation.importance_stride >= 1 && evaluation.importance_top >= 1,
          ErrorCode::kInvalidConfig, "knn_k, importance_stride and importance_top must be >= 1");
}

std::string RunConfig::to_json() const { return to_json_value(*this).dump(2) + "\n"; }

std::string RunConfig::hash() const {
  // Paths say where artifacts go, not what they contain.
  json j = to_json_value(*this);
  j.erase("data_dir");
  j.erase("out_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

RunConfig parse_run_config(const std::string& json_text) {
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  json base = to_json_value(RunConfig{});
  merge(base, patch, "");
  RunConfig c;
  try {
    c = from_json_value(base);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("config value error: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingArtifact, "config file '" + path.string() + "' not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace aqi
