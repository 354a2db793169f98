#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aqi/evaluate.hpp"
#include "aqi/pipeline.hpp"
#include "aqi/synthcity.hpp"

namespace aqi {

struct EvaluationConfig {
  std::vector<double> missing_ratios{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::uint64_t corruption_seed = 5;
  std::vector<std::string> variants{"full", "wo_sst", "rp_ksst", "rp_gsst", "wo_pe", "wo_fs", "wo_od", "wo_se"};
  std::vector<std::string> baselines{"idw", "knn", "lur"};
  int knn_k = 3;
  int importance_stride = 6;
  int importance_top = 20;
};

// Everything a CLI run needs. Every field has a counterpart in the JSON
// config file; unknown keys are rejected.
struct RunConfig {
  std::string data_dir = "data";
  std::string out_dir = "out";
  Pollutant pollutant = Pollutant::kNO2;
  std::uint64_t split_seed = 7;
  SynthConfig synth;
  FeatureOptions features;
  ExperimentConfig experiment;
  EvaluationConfig evaluation;

  void validate() const;
  std::string to_json() const;  // canonical (sorted keys)
  std::string hash() const;     // 16 hex digits of FNV-1a over to_json() minus the paths
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

PretextTask parse_pretext(const std::string& name);
std::string to_string(PretextTask task);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace aqi
