#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqi/dataset.hpp"
#include "aqi/pipeline.hpp"
#include "aqi/train.hpp"

namespace aqi {

struct MetricTriple {
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  bool r2_defined = true;  // false when the labels have zero variance (r2 is NaN)
};

MetricTriple metrics(std::span<const double> y, std::span<const double> y_hat);
// Component-wise mean; r2 stays defined only if it is defined everywhere.
MetricTriple average(std::span<const MetricTriple> triples);

// Truth and prediction pairs of the test grids over hours first_hour..T-1.
struct TestPredictions {
  std::vector<int> grids;
  std::vector<int> hours;
  std::vector<double> truth;
  std::vector<double> predicted;
};

struct TrainedFold {
  int fold = 0;
  Mtstn model;
  FeatureSchema schema;  // features the model consumes
  LabelScale scale;
  TrainLog log;
  MetricTriple test;
  TestPredictions predictions;
};

// Feature tensor and schema restricted to `schema` (adjacencies unchanged).
PreparedData restrict_features(const PreparedData& data, const FeatureSchema& schema);

// Graph inputs for an experiment, applying identity-adjacency switches.
GraphInputs experiment_graph(const PreparedData& data, const ExperimentConfig& config);

// Trains fold `fold_index` and scores it on the test grids. With
// select_keep > 0 the model is trained once, features are ranked by
// gradient importance, and a second model is trained on the kept features.
TrainedFold train_fold(const PreparedData& data, const ExperimentConfig& config, int fold_index);

TestPredictions predict_test(const Mtstn& model, const PreparedData& data, const ScaledFeatures& scaled,
                             const GraphInputs& graph, const LabelScale& scale);

// Gradient importance of a trained fold over its training windows (every
// `stride`-th hour).
ImportanceReport fold_importance(const TrainedFold& fold, const PreparedData& data, const ExperimentConfig& config,
                                 int stride = 1);

struct CvResult {
  std::vector<TrainedFold> folds;
  MetricTriple average;
};

CvResult run_cv(const PreparedData& data, const ExperimentConfig& config);

enum class Baseline { kKnn, kIdw, kLur };
Baseline parse_baseline(const std::string& name);
std::string to_string(Baseline b);

// Classical estimators scored like run_cv: each fold predicts the test grids
// from its training and interpolation grids, and the fold metrics are
// averaged. Hours before first_hour are skipped.
MetricTriple run_baseline(Baseline baseline, const PreparedData& data, int first_hour, int knn_k = 3,
                          double idw_power = 2.0);

// Least squares with an intercept, minimum-norm when rank deficient. Returns
// [intercept, coefficients...]. A positive `ridge` adds ridge * ||coef||^2 to
// the objective; the intercept is never penalized.
Eigen::VectorXd fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge = 0.0);
Eigen::VectorXd predict_linear(const Eigen::VectorXd& coef, const Eigen::MatrixXd& x);

// Removes floor(ratio * n) uniformly chosen entries (set to NaN).
std::vector<double> corrupt_series(std::span<const double> series, double ratio, std::uint64_t seed);

// Corrupts every reading series at `ratio` and refills it with fill_missing.
DatasetBundle corrupt_and_fill(const DatasetBundle& bundle, double ratio, std::uint64_t seed);

struct MissingRatioRow {
  double ratio = 0.0;
  MetricTriple metrics;
};

// Full pipeline per ratio on corrupted-and-filled readings, scored against
// the clean test labels.
std::vector<MissingRatioRow> missing_ratio_study(const DatasetBundle& bundle, Pollutant pollutant,
                                                 const FeatureOptions& features, std::uint64_t split_seed,
                                                 std::span<const double> ratios, const ExperimentConfig& config,
                                                 std::uint64_t corruption_seed);

enum class AblationVariant { kFull, kWoSst, kRpKsst, kRpGsst, kWoPe, kWoFs, kWoOd, kWoSe };
AblationVariant parse_variant(const std::string& name);
std::string to_string(AblationVariant v);
inline constexpr AblationVariant kAllVariants[] = {AblationVariant::kFull,  AblationVariant::kWoSst,
                                                   AblationVariant::kRpKsst, AblationVariant::kRpGsst,
                                                   AblationVariant::kWoPe,  AblationVariant::kWoFs,
                                                   AblationVariant::kWoOd,  AblationVariant::kWoSe};

// The experiment configuration of a variant, derived from the full one.
ExperimentConfig apply_variant(AblationVariant variant, const ExperimentConfig& full);

CvResult run_ablation(AblationVariant variant, const PreparedData& data, const ExperimentConfig& full);

}  // namespace aqi
