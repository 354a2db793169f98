#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "aqi/dataset.hpp"
#include "aqi/decompose.hpp"
#include "aqi/featurize.hpp"
#include "aqi/grid.hpp"
#include "aqi/interpolate.hpp"
#include "aqi/network.hpp"
#include "aqi/train.hpp"

namespace aqi {

struct FeatureOptions {
  bool include_flow = true;
  int embed_dim = 8;
  int semantic_k = 8;
  bool symmetrize_od = false;
  double idw_power = 2.0;
  int expected_feature_count = 0;  // 0 skips the check
  StlOptions stl;
};

// A dataset turned into model-ready arrays for one target pollutant.
struct PreparedData {
  GridGraph graph;
  Pollutant pollutant = Pollutant::kNO2;
  std::vector<HourStamp> stamps;
  FeatureTensor features;
  AdjacencyPair adjacency;
  SplitPlan split;
  Eigen::MatrixXd labels;       // [N x T] standardized-station truth, NaN off context grids
  Eigen::MatrixXd eval_labels;  // labels used for scoring (equal to `labels` unless replaced)
  std::vector<int> label_grids; // grids with a usable standardized series
  std::vector<std::string> geo_names;
  std::vector<std::string> weather_names;

  int n_grids() const { return graph.size(); }
  int n_hours() const { return static_cast<int>(stamps.size()); }
};

// Hourly series of every standardized station grid, averaged over the
// stations in a grid after filling gaps. [N x T], NaN elsewhere.
Eigen::MatrixXd station_label_matrix(const DatasetBundle& bundle, const GridGraph& graph, Pollutant pollutant);

// Trend feature: STL trend of each micro-station series, z-scored per
// station and spread to every grid by IDW. [N x T]
Eigen::MatrixXd micro_trend_feature(const DatasetBundle& bundle, const GridGraph& graph, const FeatureOptions& options,
                                    Pollutant pollutant);

PreparedData prepare_data(const DatasetBundle& bundle, Pollutant pollutant, const FeatureOptions& options,
                          std::uint64_t split_seed);

// Feature directory layout:
//   meta.json       sizes, pollutant, split, label grids, column groups
//   schema.txt      FeatureSchema text
//   x_num.bin       float64 little-endian [N, T, U] row-major
//   x_cat.bin       int32 little-endian [N, T, V] row-major
//   labels.csv      grid_id,t,value (finite labels only)
//   adjacency_od.csv, adjacency_se.csv   i,j edge lists
void write_prepared(const std::filesystem::path& dir, const PreparedData& data);
// `graph` must be the mesh the features were built on.
PreparedData read_prepared(const std::filesystem::path& dir, const GridGraph& graph,
                           const std::vector<HourStamp>& stamps);

// Per-hour model inputs with numeric features z-scored per channel over all
// grids and hours (constant channels become 0).
struct ScaledFeatures {
  std::vector<Eigen::MatrixXd> numeric;      // per hour [U x N]
  std::vector<Eigen::MatrixXi> categorical;  // per hour [V x N]
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  int n_hours() const { return static_cast<int>(numeric.size()); }
  // Window of hours t_end - tau + 1 .. t_end.
  WindowInput window(int t_end, int tau) const;
};

ScaledFeatures scale_features(const FeatureTensor& features);

struct LabelScale {
  double mean = 0.0;
  double scale = 1.0;

  double to_model(double y) const { return (y - mean) / scale; }
  double to_data(double z) const { return z * scale + mean; }
};

// Mean and population std over the given grids' finite labels.
LabelScale fit_label_scale(const Eigen::MatrixXd& labels, const std::vector<int>& grids);

GraphInputs make_graph_inputs(const GridGraph& graph, const AdjacencyPair& adjacency, const ModelConfig& config);

enum class PretextTask { kIdw, kKnn, kGraphCompletion, kNone };

// How one MTSTN run is wired; ablation variants map onto these switches.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  PretextTask pretext = PretextTask::kIdw;
  int pretext_knn_k = 3;
  double mask_rate = 0.15;
  bool od_identity = false;
  bool se_identity = false;
  int select_keep = 0;  // 0 disables importance-based feature selection
  std::uint64_t model_seed = 11;

  void validate() const;
};

// Drives one fold's MTSTN training through the generic optimizer.
class FoldTrainer : public Trainable {
 public:
  FoldTrainer(Mtstn& model, const PreparedData& data, const ScaledFeatures& scaled, const GraphInputs& graph,
              const Fold& fold, const ExperimentConfig& config);

  std::vector<Eigen::MatrixXd*> parameter_values() override;
  int sample_count() const override { return static_cast<int>(times_.size()); }
  double loss_and_gradient(int sample, std::vector<Eigen::MatrixXd>& grads) override;
  double validation_mae() override;
  void parameters_changed() override { model_.parameters_changed(); }

  const LabelScale& label_scale() const { return label_scale_; }
  TrainingSample make_sample(int t, std::uint64_t mask_stream) const;

 private:
  Mtstn& model_;
  const PreparedData& data_;
  const ScaledFeatures& scaled_;
  const GraphInputs& graph_;
  Fold fold_;
  ExperimentConfig config_;
  LabelScale label_scale_;
  Eigen::MatrixXd ss_labels_;  // [N x T] in model units (IDW / KNN pretext)
  std::vector<int> times_;
  std::uint64_t calls_ = 0;
};

// Supervised-head predictions in data units for every grid at hour t_end.
Eigen::VectorXd predict_hour(const Mtstn& model, const ScaledFeatures& scaled, const GraphInputs& graph,
                             const LabelScale& scale, int t_end);

// Input width of the pretext head for a configuration.
int pretext_width(const ExperimentConfig& config, const FeatureSchema& schema);

}  // namespace aqi
