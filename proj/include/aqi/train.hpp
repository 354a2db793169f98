#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqi/featurize.hpp"
#include "aqi/network.hpp"

namespace aqi {

enum class GradPenaltyMode { kFiniteDifference, kDoubleBackprop };

GradPenaltyMode parse_grad_penalty_mode(const std::string& name);
std::string to_string(GradPenaltyMode mode);

struct TrainConfig {
  double alpha_sup = 1.0;
  double alpha_ss = 0.5;
  double beta = 0.01;
  double gamma = 0.01;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 200;
  int patience = 10;
  int steps_per_epoch = 0;    // 0 = every training timestamp once per epoch
  int validation_stride = 1;  // evaluate every n-th validation timestamp
  std::uint64_t seed = 7;
  GradPenaltyMode grad_penalty_mode = GradPenaltyMode::kFiniteDifference;
  double penalty_step = 1e-3;  // in units of (standardized) feature std

  void validate() const;
};

double mae(std::span<const double> y, std::span<const double> y_hat);

// Per-channel L2 norms of input gradients flattened over (step, grid).
struct ChannelNorms {
  Eigen::VectorXd numeric;   // [U]
  Eigen::VectorXd embedded;  // [sum Q_j]
};
ChannelNorms channel_norms(const InputGradients& grads);

struct LossTerms {
  double sup = 0.0;
  double ss = 0.0;
  double penalty_num = 0.0;  // sum_i ||dL/dX_num^i||
  double penalty_cat = 0.0;  // sum_q ||dL/dX_cat^q||
  double total = 0.0;
};

// Multi-task objective: (1 - beta - gamma)(alpha_sup L_sup + alpha_ss L_ss)
// + beta * penalty_num + gamma * penalty_cat. `ss_pred` and `ss_target`
// may be empty (no self-supervised term).
LossTerms multitask_loss(std::span<const double> sup_pred, std::span<const double> sup_target,
                         std::span<const double> ss_pred, std::span<const double> ss_target,
                         const InputGradients& input_grads, const TrainConfig& cfg);

// Supervised labels of one window; `grids` index model outputs.
struct SupervisedTargets {
  std::vector<int> grids;
  std::vector<double> values;
};

// Self-supervised labels [d_ss x N]; only the columns in `grids` count, or
// every column when `grids` is empty.
struct SelfSupervisedTargets {
  Eigen::MatrixXd values;
  std::vector<int> grids;
};

struct TrainingSample {
  WindowInput input;
  SupervisedTargets sup;
  SelfSupervisedTargets ss;
};

// Loss of one sample under the multi-task objective; adds its parameter
// gradient to `grads`. The gradient-penalty part is differentiated by a
// central difference of parameter gradients along the normalized
// input-gradient direction.
LossTerms sample_loss_and_gradient(const Mtstn& model, const TrainingSample& sample, const GraphInputs& graph,
                                   const TrainConfig& cfg, Gradients& grads);

// Supervised MAE of one window and the gradient of that MAE with respect to
// the model inputs.
double supervised_input_gradient(const Mtstn& model, const WindowInput& input, const GraphInputs& graph,
                                 const SupervisedTargets& targets, InputGradients& input_grads);

// Anything the optimizer can drive: parameters, per-sample loss gradients
// and a validation metric.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual std::vector<Eigen::MatrixXd*> parameter_values() = 0;
  virtual int sample_count() const = 0;
  // Returns the loss of `sample` and adds its gradient into `grads`
  // (zeroed, shaped like parameter_values()).
  virtual double loss_and_gradient(int sample, std::vector<Eigen::MatrixXd>& grads) = 0;
  virtual double validation_mae() = 0;
  virtual void parameters_changed() {}
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_mae = 0.0;
  bool early_stopped = false;

  std::string to_csv() const;  // epoch,train_loss,val_mae
};

// Adam over shuffled samples, one step per sample. After each epoch the
// validation MAE decides early stopping; the best parameters are restored
// before returning. Throws kDivergence on a non-finite loss.
TrainLog train(Trainable& model, const TrainConfig& cfg);

struct ImportanceEntry {
  std::string feature;
  std::string kind;  // "numeric" or "categorical"
  double score = 0.0;
};

struct ImportanceReport {
  std::vector<ImportanceEntry> entries;  // schema order
  std::vector<int> ranking;              // indices into entries, best first
  std::string pollutant;
  std::uint64_t seed = 0;
  int windows = 0;

  int rank_of(const std::string& feature) const;  // 1-based
  std::string to_csv() const;                     // rank,feature,score,kind
};

struct ImportanceWindow {
  WindowInput input;
  SupervisedTargets targets;
};

// Gradient saliency of the supervised loss: the L2 norm of each input
// channel's gradient over all windows; categorical scores are the sum over
// their embedding dimensions divided by Q_j.
ImportanceReport feature_importance(const Mtstn& model, const FeatureSchema& schema, const GraphInputs& graph,
                                    std::span<const ImportanceWindow> windows);

// Ranks scores descending; ties keep schema order.
std::vector<int> rank_scores(std::span<const double> scores);

// Schema restricted to the `keep` best-ranked features, in schema order.
FeatureSchema select_features(const ImportanceReport& report, const FeatureSchema& schema, int keep);
// Schema restricted to features scoring at least `threshold` (never empty).
FeatureSchema select_features_above(const ImportanceReport& report, const FeatureSchema& schema, double threshold);

}  // namespace aqi
