#include "aqi/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "aqi/csv.hpp"
#include "aqi/error.hpp"
#include "aqi/random.hpp"

namespace aqi {

using Eigen::MatrixXd;

GradPenaltyMode parse_grad_penalty_mode(const std::string& name) {
  if (name == "finite-difference") return GradPenaltyMode::kFiniteDifference;
  if (name == "double-backprop") return GradPenaltyMode::kDoubleBackprop;
  fail(ErrorCode::kInvalidConfig, "unknown grad_penalty_mode '" + name + "'");
}

std::string to_string(GradPenaltyMode mode) {
  return mode == GradPenaltyMode::kFiniteDifference ? "finite-difference" : "double-backprop";
}

void TrainConfig::validate() const {
  require(alpha_sup > 0.0 && std::isfinite(alpha_sup), ErrorCode::kInvalidConfig, "alpha_sup must be > 0");
  require(alpha_ss >= 0.0 && std::isfinite(alpha_ss), ErrorCode::kInvalidConfig, "alpha_ss must be >= 0");
  require(beta >= 0.0 && beta < 1.0 && gamma >= 0.0 && gamma < 1.0, ErrorCode::kInvalidConfig,
          "beta and gamma must lie in [0, 1)");
  require(beta + gamma < 1.0, ErrorCode::kInvalidConfig, "beta + gamma must be < 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidConfig,
          "learning_rate must be >= 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, ErrorCode::kInvalidConfig,
          "adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, ErrorCode::kInvalidConfig, "adam_eps must be > 0");
  require(max_epochs >= 1, ErrorCode::kInvalidConfig, "max_epochs must be >= 1");
  require(patience >= 0, ErrorCode::kInvalidConfig, "patience must be >= 0");
  require(steps_per_epoch >= 0, ErrorCode::kInvalidConfig, "steps_per_epoch must be >= 0");
  require(validation_stride >= 1, ErrorCode::kInvalidConfig, "validation_stride must be >= 1");
  require(penalty_step > 0.0, ErrorCode::kInvalidConfig, "penalty_step must be > 0");
  require(grad_penalty_mode == GradPenaltyMode::kFiniteDifference || (beta == 0.0 && gamma == 0.0),
          ErrorCode::kInvalidConfig, "double-backprop gradient penalty is not available in this build");
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
  require(y.size() == y_hat.size(), ErrorCode::kShape, "mae: length mismatch");
  require(!y.empty(), ErrorCode::kInvalidInput, "mae: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - y_hat[i]);
  return sum / static_cast<double>(y.size());
}

ChannelNorms channel_norms(const InputGradients& grads) {
  ChannelNorms out;
  const auto accumulate = [](const std::vector<MatrixXd>& blocks) {
    Eigen::VectorXd sq;
    for (const MatrixXd& b : blocks) {
      if (sq.size() == 0) sq = Eigen::VectorXd::Zero(b.rows());
      sq += b.rowwise().squaredNorm();
    }
    return Eigen::VectorXd(sq.cwiseSqrt());
  };
  out.numeric = accumulate(grads.numeric);
  out.embedded = accumulate(grads.embedded);
  return out;
}

LossTerms multitask_loss(std::span<const double> sup_pred, std::span<const double> sup_target,
                         std::span<const double> ss_pred, std::span<const double> ss_target,
                         const InputGradients& input_grads, const TrainConfig& cfg) {
  cfg.validate();
  LossTerms t;
  t.sup = mae(sup_target, sup_pred);
  require(ss_pred.size() == ss_target.size(), ErrorCode::kShape, "self-supervised length mismatch");
  if (!ss_pred.empty()) t.ss = mae(ss_target, ss_pred);
  const ChannelNorms norms = channel_norms(input_grads);
  t.penalty_num = norms.numeric.sum();
  t.penalty_cat = norms.embedded.sum();
  t.total = (1.0 - cfg.beta - cfg.gamma) * (cfg.alpha_sup * t.sup + cfg.alpha_ss * t.ss) + cfg.beta * t.penalty_num +
            cfg.gamma * t.penalty_cat;
  return t;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// MAE of the supervised head and its output gradient [d_sup x N].
double supervised_term(const ModelOutput& out, const SupervisedTargets& targets, MatrixXd& d_sup) {
  d_sup = MatrixXd::Zero(out.y_sup.rows(), out.y_sup.cols());
  if (targets.grids.empty()) return 0.0;
  require(targets.grids.size() == targets.values.size(), ErrorCode::kShape, "supervised targets are inconsistent");
  const double n = static_cast<double>(targets.grids.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < targets.grids.size(); ++k) {
    const int g = targets.grids[k];
    require(g >= 0 && g < out.y_sup.cols(), ErrorCode::kShape, "supervised target grid out of range");
    const double diff = out.y_sup(0, g) - targets.values[k];
    loss += std::abs(diff);
    d_sup(0, g) += sign(diff) / n;
  }
  return loss / n;
}

double self_supervised_term(const ModelOutput& out, const SelfSupervisedTargets& targets, MatrixXd& d_ss) {
  d_ss = MatrixXd::Zero(out.y_ss.rows(), out.y_ss.cols());
  if (out.y_ss.rows() == 0 || targets.values.size() == 0) return 0.0;
  require(targets.values.rows() == out.y_ss.rows() && targets.values.cols() == out.y_ss.cols(), ErrorCode::kShape,
          "self-supervised target shape mismatch");
  std::vector<int> cols = targets.grids;
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(out.y_ss.cols()));
    std::iota(cols.begin(), cols.end(), 0);
  }
  const double n = static_cast<double>(cols.size()) * static_cast<double>(out.y_ss.rows());
  double loss = 0.0;
  for (int c : cols) {
    for (Eigen::Index r = 0; r < out.y_ss.rows(); ++r) {
      const double diff = out.y_ss(r, c) - targets.values(r, c);
      loss += std::abs(diff);
      d_ss(r, c) = sign(diff) / n;
    }
  }
  return loss / n;
}

void add_scaled(Gradients& into, const Gradients& from, double scale) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += scale * from[i];
}

}  // namespace

double supervised_input_gradient(const Mtstn& model, const WindowInput& input, const GraphInputs& graph,
                                 const SupervisedTargets& targets, InputGradients& input_grads) {
  HiddenState state;
  const ModelOutput out = model.forward(input, graph, state);
  MatrixXd d_sup;
  const double loss = supervised_term(out, targets, d_sup);
  Gradients scratch = model.zero_gradients();
  model.backward(state, d_sup, MatrixXd::Zero(out.y_ss.rows(), out.y_ss.cols()), scratch, &input_grads);
  return loss;
}

LossTerms sample_loss_and_gradient(const Mtstn& model, const TrainingSample& sample, const GraphInputs& graph,
                                   const TrainConfig& cfg, Gradients& grads) {
  const double task_weight = 1.0 - cfg.beta - cfg.gamma;
  HiddenState state;
  const ModelOutput out = model.forward(sample.input, graph, state);
  LossTerms t;
  MatrixXd d_sup, d_ss;
  t.sup = supervised_term(out, sample.sup, d_sup);
  t.ss = cfg.alpha_ss > 0.0 ? self_supervised_term(out, sample.ss, d_ss) : 0.0;
  if (cfg.alpha_ss <= 0.0) d_ss = MatrixXd::Zero(out.y_ss.rows(), out.y_ss.cols());
  const MatrixXd zero_ss = MatrixXd::Zero(out.y_ss.rows(), out.y_ss.cols());

  const bool penalize = (cfg.beta > 0.0 || cfg.gamma > 0.0) && !sample.sup.grids.empty();
  if (!penalize) {
    model.backward(state, task_weight * cfg.alpha_sup * d_sup, task_weight * cfg.alpha_ss * d_ss, grads);
    t.total = task_weight * (cfg.alpha_sup * t.sup + cfg.alpha_ss * t.ss);
    return t;
  }
  if (cfg.grad_penalty_mode != GradPenaltyMode::kFiniteDifference)
    fail(ErrorCode::kInvalidConfig, "double-backprop gradient penalty is not available in this build");

  InputGradients g;
  Gradients sup_grads = model.zero_gradients();
  model.backward(state, d_sup, zero_ss, sup_grads, &g);
  add_scaled(grads, sup_grads, task_weight * cfg.alpha_sup);
  if (cfg.alpha_ss > 0.0 && out.y_ss.rows() > 0)
    model.backward(state, MatrixXd::Zero(d_sup.rows(), d_sup.cols()), task_weight * cfg.alpha_ss * d_ss, grads);

  const ChannelNorms norms = channel_norms(g);
  t.penalty_num = norms.numeric.sum();
  t.penalty_cat = norms.embedded.sum();
  t.total = task_weight * (cfg.alpha_sup * t.sup + cfg.alpha_ss * t.ss) + cfg.beta * t.penalty_num +
            cfg.gamma * t.penalty_cat;

  // d/dtheta sum_i w_i ||g_i|| = d/dtheta <D, g> with D_i = w_i g_i / ||g_i||,
  // i.e. a Hessian-vector product, taken as a central difference of the
  // parameter gradient along D.
  InputPerturbation direction;
  const std::size_t steps = g.numeric.size();
  direction.numeric.resize(steps);
  direction.embedded.resize(steps);
  Eigen::VectorXd w_num = Eigen::VectorXd::Zero(norms.numeric.size());
  Eigen::VectorXd w_emb = Eigen::VectorXd::Zero(norms.embedded.size());
  for (Eigen::Index i = 0; i < w_num.size(); ++i)
    if (norms.numeric(i) > 0.0) w_num(i) = cfg.beta / norms.numeric(i);
  for (Eigen::Index i = 0; i < w_emb.size(); ++i)
    if (norms.embedded(i) > 0.0) w_emb(i) = cfg.gamma / norms.embedded(i);
  double sq = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    direction.numeric[s] = w_num.asDiagonal() * g.numeric[s];
    direction.embedded[s] = w_emb.asDiagonal() * g.embedded[s];
    sq += direction.numeric[s].squaredNorm() + direction.embedded[s].squaredNorm();
  }
  const double length = std::sqrt(sq);
  if (length == 0.0) return t;
  const double h = cfg.penalty_step;
  for (std::size_t s = 0; s < steps; ++s) {
    direction.numeric[s] *= h / length;
    direction.embedded[s] *= h / length;
  }
  Gradients plus = model.zero_gradients();
  Gradients minus = model.zero_gradients();
  for (int side = 0; side < 2; ++side) {
    HiddenState shifted;
    const ModelOutput o = model.forward(sample.input, graph, shifted, &direction);
    MatrixXd d;
    supervised_term(o, sample.sup, d);
    model.backward(shifted, d, zero_ss, side == 0 ? plus : minus);
    for (std::size_t s = 0; s < steps; ++s) {
      direction.numeric[s] = -direction.numeric[s];
      direction.embedded[s] = -direction.embedded[s];
    }
  }
  const double scale = length / (2.0 * h);
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += scale * (plus[i] - minus[i]);
  return t;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_mae\n";
  for (const EpochRecord& r : epochs)
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_mae) << '\n';
  return os.str();
}

TrainLog train(Trainable& model, const TrainConfig& cfg) {
  cfg.validate();
  const int n_samples = model.sample_count();
  require(n_samples >= 1, ErrorCode::kInsufficientLabels, "no training samples");
  std::vector<MatrixXd*> params = model.parameter_values();
  std::vector<MatrixXd> m, v, grads, best;
  for (MatrixXd* p : params) {
    m.push_back(MatrixXd::Zero(p->rows(), p->cols()));
    v.push_back(MatrixXd::Zero(p->rows(), p->cols()));
    grads.push_back(MatrixXd::Zero(p->rows(), p->cols()));
    best.push_back(*p);
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(static_cast<std::size_t>(n_samples));
  const int per_epoch = cfg.steps_per_epoch > 0 ? std::min(cfg.steps_per_epoch, n_samples) : n_samples;
  long long step = 0;
  int since_best = 0;
  TrainLog log;
  log.best_val_mae = INFINITY;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double total = 0.0;
    for (int k = 0; k < per_epoch; ++k) {
      for (MatrixXd& g : grads) g.setZero();
      const double loss = model.loss_and_gradient(order[static_cast<std::size_t>(k)], grads);
      if (!std::isfinite(loss))
        fail(ErrorCode::kDivergence, "non-finite training loss at epoch " + std::to_string(epoch));
      total += loss;
      ++step;
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grads[i];
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grads[i].cwiseAbs2();
        params[i]->array() -=
            cfg.learning_rate * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + cfg.adam_eps);
      }
      model.parameters_changed();
    }
    for (MatrixXd* p : params)
      if (!p->allFinite()) fail(ErrorCode::kDivergence, "non-finite parameters at epoch " + std::to_string(epoch));
    const double val = model.validation_mae();
    if (!std::isfinite(val))
      fail(ErrorCode::kDivergence, "non-finite validation MAE at epoch " + std::to_string(epoch));
    log.epochs.push_back({epoch, total / per_epoch, val});
    if (val < log.best_val_mae) {
      log.best_val_mae = val;
      log.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = *params[i];
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      log.early_stopped = true;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = best[i];
  model.parameters_changed();
  return log;
}

int ImportanceReport::rank_of(const std::string& feature) const {
  for (std::size_t r = 0; r < ranking.size(); ++r)
    if (entries[static_cast<std::size_t>(ranking[r])].feature == feature) return static_cast<int>(r) + 1;
  fail(ErrorCode::kInvalidInput, "feature '" + feature + "' not in importance report");
}

std::string ImportanceReport::to_csv() const {
  std::ostringstream os;
  os << "rank,feature,score,kind\n";
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const ImportanceEntry& e = entries[static_cast<std::size_t>(ranking[r])];
    os << r + 1 << ',' << e.feature << ',' << format_double(e.score) << ',' << e.kind << '\n';
  }
  return os.str();
}

std::vector<int> rank_scores(std::span<const double> scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return idx;
}

ImportanceReport feature_importance(const Mtstn& model, const FeatureSchema& schema, const GraphInputs& graph,
                                    std::span<const ImportanceWindow> windows) {
  if (!model.finite()) fail(ErrorCode::kInvalidModel, "model parameters are not finite");
  require(!windows.empty(), ErrorCode::kInvalidInput, "feature importance needs at least one window");
  const FeatureDims& dims = model.dims();
  require(schema.numeric_count() == dims.numeric && schema.embed_dims == dims.embed_dims, ErrorCode::kSchema,
          "schema does not match the model");
  Eigen::VectorXd sq_num = Eigen::VectorXd::Zero(dims.numeric);
  Eigen::VectorXd sq_emb = Eigen::VectorXd::Zero(dims.embedded_width());
  for (const ImportanceWindow& w : windows) {
    InputGradients g;
    supervised_input_gradient(model, w.input, graph, w.targets, g);
    for (std::size_t s = 0; s < g.numeric.size(); ++s) {
      sq_num += g.numeric[s].rowwise().squaredNorm();
      sq_emb += g.embedded[s].rowwise().squaredNorm();
    }
  }
  ImportanceReport report;
  report.windows = static_cast<int>(windows.size());
  for (int i = 0; i < dims.numeric; ++i)
    report.entries.push_back({schema.numeric_names[static_cast<std::size_t>(i)], "numeric", std::sqrt(sq_num(i))});
  int offset = 0;
  for (std::size_t j = 0; j < dims.embed_dims.size(); ++j) {
    const int q = dims.embed_dims[j];
    double sum = 0.0;
    for (int k = 0; k < q; ++k) sum += std::sqrt(sq_emb(offset + k));
    report.entries.push_back({schema.categorical_names[j], "categorical", sum / q});
    offset += q;
  }
  std::vector<double> scores;
  for (const ImportanceEntry& e : report.entries) scores.push_back(e.score);
  report.ranking = rank_scores(scores);
  return report;
}

namespace {

FeatureSchema restrict_schema(const FeatureSchema& schema, const std::vector<std::string>& kept) {
  const auto keeps = [&](const std::string& name) { return std::find(kept.begin(), kept.end(), name) != kept.end(); };
  FeatureSchema out;
  out.adjacency_names = schema.adjacency_names;
  for (const std::string& name : schema.numeric_names)
    if (keeps(name)) out.numeric_names.push_back(name);
  for (std::size_t j = 0; j < schema.categorical_names.size(); ++j) {
    if (!keeps(schema.categorical_names[j])) continue;
    out.categorical_names.push_back(schema.categorical_names[j]);
    out.cardinalities.push_back(schema.cardinalities[j]);
    out.embed_dims.push_back(schema.embed_dims[j]);
  }
  return out;
}

}  // namespace

FeatureSchema select_features(const ImportanceReport& report, const FeatureSchema& schema, int keep) {
  require(keep >= 1, ErrorCode::kInvalidInput, "keep must be >= 1");
  require(static_cast<std::size_t>(keep) <= report.entries.size(), ErrorCode::kInvalidInput,
          "keep exceeds the number of available features");
  std::vector<std::string> kept;
  for (int r = 0; r < keep; ++r) kept.push_back(report.entries[static_cast<std::size_t>(report.ranking[r])].feature);
  return restrict_schema(schema, kept);
}

FeatureSchema select_features_above(const ImportanceReport& report, const FeatureSchema& schema, double threshold) {
  require(!report.ranking.empty(), ErrorCode::kInvalidInput, "empty importance report");
  std::vector<std::string> kept;
  for (int idx : report.ranking) {
    const ImportanceEntry& e = report.entries[static_cast<std::size_t>(idx)];
    if (e.score >= threshold || kept.empty()) kept.push_back(e.feature);
  }
  return restrict_schema(schema, kept);
}

}  // namespace aqi
