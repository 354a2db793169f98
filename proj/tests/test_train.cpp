#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "aqi/train.hpp"
#include "support.hpp"

using namespace aqi;
using aqi::testing::code_of;
using aqi::testing::gaussian;
using aqi::testing::tiny_problem;
using Eigen::MatrixXd;

namespace {

std::vector<double> flat(const MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

InputGradients random_input_grads(int steps, int u, int q, int n, std::mt19937_64& rng) {
  InputGradients g;
  for (int s = 0; s < steps; ++s) {
    g.numeric.push_back(gaussian(u, n, rng));
    g.embedded.push_back(gaussian(q, n, rng));
  }
  return g;
}

// y = w x fitted by Adam on the absolute error.
class LinearLad : public Trainable {
 public:
  LinearLad(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)), w_(MatrixXd::Zero(1, 1)) {}
  std::vector<MatrixXd*> parameter_values() override { return {&w_}; }
  int sample_count() const override { return static_cast<int>(x_.size()); }
  double loss_and_gradient(int i, std::vector<MatrixXd>& grads) override {
    const double r = w_(0, 0) * x_[i] - y_[i];
    grads[0](0, 0) += (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) * x_[i];
    return std::abs(r);
  }
  double validation_mae() override { return lad(w_(0, 0)); }
  double lad(double w) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) s += std::abs(w * x_[i] - y_[i]);
    return s / static_cast<double>(x_.size());
  }
  double w() const { return w_(0, 0); }

 private:
  std::vector<double> x_, y_;
  MatrixXd w_;
};

// Validation follows a script; the parameter counts updates.
class Scripted : public Trainable {
 public:
  explicit Scripted(std::vector<double> val) : val_(std::move(val)), p_(MatrixXd::Zero(1, 1)) {}
  std::vector<MatrixXd*> parameter_values() override { return {&p_}; }
  int sample_count() const override { return 1; }
  double loss_and_gradient(int, std::vector<MatrixXd>& grads) override {
    grads[0](0, 0) = -1.0;
    return nan_loss ? NAN : 1.0;
  }
  double validation_mae() override { return val_[std::min(calls_++, val_.size() - 1)]; }
  double p() const { return p_(0, 0); }
  bool nan_loss = false;

 private:
  std::vector<double> val_;
  std::size_t calls_ = 0;
  MatrixXd p_;
};

TrainConfig plain(double alpha_ss = 0.0) {
  TrainConfig c;
  c.beta = 0.0;
  c.gamma = 0.0;
  c.alpha_ss = alpha_ss;
  return c;
}

}  // namespace

TEST_CASE("mae") {
  CHECK(mae(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(mae(std::vector<double>{0, 0}, std::vector<double>{1, -1}) == 1.0);
  CHECK(mae(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 3}) == 1.0);
  CHECK(code_of([] { mae(std::vector<double>{1}, std::vector<double>{1, 2}); }) == ErrorCode::kShape);
}

TEST_CASE("the multi-task loss collapses to MAE without penalties or self-supervision") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd y = gaussian(1, 9, rng), yh = gaussian(1, 9, rng);
    const MatrixXd s = gaussian(1, 9, rng), sh = gaussian(1, 9, rng);
    const InputGradients g = random_input_grads(3, 4, 2, 9, rng);
    const LossTerms t = multitask_loss(flat(yh), flat(y), flat(sh), flat(s), g, plain());
    CHECK(t.total == mae(flat(y), flat(yh)));
  }
}

TEST_CASE("perfect predictions without penalties give zero loss") {
  const std::vector<double> y{1.0, 2.0, 3.0};
  CHECK(multitask_loss(y, y, y, y, InputGradients{}, plain(0.5)).total == 0.0);
}

TEST_CASE("the multi-task loss matches a term-by-term evaluation") {
  std::mt19937_64 rng(2);
  TrainConfig cfg;
  cfg.alpha_sup = 1.3;
  cfg.alpha_ss = 0.4;
  cfg.beta = 0.07;
  cfg.gamma = 0.02;
  const MatrixXd y = gaussian(1, 6, rng), yh = gaussian(1, 6, rng);
  const MatrixXd s = gaussian(1, 6, rng), sh = gaussian(1, 6, rng);
  const InputGradients g = random_input_grads(2, 3, 4, 6, rng);
  double sup = 0.0, ss = 0.0;
  for (int i = 0; i < 6; ++i) {
    sup += std::abs(y(0, i) - yh(0, i)) / 6.0;
    ss += std::abs(s(0, i) - sh(0, i)) / 6.0;
  }
  double pen_num = 0.0, pen_cat = 0.0;
  for (int c = 0; c < 3; ++c) {
    double sq = 0.0;
    for (int step = 0; step < 2; ++step)
      for (int i = 0; i < 6; ++i) sq += g.numeric[step](c, i) * g.numeric[step](c, i);
    pen_num += std::sqrt(sq);
  }
  for (int c = 0; c < 4; ++c) {
    double sq = 0.0;
    for (int step = 0; step < 2; ++step)
      for (int i = 0; i < 6; ++i) sq += g.embedded[step](c, i) * g.embedded[step](c, i);
    pen_cat += std::sqrt(sq);
  }
  const double expected = (1 - 0.07 - 0.02) * (1.3 * sup + 0.4 * ss) + 0.07 * pen_num + 0.02 * pen_cat;
  const LossTerms t = multitask_loss(flat(yh), flat(y), flat(sh), flat(s), g, cfg);
  CHECK(t.penalty_num == doctest::Approx(pen_num).epsilon(1e-13));
  CHECK(t.penalty_cat == doctest::Approx(pen_cat).epsilon(1e-13));
  CHECK(t.total == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.beta = 0.6;
  c.gamma = 0.4;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidConfig);
  c = TrainConfig{};
  c.alpha_sup = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidConfig);
  c = TrainConfig{};
  c.grad_penalty_mode = GradPenaltyMode::kDoubleBackprop;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidConfig);
  c.beta = c.gamma = 0.0;
  c.validate();
  CHECK(parse_grad_penalty_mode("finite-difference") == GradPenaltyMode::kFiniteDifference);
}

TEST_CASE("sample gradients without penalties match finite differences of the loss") {
  auto p = tiny_problem(3, 4, 2);
  Mtstn m(p.config, p.dims, 5);
  TrainingSample sample{p.input, {{0, 2}, {0.7, -0.4}}, {MatrixXd::Constant(1, 4, 0.3), {}}};
  const TrainConfig cfg = plain(0.5);
  Gradients g = m.zero_gradients();
  const double base = sample_loss_and_gradient(m, sample, p.graph, cfg, g).total;
  CHECK(base > 0.0);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < m.parameters().size(); ++k) {
    MatrixXd& v = m.parameters()[k].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      Gradients scratch = m.zero_gradients();
      v.data()[i] = orig + h;
      m.parameters_changed();
      const double lp = sample_loss_and_gradient(m, sample, p.graph, cfg, scratch).total;
      v.data()[i] = orig - h;
      m.parameters_changed();
      const double lm = sample_loss_and_gradient(m, sample, p.graph, cfg, scratch).total;
      v.data()[i] = orig;
      m.parameters_changed();
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[k].data()[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[k].data()[i])));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("the penalty gradient agrees with finite differences of the penalized loss") {
  auto p = tiny_problem(4, 4, 2);
  Mtstn m(p.config, p.dims, 6);
  TrainingSample sample{p.input, {{1, 3}, {0.2, 0.9}}, {}};
  TrainConfig cfg = plain();
  cfg.beta = 0.3;
  cfg.gamma = 0.2;
  cfg.penalty_step = 1e-4;
  Gradients g = m.zero_gradients();
  const LossTerms t = sample_loss_and_gradient(m, sample, p.graph, cfg, g);
  CHECK(t.penalty_num > 0.0);
  CHECK(t.penalty_cat > 0.0);
  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < m.parameters().size(); ++k) {
    MatrixXd& v = m.parameters()[k].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      Gradients scratch = m.zero_gradients();
      v.data()[i] = orig + h;
      m.parameters_changed();
      const double lp = sample_loss_and_gradient(m, sample, p.graph, cfg, scratch).total;
      v.data()[i] = orig - h;
      m.parameters_changed();
      const double lm = sample_loss_and_gradient(m, sample, p.graph, cfg, scratch).total;
      v.data()[i] = orig;
      m.parameters_changed();
      const double fd = (lp - lm) / (2 * h);
      num += (fd - g[k].data()[i]) * (fd - g[k].data()[i]);
      den += fd * fd;
    }
  }
  CHECK(std::sqrt(num / den) <= 1e-4);
}

TEST_CASE("penalties vanish for a constant-output model") {
  auto p = tiny_problem(5, 4, 2);
  Mtstn m(p.config, p.dims, 7);
  m.parameter("supb.readout.W").value.setZero();
  m.parameters_changed();
  TrainingSample sample{p.input, {{0}, {1.0}}, {}};
  TrainConfig cfg = plain();
  cfg.beta = cfg.gamma = 0.1;
  Gradients g = m.zero_gradients();
  const LossTerms t = sample_loss_and_gradient(m, sample, p.graph, cfg, g);
  CHECK(t.penalty_num == 0.0);
  CHECK(t.penalty_cat == 0.0);
}

TEST_CASE("Adam on a one-parameter absolute-error fit reaches the LAD optimum") {
  std::mt19937_64 rng(8);
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(aqi::uniform(rng, 0.5, 3.0));
    y.push_back(2.0 * x.back() + aqi::uniform(rng, -0.5, 0.5));
  }
  LinearLad model(x, y);
  // LAD optimum by dense grid search.
  double best_w = 0.0, best = INFINITY;
  for (int k = 0; k <= 400000; ++k) {
    const double w = 1.0 + k * 2.5e-6;
    const double l = model.lad(w);
    if (l < best) {
      best = l;
      best_w = w;
    }
  }
  TrainConfig cfg = plain();
  cfg.learning_rate = 2e-3;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  const TrainLog log = train(model, cfg);
  CHECK(std::abs(model.w() - best_w) <= 1e-2);
  CHECK(log.best_val_mae == doctest::Approx(model.lad(model.w())));
}

TEST_CASE("a zero learning rate leaves parameters and validation unchanged") {
  std::vector<double> x{1, 2, 3}, y{2, 4, 7};
  LinearLad model(x, y);
  TrainConfig cfg = plain();
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 5;
  cfg.patience = 10;
  const TrainLog log = train(model, cfg);
  CHECK(model.w() == 0.0);
  for (const EpochRecord& r : log.epochs) CHECK(r.val_mae == log.epochs.front().val_mae);
}

TEST_CASE("patience 0 stops after the first non-improving epoch and restores the best") {
  Scripted model({3.0, 2.0, 2.5, 1.0});
  TrainConfig cfg = plain();
  cfg.learning_rate = 0.1;
  cfg.patience = 0;
  const TrainLog log = train(model, cfg);
  CHECK(log.epochs.size() == 3);
  CHECK(log.early_stopped);
  CHECK(log.best_epoch == 2);
  CHECK(log.best_val_mae == 2.0);
  // Two Adam steps of size lr from zero along +1.
  CHECK(model.p() == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(log.to_csv().rfind("epoch,train_loss,val_mae\n1,", 0) == 0);
}

TEST_CASE("a non-finite loss is a divergence") {
  Scripted model({1.0});
  model.nan_loss = true;
  CHECK(code_of([&] { train(model, plain()); }) == ErrorCode::kDivergence);
}

TEST_CASE("feature importance is zero on a disconnected feature and equal on duplicates") {
  auto p = tiny_problem(6, 4, 3);
  Mtstn m(p.config, p.dims, 9);
  const int half = p.config.d_t / 2;
  for (Parameter& par : m.parameters()) {
    if (par.name.rfind("lstm.", 0) != 0 || par.name.find(".W_") == std::string::npos) continue;
    par.value.col(half + 1) = par.value.col(half + 0);  // b duplicates a
    par.value.col(half + 2).setZero();                  // c is disconnected
  }
  m.parameters_changed();
  std::vector<ImportanceWindow> windows(2);
  for (int w = 0; w < 2; ++w) {
    auto q = tiny_problem(20 + w, 4, 3);
    for (auto& x : q.input.numeric) x.row(1) = x.row(0);
    windows[static_cast<std::size_t>(w)] = {q.input, {{0, 1, 3}, {0.5, -1.0, 2.0}}};
  }
  const ImportanceReport r = feature_importance(m, p.schema, p.graph, windows);
  REQUIRE(r.entries.size() == 4);
  CHECK(r.entries[2].score == 0.0);
  CHECK(r.entries[1].score == doctest::Approx(r.entries[0].score).epsilon(1e-12));
  CHECK(r.entries[3].kind == "categorical");
  for (const ImportanceEntry& e : r.entries) CHECK(e.score >= 0.0);
  CHECK(r.rank_of("c") == 4);
}

TEST_CASE("saliency matches finite-difference sensitivity of the supervised loss") {
  auto p = tiny_problem(7, 5, 2);
  Mtstn m(p.config, p.dims, 10);
  const SupervisedTargets targets{{0, 2, 4}, {0.3, -0.2, 1.1}};
  InputGradients g;
  supervised_input_gradient(m, p.input, p.graph, targets, g);
  auto sup_loss = [&](const WindowInput& x) {
    InputGradients unused;
    return supervised_input_gradient(m, x, p.graph, targets, unused);
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t s = 0; s < p.input.numeric.size(); ++s) {
    WindowInput x = p.input;
    for (Eigen::Index i = 0; i < x.numeric[s].size(); ++i) {
      const double orig = x.numeric[s].data()[i];
      x.numeric[s].data()[i] = orig + h;
      const double lp = sup_loss(x);
      x.numeric[s].data()[i] = orig - h;
      const double lm = sup_loss(x);
      x.numeric[s].data()[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = g.numeric[s].data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("feature importance rejects a non-finite model") {
  auto p = tiny_problem(8, 3, 2);
  Mtstn m(p.config, p.dims, 11);
  m.parameter("ssb.W1").value(0, 0) = NAN;
  const std::vector<ImportanceWindow> w{{p.input, {{0}, {1.0}}}};
  CHECK(code_of([&] { feature_importance(m, p.schema, p.graph, w); }) == ErrorCode::kInvalidModel);
}

TEST_CASE("ranking is descending, stable on ties and scale invariant") {
  const std::vector<double> s{0.5, 2.0, 0.5, 3.0, 0.0};
  CHECK(rank_scores(s) == std::vector<int>{3, 1, 0, 2, 4});
  std::vector<double> scaled;
  for (double v : s) scaled.push_back(v * 7.25);
  CHECK(rank_scores(scaled) == rank_scores(s));
}

TEST_CASE("feature selection keeps the top features in schema order") {
  FeatureSchema schema;
  schema.numeric_names = {"trend", "rep", "noise"};
  schema.categorical_names = {"hour_of_day", "day_of_week"};
  schema.cardinalities = {24, 7};
  schema.embed_dims = {8, 8};
  schema.adjacency_names = {"od_adjacency", "semantic_adjacency"};
  ImportanceReport r;
  r.entries = {{"trend", "numeric", 5.0}, {"rep", "numeric", 1.0}, {"noise", "numeric", 0.1},
               {"hour_of_day", "categorical", 2.0}, {"day_of_week", "categorical", 0.01}};
  std::vector<double> scores;
  for (const auto& e : r.entries) scores.push_back(e.score);
  r.ranking = rank_scores(scores);

  const FeatureSchema all = select_features(r, schema, 5);
  CHECK(all.numeric_names == schema.numeric_names);
  CHECK(all.categorical_names == schema.categorical_names);
  const FeatureSchema one = select_features(r, schema, 1);
  CHECK(one.numeric_names == std::vector<std::string>{"trend"});
  CHECK(one.categorical_names.empty());
  const FeatureSchema three = select_features(r, schema, 3);
  CHECK(three.numeric_names == std::vector<std::string>{"trend", "rep"});
  CHECK(three.categorical_names == std::vector<std::string>{"hour_of_day"});
  CHECK(three.cardinalities == std::vector<int>{24});
  CHECK(three.adjacency_names == schema.adjacency_names);
  CHECK(code_of([&] { select_features(r, schema, 6); }) == ErrorCode::kInvalidInput);
  CHECK(select_features_above(r, schema, 1.5).numeric_names == std::vector<std::string>{"trend"});
  CHECK(select_features_above(r, schema, 100.0).numeric_names == std::vector<std::string>{"trend"});
  CHECK(r.to_csv().rfind("rank,feature,score,kind\n1,trend,", 0) == 0);
}
