// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. `acceptance 3 5` runs only criteria 3 and 5.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aqi/checkpoint.hpp"
#include "aqi/config.hpp"
#include "aqi/csv.hpp"
#include "aqi/decompose.hpp"
#include "aqi/evaluate.hpp"
#include "aqi/interpolate.hpp"
#include "aqi/network.hpp"
#include "aqi/random.hpp"
#include "aqi/synthcity.hpp"
#include "aqi/train.hpp"

using namespace aqi;
using Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetS = 120.0;
constexpr double kLossTol = 1e-12;
constexpr double kStlTol = 1e-9;
constexpr double kIdwTol = 1e-12;
constexpr double kHaversineTolKm = 1e-3;
constexpr double kAttentionTol = 1e-12;
constexpr double kBenchmarkMargin = 0.10;
constexpr double kBenchmarkBudgetS = 30.0 * 60.0;

// Pinned seed sets.
constexpr std::uint64_t kBenchmarkSeeds[] = {1, 2, 3};
constexpr std::uint64_t kMissingSeeds[] = {1, 2};
constexpr std::uint64_t kImportanceSeeds[] = {1, 2, 3};

// Experiment settings for the synthetic checks; the same values ship as
// configs/benchmark.json.
constexpr const char* kBenchmarkConfig = R"({
  "features": {"semantic_k": 40},
  "model": {"d_t": 32, "tau": 6, "heads_od": 2, "heads_se": 1, "heads_sup": 1},
  "train": {"max_epochs": 40, "steps_per_epoch": 64, "validation_stride": 8, "learning_rate": 0.001,
            "patience": 10, "beta": 0.0, "gamma": 0.0}
})";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

// Random directed graph with self-loops, so no neighborhood is empty.
NeighborList random_graph(int n, double density, std::mt19937_64& rng) {
  Adjacency a = Adjacency::identity(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && uniform(rng, 0.0, 1.0) < density) a.set(i, j);
  return NeighborList::from(a);
}

struct Instance {
  ModelConfig config;
  FeatureDims dims;
  WindowInput input;
  GraphInputs graph;
  MatrixXd w_sup, w_ss;  // loss = <w_sup, y_sup> + <w_ss, y_ss>
};

// Every dimension is at most 8.
Instance random_instance(std::uint64_t seed, int n, int tau) {
  std::mt19937_64 rng(seed);
  Instance s;
  s.config.d_p = 2 + 2 * static_cast<int>(uniform_index(rng, 2));
  s.config.d_t = 2 + 2 * static_cast<int>(uniform_index(rng, 3));
  s.config.heads_od = 1 + static_cast<int>(uniform_index(rng, 2));
  s.config.heads_se = 1 + static_cast<int>(uniform_index(rng, 2));
  s.config.heads_sup = 1 + static_cast<int>(uniform_index(rng, 2));
  s.config.head_dim = 2 + static_cast<int>(uniform_index(rng, 3));
  s.config.ss_hidden = 2 + static_cast<int>(uniform_index(rng, 3));
  s.config.tau = tau;
  const int numeric = 2 + static_cast<int>(uniform_index(rng, 3));
  s.dims.numeric = numeric;
  s.dims.categorical_names = {"hour", "weekday"};
  s.dims.cardinalities = {5, 3};
  s.dims.embed_dims = {2, 1 + static_cast<int>(uniform_index(rng, 2))};
  for (int t = 0; t < tau; ++t) {
    s.input.numeric.push_back(gaussian(numeric, n, rng));
    Eigen::MatrixXi codes(2, n);
    for (int i = 0; i < n; ++i) {
      codes(0, i) = static_cast<int>(uniform_index(rng, 5));
      codes(1, i) = static_cast<int>(uniform_index(rng, 3));
    }
    s.input.categorical.push_back(codes);
  }
  s.graph.positional = gaussian(2 * s.config.d_p, n, rng);
  s.graph.od = random_graph(n, 0.5, rng);
  s.graph.se = random_graph(n, 0.4, rng);
  s.w_sup = gaussian(1, n, rng);
  s.w_ss = gaussian(1, n, rng);
  return s;
}

double probe_loss(const Mtstn& m, const Instance& s, const WindowInput& input,
                  const InputPerturbation* pert = nullptr) {
  HiddenState state;
  const ModelOutput out = m.forward(input, s.graph, state, pert);
  return out.y_sup.cwiseProduct(s.w_sup).sum() + out.y_ss.cwiseProduct(s.w_ss).sum();
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
}

// Worst relative error over every parameter, numeric input and embedded input.
double worst_gradient_error(std::uint64_t seed, int n, int tau) {
  const Instance s = random_instance(seed, n, tau);
  Mtstn m(s.config, s.dims, seed * 7919 + 1);
  HiddenState state;
  m.forward(s.input, s.graph, state);
  Gradients grads = m.zero_gradients();
  InputGradients in_grads;
  m.backward(state, s.w_sup, s.w_ss, grads, &in_grads);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t p = 0; p < m.parameters().size(); ++p) {
    MatrixXd& v = m.parameters()[p].value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + h;
      m.parameters_changed();
      const double lp = probe_loss(m, s, s.input);
      v.data()[i] = orig - h;
      m.parameters_changed();
      const double lm = probe_loss(m, s, s.input);
      v.data()[i] = orig;
      m.parameters_changed();
      worst = std::max(worst, rel_error(grads[p].data()[i], (lp - lm) / (2 * h)));
    }
  }
  WindowInput x = s.input;
  for (int t = 0; t < tau; ++t)
    for (Eigen::Index i = 0; i < x.numeric[t].size(); ++i) {
      const double orig = x.numeric[t].data()[i];
      x.numeric[t].data()[i] = orig + h;
      const double lp = probe_loss(m, s, x);
      x.numeric[t].data()[i] = orig - h;
      const double lm = probe_loss(m, s, x);
      x.numeric[t].data()[i] = orig;
      worst = std::max(worst, rel_error(in_grads.numeric[t].data()[i], (lp - lm) / (2 * h)));
    }
  InputPerturbation pert;
  const int embedded = std::accumulate(s.dims.embed_dims.begin(), s.dims.embed_dims.end(), 0);
  for (int t = 0; t < tau; ++t) {
    pert.numeric.push_back(MatrixXd::Zero(s.dims.numeric, n));
    pert.embedded.push_back(MatrixXd::Zero(embedded, n));
  }
  for (int t = 0; t < tau; ++t)
    for (Eigen::Index i = 0; i < pert.embedded[t].size(); ++i) {
      pert.embedded[t].data()[i] = h;
      const double lp = probe_loss(m, s, s.input, &pert);
      pert.embedded[t].data()[i] = -h;
      const double lm = probe_loss(m, s, s.input, &pert);
      pert.embedded[t].data()[i] = 0.0;
      worst = std::max(worst, rel_error(in_grads.embedded[t].data()[i], (lp - lm) / (2 * h)));
    }
  return worst;
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const int instances = 30;
  for (int seed = 1; seed <= instances; ++seed) {
    const int n = 2 + seed % 4;    // 2..5
    const int tau = 1 + seed % 4;  // 1..4
    worst = std::max(worst, worst_gradient_error(static_cast<std::uint64_t>(seed), n, tau));
  }
  const double elapsed = seconds_since(t0);
  return {worst <= kGradTol && elapsed <= kGradBudgetS,
          fmt("%d instances, max rel err %.3g (tol %.0e), %.1f s (budget %.0f s)", instances, worst, kGradTol,
              elapsed, kGradBudgetS)};
}

Outcome criterion_loss_degeneration() {
  std::mt19937_64 rng(12);
  TrainConfig cfg;
  cfg.alpha_sup = 1.0;
  cfg.alpha_ss = 0.0;
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  double worst = 0.0;
  for (int fixture = 0; fixture < 50; ++fixture) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 40));
    std::vector<double> y(n), y_hat(n), ss(n), ss_hat(n);
    for (int i = 0; i < n; ++i) {
      y[i] = uniform(rng, 0.0, 150.0);
      y_hat[i] = y[i] + 20.0 * standard_normal(rng);
      ss[i] = uniform(rng, 0.0, 150.0);
      ss_hat[i] = uniform(rng, 0.0, 150.0);
    }
    InputGradients g;
    g.numeric.push_back(gaussian(3, n, rng));
    g.embedded.push_back(gaussian(2, n, rng));
    double oracle = 0.0;
    for (int i = 0; i < n; ++i) oracle += std::abs(y[i] - y_hat[i]);
    oracle /= n;
    const LossTerms with_ss = multitask_loss(y_hat, y, ss_hat, ss, g, cfg);
    const LossTerms without_ss = multitask_loss(y_hat, y, {}, {}, g, cfg);
    worst = std::max({worst, std::abs(with_ss.total - oracle), std::abs(without_ss.total - oracle)});
  }
  return {worst <= kLossTol, fmt("50 fixtures, max |L - MAE| %.3g (tol %.0e)", worst, kLossTol)};
}

double reconstruction_error(const std::vector<double>& y, const Decomposition& d) {
  double worst = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t)
    worst = std::max(worst, std::abs(d.trend[t] + d.seasonal[t] + d.residual[t] - y[t]));
  return worst;
}

Outcome criterion_stl() {
  double recon = 0.0;
  std::mt19937_64 rng(31);
  for (int c = 0; c < 40; ++c) {
    const int n = 48 + static_cast<int>(uniform_index(rng, 400));
    std::vector<double> y(static_cast<std::size_t>(n));
    double level = uniform(rng, 0.0, 80.0);
    for (int t = 0; t < n; ++t) {
      level += standard_normal(rng);
      y[static_cast<std::size_t>(t)] = level + 10.0 * std::sin(2.0 * kPi * t / 24.0) + 3.0 * standard_normal(rng);
    }
    StlOptions o;
    o.robust_iterations = static_cast<int>(uniform_index(rng, 3));
    o.center_seasonal = c % 2 == 0;
    recon = std::max(recon, reconstruction_error(y, stl_decompose(y, o)));
  }

  const std::vector<double> flat(96, 7.25);
  const Decomposition dc = stl_decompose(flat);
  recon = std::max(recon, reconstruction_error(flat, dc));
  double constant_err = 0.0;
  for (std::size_t t = 0; t < flat.size(); ++t)
    constant_err = std::max({constant_err, std::abs(dc.trend[t] - 7.25), std::abs(dc.seasonal[t]), std::abs(dc.residual[t])});

  std::vector<double> ramp;
  for (int t = 0; t < 96; ++t) ramp.push_back(0.1 * t + std::sin(2.0 * kPi * t / 24.0));
  const Decomposition dr = stl_decompose(ramp);
  recon = std::max(recon, reconstruction_error(ramp, dr));
  double trend_err = 0.0, amplitude = 0.0;
  for (int t = 0; t < 96; ++t) {
    trend_err = std::max(trend_err, std::abs(dr.trend[static_cast<std::size_t>(t)] - 0.1 * t));
    amplitude = std::max(amplitude, std::abs(dr.seasonal[static_cast<std::size_t>(t)]));
  }
  const bool pass = recon <= kStlTol && constant_err <= 1e-12 && trend_err <= 1e-6 && std::abs(amplitude - 1.0) <= 0.05;
  return {pass, fmt("reconstruction %.3g (tol %.0e); constant %.3g; ramp trend %.3g (tol 1e-6); "
                    "sinusoid amplitude %.4f (1 +- 0.05)",
                    recon, kStlTol, constant_err, trend_err, amplitude)};
}

Outcome criterion_interpolation() {
  std::mt19937_64 rng(2024);
  double worst = 0.0, weight_sum = 0.0, bounds = 0.0;
  for (int config = 0; config < 100; ++config) {
    const int n_ctx = 1 + static_cast<int>(uniform_index(rng, 12));
    const double p = uniform(rng, 0.5, 4.0);
    std::vector<ContextPoint> ctx;
    std::vector<LatLon> pos;
    for (int c = 0; c < n_ctx; ++c) {
      ctx.push_back({{deg_to_rad(uniform(rng, 30.5, 30.8)), deg_to_rad(uniform(rng, 103.9, 104.2))},
                     uniform(rng, 0.0, 120.0), c});
      pos.push_back(ctx.back().pos);
    }
    double lo = 1e300, hi = -1e300;
    for (const ContextPoint& c : ctx) {
      lo = std::min(lo, c.value);
      hi = std::max(hi, c.value);
    }
    std::vector<LatLon> targets;
    for (int t = 0; t < 8; ++t)
      targets.push_back({deg_to_rad(uniform(rng, 30.5, 30.8)), deg_to_rad(uniform(rng, 103.9, 104.2))});
    const std::vector<double> got = idw(targets, ctx, p);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      double num = 0.0, den = 0.0;
      for (const ContextPoint& c : ctx) {
        const double w = 1.0 / std::pow(haversine_km(targets[t], c.pos), p);
        num += w * c.value;
        den += w;
      }
      worst = std::max(worst, std::abs(got[t] - num / den));
      const std::vector<double> w = idw_weights(targets[t], pos, p);
      weight_sum = std::max(weight_sum, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
      bounds = std::max({bounds, lo - got[t], got[t] - hi});
    }
  }
  const double antipode = std::abs(haversine_km({0.0, 0.0}, {0.0, kPi}) - kPi * 6371.0);
  const double degree = std::abs(haversine_km({0.0, 0.0}, {0.0, kPi / 180.0}) - kPi * 6371.0 / 180.0);
  const bool pass = worst <= kIdwTol && weight_sum <= 1e-12 && bounds <= 1e-12 && antipode <= kHaversineTolKm &&
                    degree <= kHaversineTolKm;
  return {pass, fmt("100 configs, max |idw - brute| %.3g (tol %.0e), |sum w - 1| %.3g, bound excess %.3g, "
                    "antipode err %.3g km, degree err %.3g km (tol %.0e)",
                    worst, kIdwTol, weight_sum, bounds, antipode, degree, kHaversineTolKm)};
}

double row_sum_error(const nn::GatCache& cache, const NeighborList& nb) {
  double worst = 0.0;
  for (const nn::GatHeadCache& head : cache.heads)
    for (int i = 0; i < nb.size(); ++i) {
      double sum = 0.0;
      for (int e = nb.offsets[i]; e < nb.offsets[i + 1]; ++e) sum += head.alpha[static_cast<std::size_t>(e)];
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  return worst;
}

Outcome criterion_attention() {
  double worst = 0.0;
  int rows = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 500);
    const int n = 3 + static_cast<int>(uniform_index(rng, 30));
    Instance s = random_instance(static_cast<std::uint64_t>(seed) + 500, n, 2);
    // Larger scores stress the softmax.
    Mtstn m(s.config, s.dims, static_cast<std::uint64_t>(seed));
    for (Parameter& p : m.parameters())
      if (p.name.find(".a_") != std::string::npos) p.value *= 5.0;
    m.parameters_changed();
    HiddenState state;
    m.forward(s.input, s.graph, state);
    worst = std::max({worst, row_sum_error(state.od, state.od_neighbors), row_sum_error(state.se, state.se_neighbors),
                      row_sum_error(state.sup, state.se_neighbors)});
    rows += n * (s.config.heads_od + s.config.heads_se + s.config.heads_sup);
  }
  return {worst <= kAttentionTol, fmt("%d rows across blocks and heads, max |sum - 1| %.3g (tol %.0e)", rows, worst,
                                      kAttentionTol)};
}

RunConfig benchmark_config(std::uint64_t seed) {
  RunConfig c = parse_run_config(kBenchmarkConfig);
  c.synth.seed = seed;
  c.split_seed = seed;
  c.experiment.model_seed = seed;
  c.experiment.train.seed = seed;
  c.evaluation.corruption_seed = seed;
  return c;
}

Outcome criterion_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  double full = 0.0, wo_sst = 0.0, idw_mae = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : kBenchmarkSeeds) {
    const RunConfig c = benchmark_config(seed);
    const DatasetBundle bundle = generate(c.synth);
    const PreparedData data = prepare_data(bundle, c.pollutant, c.features, c.split_seed);
    const double f = run_ablation(AblationVariant::kFull, data, c.experiment).average.mae;
    const double w = run_ablation(AblationVariant::kWoSst, data, c.experiment).average.mae;
    const double i = run_baseline(Baseline::kIdw, data, c.experiment.model.tau - 1, c.evaluation.knn_k,
                                  c.features.idw_power)
                         .mae;
    per_seed += fmt(" [seed %llu: mtstn %.3f wo_sst %.3f idw %.3f]", static_cast<unsigned long long>(seed), f, w, i);
    full += f;
    wo_sst += w;
    idw_mae += i;
  }
  const double k = static_cast<double>(std::size(kBenchmarkSeeds));
  full /= k;
  wo_sst /= k;
  idw_mae /= k;
  const double elapsed = seconds_since(t0);
  const bool pass = full <= (1.0 - kBenchmarkMargin) * idw_mae && full <= wo_sst && elapsed <= kBenchmarkBudgetS;
  return {pass, fmt("mean test MAE mtstn %.3f, wo_sst %.3f, idw %.3f (mtstn/idw %.3f, need <= %.2f); %.0f s "
                    "(budget %.0f s);",
                    full, wo_sst, idw_mae, full / idw_mae, 1.0 - kBenchmarkMargin, elapsed, kBenchmarkBudgetS) +
                    per_seed};
}

Outcome criterion_missing_ratio() {
  const std::vector<double> ratios{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  double low = 0.0, high = 0.0;
  bool complete = true;
  std::string per_seed;
  for (std::uint64_t seed : kMissingSeeds) {
    RunConfig c = benchmark_config(seed);
    c.experiment.train.max_epochs = 15;
    c.experiment.train.steps_per_epoch = 48;
    const DatasetBundle bundle = generate(c.synth);
    const auto rows = missing_ratio_study(bundle, c.pollutant, c.features, c.split_seed, ratios, c.experiment,
                                          c.evaluation.corruption_seed);
    complete = complete && rows.size() == ratios.size();
    per_seed += fmt(" [seed %llu:", static_cast<unsigned long long>(seed));
    for (const MissingRatioRow& r : rows) {
      complete = complete && std::isfinite(r.metrics.mae);
      per_seed += fmt(" %.1f->%.3f", r.ratio, r.metrics.mae);
    }
    per_seed += "]";
    low += rows.front().metrics.mae;
    high += rows.back().metrics.mae;
  }
  const double k = static_cast<double>(std::size(kMissingSeeds));
  low /= k;
  high /= k;
  return {complete && high >= low,
          fmt("ratios 0.2..0.7 %s; mean MAE at 0.2 %.3f, at 0.7 %.3f;", complete ? "complete" : "incomplete", low,
              high) +
              per_seed};
}

Outcome criterion_importance() {
  int worst_noise = 1 << 30, worst_trend = 0;
  std::string per_seed;
  for (std::uint64_t seed : kImportanceSeeds) {
    RunConfig c = benchmark_config(seed);
    c.synth.noise_feature = true;
    const DatasetBundle bundle = generate(c.synth);
    const PreparedData data = prepare_data(bundle, c.pollutant, c.features, c.split_seed);
    const TrainedFold fold = train_fold(data, c.experiment, 0);
    const ImportanceReport report = fold_importance(fold, data, c.experiment, c.evaluation.importance_stride);
    const int noise = report.rank_of("noise");
    const int trend = report.rank_of("trend");
    worst_noise = std::min(worst_noise, noise);
    worst_trend = std::max(worst_trend, trend);
    per_seed += fmt(" [seed %llu: noise #%d, trend #%d of %zu]", static_cast<unsigned long long>(seed), noise, trend,
                    report.entries.size());
  }
  return {worst_noise > 3 && worst_trend <= 5,
          fmt("best noise rank %d (need > 3), worst trend rank %d (need <= 5);", worst_noise, worst_trend) + per_seed};
}

std::string slurp_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream all;
  for (const fs::path& f : files) {
    std::ifstream in(f, std::ios::binary);
    all << f.filename().string() << '\n' << in.rdbuf();
  }
  return all.str();
}

// Synthesis, features, training, checkpointing and scoring into `out`.
void reference_run(const fs::path& out) {
  RunConfig c = parse_run_config(R"({
    "synth": {"n_rows": 8, "n_cols": 8, "hours": 96, "n_ss": 12, "n_ms": 20},
    "features": {"semantic_k": 4},
    "model": {"d_t": 6, "tau": 3, "head_dim": 4, "d_p": 2, "ss_hidden": 4},
    "train": {"max_epochs": 3, "steps_per_epoch": 4, "validation_stride": 12}
  })");
  fs::create_directories(out);
  const DatasetBundle bundle = generate(c.synth);
  const PreparedData data = prepare_data(bundle, c.pollutant, c.features, c.split_seed);
  std::string metrics = "name,mae,rmse,r2\n";
  for (int f = 0; f < static_cast<int>(data.split.folds.size()); ++f) {
    const TrainedFold fold = train_fold(data, c.experiment, f);
    write_checkpoint(out / ("model_fold" + std::to_string(f)), fold.model,
                     {fold.model.config(), fold.schema, fold.scale, c.hash(), f});
    write_file_atomic(out / ("log_fold" + std::to_string(f) + ".csv"), fold.log.to_csv());
    metrics += "fold" + std::to_string(f) + "," + format_double(fold.test.mae) + "," + format_double(fold.test.rmse) +
               "," + format_double(fold.test.r2) + "\n";
  }
  const MetricTriple idw_m = run_baseline(Baseline::kIdw, data, c.experiment.model.tau - 1);
  metrics += "idw," + format_double(idw_m.mae) + "," + format_double(idw_m.rmse) + "," + format_double(idw_m.r2) + "\n";
  write_file_atomic(out / "metrics.csv", metrics);
}

Outcome criterion_reproducibility() {
  const fs::path root = fs::temp_directory_path() / "aqi_acceptance_repro";
  fs::remove_all(root);
  reference_run(root / "a");
  reference_run(root / "b");
  const std::string a = slurp_dir(root / "a");
  const std::string b = slurp_dir(root / "b");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) files += e.is_regular_file() ? 1 : 0;
  fs::remove_all(root);
  return {a == b && files > 0, fmt("%zu files (metrics, logs, checkpoints) %s across two runs", files,
                                   a == b ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", criterion_gradients},
      {"loss degeneration", criterion_loss_degeneration},
      {"STL exactness", criterion_stl},
      {"interpolation oracles", criterion_interpolation},
      {"attention normalization", criterion_attention},
      {"synthetic benchmark", criterion_benchmark},
      {"missing-ratio study", criterion_missing_ratio},
      {"feature importance sanity", criterion_importance},
      {"reproducibility", criterion_reproducibility},
  };
  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  int failures = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) continue;
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %d: %s %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
