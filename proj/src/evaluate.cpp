#include "aqi/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "aqi/error.hpp"
#include "aqi/random.hpp"

namespace aqi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MetricTriple metrics(std::span<const double> y, std::span<const double> y_hat) {
  require(y.size() == y_hat.size(), ErrorCode::kShape, "metrics: length mismatch");
  require(y.size() >= 2, ErrorCode::kInvalidInput, "metrics need at least two points");
  const double n = static_cast<double>(y.size());
  double abs_sum = 0.0, sq_sum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
    mean += y[i];
  }
  mean /= n;
  double total = 0.0;
  for (double v : y) total += (v - mean) * (v - mean);
  MetricTriple m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (total > 0.0) {
    m.r2 = 1.0 - sq_sum / total;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.r2_defined = false;
  }
  require(m.mae <= m.rmse * (1.0 + 1e-12) + 1e-300, ErrorCode::kInvalidInput, "metrics: mae exceeds rmse");
  return m;
}

MetricTriple average(std::span<const MetricTriple> triples) {
  require(!triples.empty(), ErrorCode::kInvalidInput, "nothing to average");
  MetricTriple out;
  for (const MetricTriple& t : triples) {
    out.mae += t.mae;
    out.rmse += t.rmse;
    out.r2 += t.r2;
    out.r2_defined = out.r2_defined && t.r2_defined;
  }
  const double n = static_cast<double>(triples.size());
  out.mae /= n;
  out.rmse /= n;
  out.r2 = out.r2_defined ? out.r2 / n : std::numeric_limits<double>::quiet_NaN();
  return out;
}

PreparedData restrict_features(const PreparedData& data, const FeatureSchema& schema) {
  PreparedData out = data;
  out.features = data.features.select(schema);
  return out;
}

GraphInputs experiment_graph(const PreparedData& data, const ExperimentConfig& config) {
  AdjacencyPair adjacency = data.adjacency;
  if (config.od_identity) adjacency.od = Adjacency::identity(data.n_grids());
  if (config.se_identity) adjacency.se = Adjacency::identity(data.n_grids());
  return make_graph_inputs(data.graph, adjacency, config.model);
}

TestPredictions predict_test(const Mtstn& model, const PreparedData& data, const ScaledFeatures& scaled,
                             const GraphInputs& graph, const LabelScale& scale) {
  TestPredictions out;
  for (int t = model.config().tau - 1; t < data.n_hours(); ++t) {
    const VectorXd pred = predict_hour(model, scaled, graph, scale, t);
    for (int g : data.split.test_ids) {
      const double y = data.eval_labels(g, t);
      if (!std::isfinite(y)) continue;
      out.grids.push_back(g);
      out.hours.push_back(t);
      out.truth.push_back(y);
      out.predicted.push_back(pred(g));
    }
  }
  return out;
}

namespace {

std::vector<ImportanceWindow> importance_windows(const PreparedData& data, const ScaledFeatures& scaled,
                                                 const Fold& fold, const LabelScale& scale, int tau, int stride) {
  std::vector<ImportanceWindow> windows;
  for (int t = tau - 1; t < data.n_hours(); t += stride) {
    ImportanceWindow w;
    for (int g : fold.train_ids) {
      const double y = data.labels(g, t);
      if (!std::isfinite(y)) continue;
      w.targets.grids.push_back(g);
      w.targets.values.push_back(scale.to_model(y));
    }
    if (w.targets.grids.empty()) continue;
    w.input = scaled.window(t, tau);
    windows.push_back(std::move(w));
  }
  return windows;
}

// Seed stream of a fold, derived from its validation grids rather than its
// position so that reordering folds does not change any fold's run.
std::uint64_t fold_stream(const Fold& fold) {
  std::vector<int> ids = fold.validation_ids;
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = 0;
  for (int id : ids) h = mix_seed(h, static_cast<std::uint64_t>(id));
  return h;
}

}  // namespace

TrainedFold train_fold(const PreparedData& data, const ExperimentConfig& config, int fold_index) {
  config.validate();
  require(fold_index >= 0 && fold_index < static_cast<int>(data.split.folds.size()), ErrorCode::kInvalidInput,
          "fold index out of range");
  const Fold& fold = data.split.folds[static_cast<std::size_t>(fold_index)];
  const FeatureSchema& schema = data.features.schema;
  const ScaledFeatures scaled = scale_features(data.features);
  const GraphInputs graph = experiment_graph(data, config);

  ModelConfig mc = config.model;
  mc.d_ss = pretext_width(config, schema);
  ExperimentConfig run = config;
  run.model = mc;
  run.train.seed = mix_seed(config.train.seed, fold_stream(fold));
  Mtstn model(mc, FeatureDims::from_schema(schema), mix_seed(config.model_seed, fold_stream(fold)));
  FoldTrainer trainer(model, data, scaled, graph, fold, run);
  TrainLog log = train(trainer, run.train);

  if (config.select_keep > 0) {
    const int available = schema.numeric_count() + schema.categorical_count();
    require(config.select_keep <= available, ErrorCode::kInvalidConfig, "select_keep exceeds the feature count");
    const auto windows = importance_windows(data, scaled, fold, trainer.label_scale(), mc.tau, 1);
    const ImportanceReport report = feature_importance(model, schema, graph, windows);
    const FeatureSchema kept = select_features(report, schema, config.select_keep);
    ExperimentConfig second = config;
    second.select_keep = 0;
    return train_fold(restrict_features(data, kept), second, fold_index);
  }

  TrainedFold out{fold_index, std::move(model), schema, trainer.label_scale(), std::move(log), {}, {}};
  out.predictions = predict_test(out.model, data, scaled, graph, out.scale);
  out.test = metrics(out.predictions.truth, out.predictions.predicted);
  return out;
}

ImportanceReport fold_importance(const TrainedFold& fold, const PreparedData& data, const ExperimentConfig& config,
                                 int stride) {
  require(stride >= 1, ErrorCode::kInvalidInput, "stride must be >= 1");
  const PreparedData restricted =
      fold.schema.numeric_names == data.features.schema.numeric_names &&
              fold.schema.categorical_names == data.features.schema.categorical_names
          ? data
          : restrict_features(data, fold.schema);
  const ScaledFeatures scaled = scale_features(restricted.features);
  const GraphInputs graph = experiment_graph(restricted, config);
  const Fold& f = restricted.split.folds[static_cast<std::size_t>(fold.fold)];
  const auto windows = importance_windows(restricted, scaled, f, fold.scale, fold.model.config().tau, stride);
  return feature_importance(fold.model, fold.schema, graph, windows);
}

CvResult run_cv(const PreparedData& data, const ExperimentConfig& config) {
  CvResult out;
  std::vector<MetricTriple> triples;
  for (int f = 0; f < static_cast<int>(data.split.folds.size()); ++f) {
    out.folds.push_back(train_fold(data, config, f));
    triples.push_back(out.folds.back().test);
  }
  out.average = average(triples);
  return out;
}

Baseline parse_baseline(const std::string& name) {
  if (name == "knn") return Baseline::kKnn;
  if (name == "idw") return Baseline::kIdw;
  if (name == "lur") return Baseline::kLur;
  fail(ErrorCode::kUnknownVariant, "unknown baseline '" + name + "'");
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kKnn: return "knn";
    case Baseline::kIdw: return "idw";
    case Baseline::kLur: return "lur";
  }
  return "?";
}

VectorXd fit_linear(const MatrixXd& x, const VectorXd& y, double ridge) {
  require(x.rows() == y.size() && x.rows() >= 1, ErrorCode::kShape, "regression shape mismatch");
  require(std::isfinite(ridge) && ridge >= 0.0, ErrorCode::kInvalidConfig, "ridge must be >= 0");
  // Ridge rows are appended as pseudo-observations sqrt(ridge) * I with target 0.
  const Eigen::Index extra = ridge > 0.0 ? x.cols() : 0;
  MatrixXd design = MatrixXd::Zero(x.rows() + extra, x.cols() + 1);
  design.topLeftCorner(x.rows(), 1).setOnes();
  design.topRightCorner(x.rows(), x.cols()) = x;
  VectorXd target = VectorXd::Zero(x.rows() + extra);
  target.head(x.rows()) = y;
  if (extra > 0) design.bottomRightCorner(extra, extra).diagonal().setConstant(std::sqrt(ridge));
  return design.completeOrthogonalDecomposition().solve(target);
}

VectorXd predict_linear(const VectorXd& coef, const MatrixXd& x) {
  require(coef.size() == x.cols() + 1, ErrorCode::kShape, "coefficient count mismatch");
  return (x * coef.tail(x.cols())).array() + coef(0);
}

namespace {

std::vector<int> column_indices(const FeatureSchema& schema, const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const std::string& name : names) {
    const auto it = std::find(schema.numeric_names.begin(), schema.numeric_names.end(), name);
    if (it != schema.numeric_names.end()) out.push_back(static_cast<int>(it - schema.numeric_names.begin()));
  }
  return out;
}

constexpr double kLurRidge = 1e-2;  // per training row, on standardized columns

MetricTriple baseline_fold(Baseline baseline, const PreparedData& data, const std::vector<int>& contexts,
                           int first_hour, int knn_k, double idw_power) {
  const std::vector<int>& tests = data.split.test_ids;
  const int hours = data.n_hours();
  MatrixXd pred(static_cast<Eigen::Index>(tests.size()), hours);
  if (baseline == Baseline::kLur) {
    std::vector<int> cols = column_indices(data.features.schema, data.geo_names);
    const std::vector<int> met = column_indices(data.features.schema, data.weather_names);
    cols.insert(cols.end(), met.begin(), met.end());
    require(!cols.empty(), ErrorCode::kSchema, "no geographic or meteorological features for LUR");
    const auto rows_for = [&](const std::vector<int>& grids, const MatrixXd& labels, bool need_label) {
      std::vector<std::pair<int, int>> rows;
      for (int g : grids)
        for (int t = first_hour; t < hours; ++t)
          if (!need_label || std::isfinite(labels(g, t))) rows.push_back({g, t});
      return rows;
    };
    const auto train_rows = rows_for(contexts, data.labels, true);
    require(!train_rows.empty(), ErrorCode::kInsufficientLabels, "no LUR training rows");
    MatrixXd x(static_cast<Eigen::Index>(train_rows.size()), static_cast<Eigen::Index>(cols.size()));
    VectorXd y(x.rows());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      const auto [g, t] = train_rows[r];
      for (std::size_t c = 0; c < cols.size(); ++c)
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data.features.num(g, t, cols[c]);
      y(static_cast<Eigen::Index>(r)) = data.labels(g, t);
    }
    const VectorXd mean = x.colwise().mean();
    VectorXd sd = ((x.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(x.rows()))
                      .cwiseSqrt()
                      .transpose();
    for (Eigen::Index c = 0; c < sd.size(); ++c)
      if (sd(c) <= 1e-12) sd(c) = 0.0;
    const auto standardize = [&](MatrixXd m) {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        m.col(c) = sd(c) > 0.0 ? VectorXd((m.col(c).array() - mean(c)) / sd(c)) : VectorXd::Zero(m.rows());
      return m;
    };
    // Geographic columns are constant per grid and outnumber the context grids,
    // so the plain fit is near singular; a small ridge keeps extrapolation bounded.
    const VectorXd coef = fit_linear(standardize(x), y, static_cast<double>(x.rows()) * kLurRidge);
    MatrixXd xt(hours, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < tests.size(); ++i) {
      for (int t = 0; t < hours; ++t)
        for (std::size_t c = 0; c < cols.size(); ++c)
          xt(t, static_cast<Eigen::Index>(c)) = data.features.num(tests[i], t, cols[c]);
      pred.row(static_cast<Eigen::Index>(i)) = predict_linear(coef, standardize(xt)).transpose();
    }
  } else {
    std::vector<LatLon> targets, sources;
    for (int g : tests) targets.push_back(data.graph.cells[static_cast<std::size_t>(g)].centroid);
    MatrixXd values(static_cast<Eigen::Index>(contexts.size()), hours);
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      sources.push_back(data.graph.cells[static_cast<std::size_t>(contexts[i])].centroid);
      values.row(static_cast<Eigen::Index>(i)) = data.labels.row(contexts[i]);
    }
    const InterpolationMethod method = baseline == Baseline::kIdw ? InterpolationMethod::kIdw : InterpolationMethod::kKnn;
    const int k = std::min<int>(knn_k, static_cast<int>(contexts.size()));
    pred = interpolation_weights(targets, sources, contexts, method, idw_power, k) * values;
  }
  std::vector<double> truth, guess;
  for (std::size_t i = 0; i < tests.size(); ++i)
    for (int t = first_hour; t < hours; ++t) {
      const double y = data.eval_labels(tests[i], t);
      if (!std::isfinite(y)) continue;
      truth.push_back(y);
      guess.push_back(pred(static_cast<Eigen::Index>(i), t));
    }
  return metrics(truth, guess);
}

}  // namespace

MetricTriple run_baseline(Baseline baseline, const PreparedData& data, int first_hour, int knn_k, double idw_power) {
  require(first_hour >= 0 && first_hour < data.n_hours(), ErrorCode::kInvalidInput, "first_hour out of range");
  require(knn_k >= 1, ErrorCode::kInvalidK, "k must be >= 1");
  std::vector<MetricTriple> triples;
  for (const Fold& fold : data.split.folds) {
    std::vector<int> contexts = fold.train_ids;
    contexts.insert(contexts.end(), data.split.interpolation_ids.begin(), data.split.interpolation_ids.end());
    std::sort(contexts.begin(), contexts.end());
    triples.push_back(baseline_fold(baseline, data, contexts, first_hour, knn_k, idw_power));
  }
  return average(triples);
}

std::vector<double> corrupt_series(std::span<const double> series, double ratio, std::uint64_t seed) {
  require(ratio >= 0.0 && ratio < 1.0, ErrorCode::kInvalidInput, "missing ratio must lie in [0, 1)");
  std::vector<double> out(series.begin(), series.end());
  const std::size_t n = out.size();
  const std::size_t removed = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < removed; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
    out[idx[i]] = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

DatasetBundle corrupt_and_fill(const DatasetBundle& bundle, double ratio, std::uint64_t seed) {
  require(ratio >= 0.0 && ratio < 1.0, ErrorCode::kInvalidInput, "missing ratio must lie in [0, 1)");
  DatasetBundle out = bundle;
  if (ratio == 0.0) return out;
  std::uint64_t stream = 0;
  for (auto& [pollutant, series] : out.readings) {
    for (auto& [id, values] : series) {
      std::vector<double> corrupted = corrupt_series(values, ratio, mix_seed(seed, stream++));
      try {
        values = fill_missing(corrupted);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnrecoverableSeries) throw;
        values = std::move(corrupted);
      }
    }
  }
  return out;
}

std::vector<MissingRatioRow> missing_ratio_study(const DatasetBundle& bundle, Pollutant pollutant,
                                                 const FeatureOptions& features, std::uint64_t split_seed,
                                                 std::span<const double> ratios, const ExperimentConfig& config,
                                                 std::uint64_t corruption_seed) {
  const PreparedData clean = prepare_data(bundle, pollutant, features, split_seed);
  std::vector<MissingRatioRow> rows;
  for (double ratio : ratios) {
    PreparedData data = prepare_data(corrupt_and_fill(bundle, ratio, corruption_seed), pollutant, features, split_seed);
    require(data.split.test_ids == clean.split.test_ids, ErrorCode::kInsufficientLabels,
            "corruption changed the set of labeled grids");
    data.eval_labels = clean.labels;
    rows.push_back({ratio, run_cv(data, config).average});
  }
  return rows;
}

AblationVariant parse_variant(const std::string& name) {
  for (AblationVariant v : kAllVariants)
    if (to_string(v) == name) return v;
  fail(ErrorCode::kUnknownVariant, "unknown ablation variant '" + name + "'");
}

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: return "full";
    case AblationVariant::kWoSst: return "wo_sst";
    case AblationVariant::kRpKsst: return "rp_ksst";
    case AblationVariant::kRpGsst: return "rp_gsst";
    case AblationVariant::kWoPe: return "wo_pe";
    case AblationVariant::kWoFs: return "wo_fs";
    case AblationVariant::kWoOd: return "wo_od";
    case AblationVariant::kWoSe: return "wo_se";
  }
  return "?";
}

ExperimentConfig apply_variant(AblationVariant variant, const ExperimentConfig& full) {
  ExperimentConfig c = full;
  switch (variant) {
    case AblationVariant::kFull:
      break;
    case AblationVariant::kWoSst:
      c.pretext = PretextTask::kNone;
      c.model.use_ss_head = false;
      c.train.alpha_ss = 0.0;
      break;
    case AblationVariant::kRpKsst:
      c.pretext = PretextTask::kKnn;
      break;
    case AblationVariant::kRpGsst:
      c.pretext = PretextTask::kGraphCompletion;
      break;
    case AblationVariant::kWoPe:
      c.model.use_positional = false;
      break;
    case AblationVariant::kWoFs:
      c.train.beta = 0.0;
      c.train.gamma = 0.0;
      c.select_keep = 0;
      break;
    case AblationVariant::kWoOd:
      c.od_identity = true;
      break;
    case AblationVariant::kWoSe:
      c.se_identity = true;
      break;
  }
  return c;
}

CvResult run_ablation(AblationVariant variant, const PreparedData& data, const ExperimentConfig& full) {
  return run_cv(data, apply_variant(variant, full));
}

}  // namespace aqi
