#include "aqi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "aqi/csv.hpp"
#include "aqi/error.hpp"
#include "aqi/random.hpp"

namespace aqi {

using Eigen::MatrixXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const StationSeries* series_for(const DatasetBundle& bundle, Pollutant p) {
  const auto it = bundle.readings.find(p);
  return it == bundle.readings.end() ? nullptr : &it->second;
}

std::vector<double> padded(const std::vector<double>& values, int hours) {
  std::vector<double> out(values.begin(), values.end());
  out.resize(static_cast<std::size_t>(hours), kNaN);
  return out;
}

// Filled series of one station, or nullopt when nothing is recoverable.
std::optional<std::vector<double>> filled_series(const StationSeries& series, const std::string& id, int hours) {
  const auto it = series.find(id);
  if (it == series.end()) return std::nullopt;
  try {
    return fill_missing(padded(it->second, hours));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnrecoverableSeries) return std::nullopt;
    throw;
  }
}

}  // namespace

MatrixXd station_label_matrix(const DatasetBundle& bundle, const GridGraph& graph, Pollutant pollutant) {
  const StationSeries* series = series_for(bundle, pollutant);
  if (!series) fail(ErrorCode::kMissingData, "no readings for " + to_string(pollutant));
  MatrixXd sum = MatrixXd::Zero(graph.size(), bundle.hours);
  std::vector<int> count(static_cast<std::size_t>(graph.size()), 0);
  for (const Station& s : bundle.stations) {
    if (s.kind != StationKind::kStandardized || s.grid_id < 0) continue;
    const auto filled = filled_series(*series, s.id, bundle.hours);
    if (!filled) continue;
    for (int t = 0; t < bundle.hours; ++t) sum(s.grid_id, t) += (*filled)[static_cast<std::size_t>(t)];
    ++count[static_cast<std::size_t>(s.grid_id)];
  }
  MatrixXd out = MatrixXd::Constant(graph.size(), bundle.hours, kNaN);
  for (int g = 0; g < graph.size(); ++g)
    if (count[static_cast<std::size_t>(g)] > 0) out.row(g) = sum.row(g) / count[static_cast<std::size_t>(g)];
  return out;
}

MatrixXd micro_trend_feature(const DatasetBundle& bundle, const GridGraph& graph, const FeatureOptions& options,
                             Pollutant pollutant) {
  const StationSeries* series = series_for(bundle, pollutant);
  if (!series) fail(ErrorCode::kMissingData, "no readings for " + to_string(pollutant));
  std::vector<ContextSeries> contexts;
  for (const Station& s : bundle.stations) {
    if (s.kind != StationKind::kMicro || s.grid_id < 0) continue;
    const auto filled = filled_series(*series, s.id, bundle.hours);
    if (!filled) continue;
    const Decomposition d = stl_decompose(*filled, options.stl);
    contexts.push_back({s.pos, s.grid_id, normalize_trend(d.trend).values});
  }
  if (contexts.empty()) fail(ErrorCode::kNoContext, "no usable micro-station series for the trend feature");
  return idw_field(graph, contexts, options.idw_power);
}

PreparedData prepare_data(const DatasetBundle& bundle, Pollutant pollutant, const FeatureOptions& options,
                          std::uint64_t split_seed) {
  require(bundle.hours >= 1, ErrorCode::kInvalidInput, "dataset has no hours");
  PreparedData d;
  d.pollutant = pollutant;
  std::vector<Station> stations = bundle.stations;
  d.graph = assign_stations(bundle.grid(), stations);
  DatasetBundle located = bundle;
  located.stations = stations;
  d.stamps = bundle.timestamps();

  d.labels = station_label_matrix(located, d.graph, pollutant);
  d.eval_labels = d.labels;
  for (int g = 0; g < d.graph.size(); ++g)
    if (d.labels.row(g).allFinite()) d.label_grids.push_back(g);
  d.split = split_grids(d.label_grids, split_seed);

  FeatureInputs in;
  in.n_grids = d.graph.size();
  in.n_hours = bundle.hours;
  in.trend = micro_trend_feature(located, d.graph, options, pollutant);

  // The co-reacting pollutant observed at standardized stations outside the
  // test grids.
  const Pollutant rel = relevant_pollutant(pollutant);
  const StationSeries* rel_series = series_for(located, rel);
  if (!rel_series) fail(ErrorCode::kMissingData, "no readings for " + to_string(rel));
  PollutantContexts rel_contexts;
  for (const Station& s : located.stations) {
    if (s.kind != StationKind::kStandardized || s.grid_id < 0) continue;
    if (std::find(d.split.test_ids.begin(), d.split.test_ids.end(), s.grid_id) != d.split.test_ids.end()) continue;
    if (auto filled = filled_series(*rel_series, s.id, bundle.hours))
      rel_contexts[rel].push_back({s.pos, s.grid_id, std::move(*filled)});
  }
  in.rep = rep_feature(d.graph, rel_contexts, pollutant, options.idw_power);
  in.rep_name = "rep_" + to_string(rel);

  in.weather_names = bundle.weather_names;
  in.weather = bundle.weather;
  in.congestion = congestion_index_matrix(bundle.roads, in.n_grids, in.n_hours);
  in.geo_names = bundle.geo_names;
  in.geographic = bundle.geographic;
  d.geo_names = bundle.geo_names;
  d.weather_names = bundle.weather_names;

  std::vector<TrajectoryPoint> points;
  points.reserve(bundle.trajectories.size());
  for (const RawTrajectoryPoint& p : bundle.trajectories)
    if (d.graph.contains(p.pos)) points.push_back({p.truck_id, p.t, d.graph.locate(p.pos)});
  if (options.include_flow) in.flow = truck_flow_matrix(points, in.n_grids, in.n_hours);
  in.timestamps = encode_timestamps(d.stamps);
  in.embed_dim = options.embed_dim;
  in.expected_feature_count = options.expected_feature_count;
  d.features = assemble_features(in);

  d.adjacency.od = build_od_adjacency(in.n_grids, points, options.symmetrize_od);
  d.adjacency.se = build_semantic_adjacency(bundle.geographic, options.semantic_k, split_seed);
  return d;
}

WindowInput ScaledFeatures::window(int t_end, int tau) const {
  require(tau >= 1 && t_end - tau + 1 >= 0 && t_end < n_hours(), ErrorCode::kShape, "window outside the time range");
  WindowInput w;
  for (int t = t_end - tau + 1; t <= t_end; ++t) {
    w.numeric.push_back(numeric[static_cast<std::size_t>(t)]);
    w.categorical.push_back(categorical[static_cast<std::size_t>(t)]);
  }
  return w;
}

ScaledFeatures scale_features(const FeatureTensor& x) {
  const int u = x.schema.numeric_count();
  const int v = x.schema.categorical_count();
  ScaledFeatures s;
  s.mean = Eigen::VectorXd::Zero(u);
  s.scale = Eigen::VectorXd::Ones(u);
  const double count = static_cast<double>(x.n_grids) * x.n_hours;
  for (int c = 0; c < u; ++c) {
    double sum = 0.0;
    for (int g = 0; g < x.n_grids; ++g)
      for (int t = 0; t < x.n_hours; ++t) sum += x.num(g, t, c);
    const double mean = sum / count;
    double sq = 0.0;
    for (int g = 0; g < x.n_grids; ++g)
      for (int t = 0; t < x.n_hours; ++t) sq += (x.num(g, t, c) - mean) * (x.num(g, t, c) - mean);
    const double sd = std::sqrt(sq / count);
    s.mean(c) = mean;
    s.scale(c) = sd > 1e-12 ? sd : 0.0;
  }
  s.numeric.assign(static_cast<std::size_t>(x.n_hours), MatrixXd(u, x.n_grids));
  s.categorical.assign(static_cast<std::size_t>(x.n_hours), Eigen::MatrixXi(v, x.n_grids));
  for (int t = 0; t < x.n_hours; ++t) {
    MatrixXd& m = s.numeric[static_cast<std::size_t>(t)];
    Eigen::MatrixXi& c = s.categorical[static_cast<std::size_t>(t)];
    for (int g = 0; g < x.n_grids; ++g) {
      for (int k = 0; k < u; ++k) m(k, g) = s.scale(k) > 0.0 ? (x.num(g, t, k) - s.mean(k)) / s.scale(k) : 0.0;
      for (int k = 0; k < v; ++k) c(k, g) = x.cat(g, t, k);
    }
  }
  return s;
}

LabelScale fit_label_scale(const MatrixXd& labels, const std::vector<int>& grids) {
  double sum = 0.0;
  double count = 0.0;
  for (int g : grids)
    for (Eigen::Index t = 0; t < labels.cols(); ++t)
      if (std::isfinite(labels(g, t))) {
        sum += labels(g, t);
        count += 1.0;
      }
  require(count > 0.0, ErrorCode::kInsufficientLabels, "no finite labels on the training grids");
  LabelScale s;
  s.mean = sum / count;
  double sq = 0.0;
  for (int g : grids)
    for (Eigen::Index t = 0; t < labels.cols(); ++t)
      if (std::isfinite(labels(g, t))) sq += (labels(g, t) - s.mean) * (labels(g, t) - s.mean);
  const double sd = std::sqrt(sq / count);
  s.scale = sd > 1e-12 ? sd : 1.0;
  return s;
}

GraphInputs make_graph_inputs(const GridGraph& graph, const AdjacencyPair& adjacency, const ModelConfig& config) {
  GraphInputs g;
  if (config.use_positional) g.positional = positional_embedding(graph, config.d_p).transpose();
  g.od = NeighborList::from(adjacency.od);
  g.se = NeighborList::from(adjacency.se);
  return g;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  require(pretext_knn_k >= 1, ErrorCode::kInvalidConfig, "pretext_knn_k must be >= 1");
  require(mask_rate > 0.0 && mask_rate < 1.0, ErrorCode::kInvalidConfig, "mask_rate must lie in (0, 1)");
  require(select_keep >= 0, ErrorCode::kInvalidConfig, "select_keep must be >= 0");
  require((pretext == PretextTask::kNone) == !model.use_ss_head, ErrorCode::kInvalidConfig,
          "the self-supervised head must exist exactly when a pretext task is set");
}

int pretext_width(const ExperimentConfig& config, const FeatureSchema& schema) {
  return config.pretext == PretextTask::kGraphCompletion ? schema.numeric_count() : 1;
}

FoldTrainer::FoldTrainer(Mtstn& model, const PreparedData& data, const ScaledFeatures& scaled,
                         const GraphInputs& graph, const Fold& fold, const ExperimentConfig& config)
    : model_(model), data_(data), scaled_(scaled), graph_(graph), fold_(fold), config_(config) {
  require(!fold_.train_ids.empty() && !fold_.validation_ids.empty(), ErrorCode::kInsufficientLabels,
          "fold needs training and validation grids");
  label_scale_ = fit_label_scale(data_.labels, fold_.train_ids);
  const int tau = model_.config().tau;
  require(tau <= data_.n_hours(), ErrorCode::kInsufficientData, "time window longer than the dataset");
  for (int t = tau - 1; t < data_.n_hours(); ++t) times_.push_back(t);

  if (config_.pretext == PretextTask::kIdw || config_.pretext == PretextTask::kKnn) {
    const auto& ids = data_.split.interpolation_ids;
    require(!ids.empty(), ErrorCode::kInsufficientLabels, "no interpolation grids for pretext labels");
    MatrixXd values(static_cast<Eigen::Index>(ids.size()), data_.n_hours());
    for (std::size_t i = 0; i < ids.size(); ++i) values.row(static_cast<Eigen::Index>(i)) = data_.labels.row(ids[i]);
    const InterpolationMethod method =
        config_.pretext == PretextTask::kIdw ? InterpolationMethod::kIdw : InterpolationMethod::kKnn;
    const int k = std::min<int>(config_.pretext_knn_k, static_cast<int>(ids.size()));
    ss_labels_ = generate_ss_labels(data_.graph, ids, values, 2.0, method, k).values;
    ss_labels_ = ((ss_labels_.array() - label_scale_.mean) / label_scale_.scale).matrix();
  }
}

std::vector<MatrixXd*> FoldTrainer::parameter_values() {
  std::vector<MatrixXd*> out;
  for (Parameter& p : model_.parameters()) out.push_back(&p.value);
  return out;
}

TrainingSample FoldTrainer::make_sample(int t, std::uint64_t mask_stream) const {
  TrainingSample s;
  s.input = scaled_.window(t, model_.config().tau);
  for (int g : fold_.train_ids) {
    const double y = data_.labels(g, t);
    if (!std::isfinite(y)) continue;
    s.sup.grids.push_back(g);
    s.sup.values.push_back(label_scale_.to_model(y));
  }
  const int n = data_.n_grids();
  switch (config_.pretext) {
    case PretextTask::kIdw:
    case PretextTask::kKnn:
      s.ss.values = ss_labels_.col(t).transpose();
      break;
    case PretextTask::kGraphCompletion: {
      s.ss.values = s.input.numeric.back();
      std::mt19937_64 rng(mix_seed(config_.model_seed, mask_stream));
      std::vector<int> ids(static_cast<std::size_t>(n));
      for (int g = 0; g < n; ++g) ids[static_cast<std::size_t>(g)] = g;
      const int masked = std::max(1, rounded_share(n, config_.mask_rate));
      for (int i = 0; i < masked; ++i) {
        const std::size_t j = static_cast<std::size_t>(i) + uniform_index(rng, static_cast<std::uint64_t>(n - i));
        std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
      }
      s.ss.grids.assign(ids.begin(), ids.begin() + masked);
      std::sort(s.ss.grids.begin(), s.ss.grids.end());
      for (MatrixXd& step : s.input.numeric)
        for (int g : s.ss.grids) step.col(g).setZero();
      break;
    }
    case PretextTask::kNone:
      break;
  }
  return s;
}

double FoldTrainer::loss_and_gradient(int sample, std::vector<MatrixXd>& grads) {
  const TrainingSample s = make_sample(times_[static_cast<std::size_t>(sample)], calls_++);
  return sample_loss_and_gradient(model_, s, graph_, config_.train, grads).total;
}

double FoldTrainer::validation_mae() {
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < times_.size(); i += static_cast<std::size_t>(config_.train.validation_stride)) {
    const int t = times_[i];
    const Eigen::VectorXd pred = predict_hour(model_, scaled_, graph_, label_scale_, t);
    for (int g : fold_.validation_ids) {
      const double y = data_.labels(g, t);
      if (!std::isfinite(y)) continue;
      sum += std::abs(pred(g) - y);
      count += 1.0;
    }
  }
  require(count > 0.0, ErrorCode::kInsufficientLabels, "no validation labels");
  return sum / count;
}

Eigen::VectorXd predict_hour(const Mtstn& model, const ScaledFeatures& scaled, const GraphInputs& graph,
                             const LabelScale& scale, int t_end) {
  HiddenState state;
  const ModelOutput out = model.forward(scaled.window(t_end, model.config().tau), graph, state);
  Eigen::VectorXd pred(out.y_sup.cols());
  for (Eigen::Index g = 0; g < pred.size(); ++g) pred(g) = scale.to_data(out.y_sup(0, g));
  return pred;
}

namespace {

template <typename T>
std::vector<char> to_bytes(const std::vector<T>& values) {
  std::vector<char> out(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <typename T>
std::vector<T> from_bytes(const std::filesystem::path& path, std::size_t count) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kMissingArtifact, "feature file '" + path.string() + "' not found");
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() == count * sizeof(T), ErrorCode::kSchema, "feature file '" + path.string() + "' has the wrong size");
  std::vector<T> out(count);
  if (count) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string edge_list(const Adjacency& a) {
  CsvWriter w({"i", "j"});
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < a.size(); ++j)
      if (a(i, j)) w.row(i, j);
  return w.str();
}

Adjacency read_edge_list(const std::filesystem::path& path, int n) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = t.column("i"), cj = t.column("j");
  Adjacency a(n);
  for (const auto& row : t.rows) {
    const long long i = parse_int(row[ci]), j = parse_int(row[cj]);
    require(i >= 0 && i < n && j >= 0 && j < n, ErrorCode::kSchema, "adjacency index out of range");
    a.set(static_cast<int>(i), static_cast<int>(j));
  }
  return a;
}

}  // namespace

static_assert(std::endian::native == std::endian::little, "feature layout assumes a little-endian host");

void write_prepared(const std::filesystem::path& dir, const PreparedData& d) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["n_grids"] = d.n_grids();
  meta["n_hours"] = d.n_hours();
  meta["pollutant"] = to_string(d.pollutant);
  meta["start_time"] = d.stamps.empty() ? std::string() : d.stamps.front().to_string();
  meta["split_seed"] = d.split.seed;
  meta["interpolation_ids"] = d.split.interpolation_ids;
  meta["test_ids"] = d.split.test_ids;
  nlohmann::json folds = nlohmann::json::array();
  for (const Fold& f : d.split.folds) folds.push_back({{"train", f.train_ids}, {"validation", f.validation_ids}});
  meta["folds"] = folds;
  meta["label_grids"] = d.label_grids;
  meta["geo_names"] = d.geo_names;
  meta["weather_names"] = d.weather_names;
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
  write_file_atomic(dir / "schema.txt", d.features.schema.to_text());
  write_binary_atomic(dir / "x_num.bin", to_bytes(d.features.x_num));
  std::vector<std::int32_t> cat(d.features.x_cat.begin(), d.features.x_cat.end());
  write_binary_atomic(dir / "x_cat.bin", to_bytes(cat));
  CsvWriter labels({"grid_id", "t", "value"});
  for (int g = 0; g < d.n_grids(); ++g)
    for (int t = 0; t < d.n_hours(); ++t)
      if (std::isfinite(d.labels(g, t))) labels.row(g, t, d.labels(g, t));
  write_file_atomic(dir / "labels.csv", labels.str());
  write_file_atomic(dir / "adjacency_od.csv", edge_list(d.adjacency.od));
  write_file_atomic(dir / "adjacency_se.csv", edge_list(d.adjacency.se));
}

PreparedData read_prepared(const std::filesystem::path& dir, const GridGraph& graph,
                           const std::vector<HourStamp>& stamps) {
  if (!std::filesystem::exists(dir / "meta.json"))
    fail(ErrorCode::kMissingArtifact, "feature directory '" + dir.string() + "' has no meta.json (run `features`)");
  nlohmann::json meta;
  {
    std::ifstream in(dir / "meta.json");
    meta = nlohmann::json::parse(in);
  }
  PreparedData d;
  d.graph = graph;
  d.stamps = stamps;
  d.pollutant = parse_pollutant(meta.at("pollutant").get<std::string>());
  const int n = meta.at("n_grids").get<int>();
  const int hours = meta.at("n_hours").get<int>();
  require(n == graph.size() && hours == static_cast<int>(stamps.size()), ErrorCode::kSchema,
          "features do not match the dataset");
  d.split.seed = meta.at("split_seed").get<std::uint64_t>();
  d.split.interpolation_ids = meta.at("interpolation_ids").get<std::vector<int>>();
  d.split.test_ids = meta.at("test_ids").get<std::vector<int>>();
  for (const auto& f : meta.at("folds"))
    d.split.folds.push_back({f.at("train").get<std::vector<int>>(), f.at("validation").get<std::vector<int>>()});
  d.label_grids = meta.at("label_grids").get<std::vector<int>>();
  d.geo_names = meta.at("geo_names").get<std::vector<std::string>>();
  d.weather_names = meta.at("weather_names").get<std::vector<std::string>>();

  std::ifstream schema_in(dir / "schema.txt");
  std::ostringstream schema_text;
  schema_text << schema_in.rdbuf();
  d.features.schema = FeatureSchema::from_text(schema_text.str());
  d.features.n_grids = n;
  d.features.n_hours = hours;
  const std::size_t cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(hours);
  d.features.x_num = from_bytes<double>(dir / "x_num.bin", cells * d.features.schema.numeric_count());
  const auto cat = from_bytes<std::int32_t>(dir / "x_cat.bin", cells * d.features.schema.categorical_count());
  d.features.x_cat.assign(cat.begin(), cat.end());

  d.labels = MatrixXd::Constant(n, hours, kNaN);
  const CsvTable labels = read_csv(dir / "labels.csv");
  const std::size_t cg = labels.column("grid_id"), ct = labels.column("t"), cv = labels.column("value");
  for (const auto& row : labels.rows) {
    const long long g = parse_int(row[cg]), t = parse_int(row[ct]);
    require(g >= 0 && g < n && t >= 0 && t < hours, ErrorCode::kSchema, "label index out of range");
    d.labels(g, t) = parse_double(row[cv]);
  }
  d.eval_labels = d.labels;
  d.adjacency.od = read_edge_list(dir / "adjacency_od.csv", n);
  d.adjacency.se = read_edge_list(dir / "adjacency_se.csv", n);
  return d;
}

}  // namespace aqi
