#include "aqi/featurize.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "aqi/error.hpp"
#include "aqi/interpolate.hpp"
#include "aqi/random.hpp"

namespace aqi {

Pollutant parse_pollutant(std::string_view name) {
  if (name == "NO2" || name == "no2") return Pollutant::kNO2;
  if (name == "O3" || name == "o3") return Pollutant::kO3;
  if (name == "PM25" || name == "pm25" || name == "PM2.5") return Pollutant::kPM25;
  fail(ErrorCode::kInvalidPollutant, "unknown pollutant '" + std::string(name) + "'");
}

std::string to_string(Pollutant p) {
  switch (p) {
    case Pollutant::kNO2: return "NO2";
    case Pollutant::kO3: return "O3";
    case Pollutant::kPM25: return "PM25";
  }
  return "?";
}

Pollutant relevant_pollutant(Pollutant target) {
  switch (target) {
    case Pollutant::kNO2: return Pollutant::kO3;
    case Pollutant::kO3: return Pollutant::kNO2;
    case Pollutant::kPM25: return Pollutant::kNO2;
  }
  fail(ErrorCode::kInvalidPollutant, "unknown pollutant");
}

// ---------------------------------------------------------------------------
// Schema and tensor

int FeatureSchema::embedded_width() const { return std::accumulate(embed_dims.begin(), embed_dims.end(), 0); }

int FeatureSchema::feature_count() const {
  return numeric_count() + categorical_count() + static_cast<int>(adjacency_names.size());
}

std::string FeatureSchema::to_text() const {
  std::ostringstream out;
  out << "# kind,name,cardinality,embed_dim\n";
  for (const auto& n : numeric_names) out << "numeric," << n << ",0,0\n";
  for (std::size_t j = 0; j < categorical_names.size(); ++j) {
    out << "categorical," << categorical_names[j] << ',' << cardinalities[j] << ',' << embed_dims[j] << '\n';
  }
  for (const auto& n : adjacency_names) out << "adjacency," << n << ",0,0\n";
  return out.str();
}

FeatureSchema FeatureSchema::from_text(const std::string& text) {
  FeatureSchema s;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string part;
    while (std::getline(ls, part, ',')) f.push_back(part);
    if (f.size() != 4) fail(ErrorCode::kSchema, "bad schema line '" + line + "'");
    if (f[0] == "numeric") {
      s.numeric_names.push_back(f[1]);
    } else if (f[0] == "categorical") {
      s.categorical_names.push_back(f[1]);
      s.cardinalities.push_back(std::stoi(f[2]));
      s.embed_dims.push_back(std::stoi(f[3]));
    } else if (f[0] == "adjacency") {
      s.adjacency_names.push_back(f[1]);
    } else {
      fail(ErrorCode::kSchema, "unknown feature kind '" + f[0] + "'");
    }
  }
  return s;
}

FeatureTensor FeatureTensor::select(const FeatureSchema& subset) const {
  auto index_of = [](const std::vector<std::string>& names, const std::string& n) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) fail(ErrorCode::kSchema, "feature '" + n + "' not in schema");
    return static_cast<int>(it - names.begin());
  };
  std::vector<int> keep_num, keep_cat;
  for (const auto& n : subset.numeric_names) keep_num.push_back(index_of(schema.numeric_names, n));
  for (const auto& n : subset.categorical_names) keep_cat.push_back(index_of(schema.categorical_names, n));
  std::sort(keep_num.begin(), keep_num.end());
  std::sort(keep_cat.begin(), keep_cat.end());

  FeatureTensor out;
  out.n_grids = n_grids;
  out.n_hours = n_hours;
  for (int u : keep_num) out.schema.numeric_names.push_back(schema.numeric_names[u]);
  for (int v : keep_cat) {
    out.schema.categorical_names.push_back(schema.categorical_names[v]);
    out.schema.cardinalities.push_back(schema.cardinalities[v]);
    out.schema.embed_dims.push_back(schema.embed_dims[v]);
  }
  out.schema.adjacency_names = schema.adjacency_names;
  const std::size_t cells = static_cast<std::size_t>(n_grids) * n_hours;
  out.x_num.reserve(cells * keep_num.size());
  out.x_cat.reserve(cells * keep_cat.size());
  const int u_all = schema.numeric_count();
  const int v_all = schema.categorical_count();
  for (std::size_t c = 0; c < cells; ++c) {
    for (int u : keep_num) out.x_num.push_back(x_num[c * u_all + u]);
    for (int v : keep_cat) out.x_cat.push_back(x_cat[c * v_all + v]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adjacency

Adjacency Adjacency::identity(int n) {
  Adjacency a(n);
  for (int i = 0; i < n; ++i) a.set(i, i);
  return a;
}

bool Adjacency::symmetric() const {
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j) {
      if ((*this)(i, j) != (*this)(j, i)) return false;
    }
  }
  return true;
}

std::size_t Adjacency::edge_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Adjacency build_od_adjacency(int n_grids, std::span<const TrajectoryPoint> points, bool symmetrize) {
  Adjacency a = Adjacency::identity(n_grids);
  std::unordered_map<std::string, std::pair<int, int>> last;  // truck -> (t, grid)
  for (const auto& p : points) {
    if (p.grid_id < 0 || p.grid_id >= n_grids) {
      fail(ErrorCode::kInvalidTrajectory, "trajectory point outside the grid");
    }
    auto it = last.find(p.truck_id);
    if (it != last.end()) {
      auto [prev_t, prev_grid] = it->second;
      if (p.t < prev_t) {
        fail(ErrorCode::kInvalidTrajectory, "trajectory of truck '" + p.truck_id + "' is not time-ordered");
      }
      if (prev_grid != p.grid_id) {
        a.set(prev_grid, p.grid_id);
        if (symmetrize) a.set(p.grid_id, prev_grid);
      }
      it->second = {p.t, p.grid_id};
    } else {
      last.emplace(p.truck_id, std::make_pair(p.t, p.grid_id));
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Traffic

double grid_congestion_index(std::span<const RoadSegment> segments, int grid_id, int t) {
  double weighted = 0.0;
  double length = 0.0;
  for (const auto& s : segments) {
    if (s.grid_id != grid_id) continue;
    weighted += s.congestion.at(static_cast<std::size_t>(t)) * s.length_km;
    length += s.length_km;
  }
  return length > 0.0 ? weighted / length : 0.0;
}

Eigen::MatrixXd congestion_index_matrix(std::span<const RoadSegment> segments, int n_grids, int n_hours) {
  Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(n_grids, n_hours);
  Eigen::VectorXd length = Eigen::VectorXd::Zero(n_grids);
  for (const auto& s : segments) {
    if (s.grid_id < 0 || s.grid_id >= n_grids) fail(ErrorCode::kInvalidInput, "road segment outside the grid");
    if (!(s.length_km > 0.0)) fail(ErrorCode::kInvalidInput, "road segment length must be positive");
    if (static_cast<int>(s.congestion.size()) < n_hours) {
      fail(ErrorCode::kShape, "congestion series of road '" + s.road_id + "' is too short");
    }
    for (int t = 0; t < n_hours; ++t) weighted(s.grid_id, t) += s.congestion[t] * s.length_km;
    length(s.grid_id) += s.length_km;
  }
  for (int g = 0; g < n_grids; ++g) {
    if (length(g) > 0.0) weighted.row(g) /= length(g);
  }
  return weighted;
}

int truck_flow(std::span<const TrajectoryPoint> points, int grid_id, int hour) {
  return static_cast<int>(std::count_if(points.begin(), points.end(), [&](const TrajectoryPoint& p) {
    return p.grid_id == grid_id && p.t == hour;
  }));
}

Eigen::MatrixXd truck_flow_matrix(std::span<const TrajectoryPoint> points, int n_grids, int n_hours) {
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n_grids, n_hours);
  for (const auto& p : points) {
    if (p.grid_id >= 0 && p.grid_id < n_grids && p.t >= 0 && p.t < n_hours) flow(p.grid_id, p.t) += 1.0;
  }
  return flow;
}

// ---------------------------------------------------------------------------
// Semantic adjacency

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      out.col(c) = (x.col(c).array() - mean) / sd;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

namespace {

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

KMeansResult kmeans_once(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng, int max_iterations) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  // k-means++ seeding.
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
  centers.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x, i, centers, c - 1));
      total += d2[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      // Never reuse a point that already is a center.
      while (d2[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(x, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        double d = squared_distance(x, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += x.row(i);
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // Empty cluster: move its center onto the worst-fitted point.
      Eigen::Index worst = 0;
      double worst_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double d = squared_distance(x, i, centers, labels[i]);
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      centers.row(c) = x.row(worst);
      --counts[labels[worst]];
      labels[worst] = c;
      counts[c] = 1;
    }
  }
  KMeansResult r;
  r.labels = std::move(labels);
  r.centers = centers;
  for (Eigen::Index i = 0; i < n; ++i) r.inertia += squared_distance(x, i, centers, r.labels[i]);
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1 || k > points.rows()) {
    fail(ErrorCode::kInvalidK, "k=" + std::to_string(k) + " for " + std::to_string(points.rows()) + " points");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    auto result = kmeans_once(points, k, rng, options.max_iterations);
    result.restart = r;
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

Adjacency build_semantic_adjacency(const Eigen::MatrixXd& x_ge, int k, std::uint64_t seed,
                                   const KMeansOptions& options) {
  const int n = static_cast<int>(x_ge.rows());
  if (k < 1 || k > n) fail(ErrorCode::kInvalidK, "k=" + std::to_string(k) + " for " + std::to_string(n) + " grids");
  auto labels = kmeans(standardize_columns(x_ge), k, seed, options).labels;
  Adjacency a(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (labels[i] == labels[j]) a.set(i, j);
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Spatial features

Eigen::MatrixXd idw_field(const GridGraph& graph, std::span<const ContextSeries> contexts, double p) {
  if (contexts.empty()) fail(ErrorCode::kNoContext, "no context series to interpolate");
  const std::size_t hours = contexts.front().values.size();
  std::vector<LatLon> pos;
  std::vector<int> ids;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(contexts.size()), static_cast<Eigen::Index>(hours));
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    if (contexts[c].values.size() != hours) fail(ErrorCode::kShape, "context series lengths differ");
    pos.push_back(contexts[c].pos);
    ids.push_back(contexts[c].grid_id);
    for (std::size_t t = 0; t < hours; ++t) values(c, t) = contexts[c].values[t];
  }
  auto targets = graph.centroids();
  return interpolation_weights(targets, pos, ids, InterpolationMethod::kIdw, p, 0) * values;
}

Eigen::MatrixXd rep_feature(const GridGraph& graph, const PollutantContexts& contexts, Pollutant target,
                            double p) {
  const Pollutant source = relevant_pollutant(target);
  auto it = contexts.find(source);
  if (it == contexts.end() || it->second.empty()) {
    fail(ErrorCode::kNoContext, "no " + to_string(source) + " contexts for the relevant-pollutant feature");
  }
  return idw_field(graph, it->second, p);
}

// ---------------------------------------------------------------------------
// Timestamps

namespace {

std::chrono::sys_days to_days(const HourStamp& s) {
  using namespace std::chrono;
  year_month_day ymd{year{s.year}, month{static_cast<unsigned>(s.month)}, day{static_cast<unsigned>(s.day)}};
  if (!ymd.ok()) fail(ErrorCode::kInvalidInput, "invalid calendar date");
  return sys_days{ymd};
}

}  // namespace

HourStamp HourStamp::parse(std::string_view text) {
  HourStamp s;
  int minute = 0;
  char sep = 0;
  std::string buf(text);
  int fields = std::sscanf(buf.c_str(), "%d-%d-%d%c%d:%d", &s.year, &s.month, &s.day, &sep, &s.hour, &minute);
  if (fields < 3) fail(ErrorCode::kInvalidInput, "bad timestamp '" + buf + "'");
  if (fields < 5) s.hour = 0;
  if (s.hour < 0 || s.hour > 23) fail(ErrorCode::kInvalidInput, "bad hour in '" + buf + "'");
  to_days(s);
  return s;
}

HourStamp HourStamp::plus_hours(long long hours) const {
  using namespace std::chrono;
  long long total = static_cast<long long>(hour) + hours;
  long long day_shift = total >= 0 ? total / 24 : -((-total + 23) / 24);
  int new_hour = static_cast<int>(total - day_shift * 24);
  year_month_day ymd{to_days(*this) + days{day_shift}};
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day())), new_hour};
}

std::string HourStamp::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00", year, month, day, hour);
  return buf;
}

TimestampCodes encode_timestamps(std::span<const HourStamp> stamps) {
  TimestampCodes codes;
  for (const auto& s : stamps) {
    std::chrono::weekday wd{to_days(s)};
    codes.hour_of_day.push_back(s.hour);
    codes.day_of_week.push_back(static_cast<int>((wd.c_encoding() + 6) % 7));
  }
  return codes;
}

// ---------------------------------------------------------------------------
// Missing data

std::vector<double> fill_missing(std::span<const double> series) {
  std::vector<double> out(series.begin(), series.end());
  const int n = static_cast<int>(out.size());
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    if (std::isnan(out[i])) continue;
    if (prev >= 0 && i - prev > 1) {
      const double a = out[prev];
      const double b = out[i];
      for (int j = prev + 1; j < i; ++j) {
        const double w = static_cast<double>(j - prev) / (i - prev);
        out[j] = a + w * (b - a);
      }
    }
    prev = i;
  }
  if (prev < 0) fail(ErrorCode::kUnrecoverableSeries, "series has no observed values");
  // Still missing: take the next timestamp's value, walking backwards so a
  // leading gap inherits the first observation.
  for (int i = n - 2; i >= 0; --i) {
    if (std::isnan(out[i]) && !std::isnan(out[i + 1])) out[i] = out[i + 1];
  }
  for (int i = 1; i < n; ++i) {
    if (std::isnan(out[i])) out[i] = out[i - 1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

FeatureTensor assemble_features(const FeatureInputs& in) {
  const int n = in.n_grids;
  const int t_count = in.n_hours;
  auto check_field = [&](const Eigen::MatrixXd& m, const char* name) {
    if (m.rows() != n || m.cols() != t_count) {
      fail(ErrorCode::kSchema, std::string(name) + " must be [grids x hours]");
    }
  };
  check_field(in.trend, "trend");
  check_field(in.rep, "relevant-pollutant field");
  check_field(in.congestion, "congestion index");
  if (in.flow) check_field(*in.flow, "truck flow");
  if (in.weather.rows() != t_count || in.weather.cols() != static_cast<Eigen::Index>(in.weather_names.size())) {
    fail(ErrorCode::kSchema, "weather must be [hours x named factors]");
  }
  if (in.geographic.rows() != n || in.geographic.cols() != static_cast<Eigen::Index>(in.geo_names.size())) {
    fail(ErrorCode::kSchema, "geographic features must be [grids x named columns]");
  }
  if (static_cast<int>(in.timestamps.hour_of_day.size()) != t_count ||
      static_cast<int>(in.timestamps.day_of_week.size()) != t_count) {
    fail(ErrorCode::kSchema, "timestamp codes must cover every hour");
  }

  FeatureTensor x;
  x.n_grids = n;
  x.n_hours = t_count;
  auto& s = x.schema;
  s.numeric_names.push_back("trend");
  s.numeric_names.push_back(in.rep_name);
  s.numeric_names.insert(s.numeric_names.end(), in.weather_names.begin(), in.weather_names.end());
  s.numeric_names.push_back("congestion_index");
  s.numeric_names.insert(s.numeric_names.end(), in.geo_names.begin(), in.geo_names.end());
  if (in.flow) s.numeric_names.push_back("truck_flow");
  s.categorical_names = {"hour_of_day", "day_of_week"};
  s.cardinalities = {24, 7};
  s.embed_dims = {in.embed_dim, in.embed_dim};
  if (in.with_adjacency) s.adjacency_names = {"od_adjacency", "semantic_adjacency"};
  if (in.expected_feature_count > 0 && s.feature_count() != in.expected_feature_count) {
    fail(ErrorCode::kSchema, "schema has " + std::to_string(s.feature_count()) + " features, expected " +
                                 std::to_string(in.expected_feature_count));
  }

  const int u_count = s.numeric_count();
  x.x_num.resize(static_cast<std::size_t>(n) * t_count * u_count);
  x.x_cat.resize(static_cast<std::size_t>(n) * t_count * 2);
  for (int g = 0; g < n; ++g) {
    for (int t = 0; t < t_count; ++t) {
      double* row = &x.x_num[(static_cast<std::size_t>(g) * t_count + t) * u_count];
      int u = 0;
      row[u++] = in.trend(g, t);
      row[u++] = in.rep(g, t);
      for (Eigen::Index m = 0; m < in.weather.cols(); ++m) row[u++] = in.weather(t, m);
      row[u++] = in.congestion(g, t);
      for (Eigen::Index c = 0; c < in.geographic.cols(); ++c) row[u++] = in.geographic(g, c);
      if (in.flow) row[u++] = (*in.flow)(g, t);
      int* cat = &x.x_cat[(static_cast<std::size_t>(g) * t_count + t) * 2];
      cat[0] = in.timestamps.hour_of_day[t];
      cat[1] = in.timestamps.day_of_week[t];
    }
  }
  for (double v : x.x_num) {
    if (!std::isfinite(v)) fail(ErrorCode::kMissingData, "non-finite value in the numeric features");
  }
  return x;
}

}  // namespace aqi
