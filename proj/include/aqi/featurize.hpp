#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "aqi/grid.hpp"

namespace aqi {

enum class Pollutant { kNO2, kO3, kPM25 };

Pollutant parse_pollutant(std::string_view name);
std::string to_string(Pollutant p);
// The co-reacting pollutant used as the X^REP feature for each target.
Pollutant relevant_pollutant(Pollutant target);
inline constexpr Pollutant kAllPollutants[] = {Pollutant::kNO2, Pollutant::kO3, Pollutant::kPM25};

struct FeatureSchema {
  std::vector<std::string> numeric_names;
  std::vector<std::string> categorical_names;
  std::vector<int> cardinalities;  // per categorical feature
  std::vector<int> embed_dims;     // Q_j per categorical feature
  std::vector<std::string> adjacency_names;

  int numeric_count() const { return static_cast<int>(numeric_names.size()); }
  int categorical_count() const { return static_cast<int>(categorical_names.size()); }
  int embedded_width() const;
  // Numeric + categorical + graph-structure features.
  int feature_count() const;

  std::string to_text() const;
  static FeatureSchema from_text(const std::string& text);
};

// x_num is [grids, hours, U] and x_cat is [grids, hours, V], both row-major.
struct FeatureTensor {
  int n_grids = 0;
  int n_hours = 0;
  FeatureSchema schema;
  std::vector<double> x_num;
  std::vector<int> x_cat;

  double num(int g, int t, int u) const {
    return x_num[(static_cast<std::size_t>(g) * n_hours + t) * schema.numeric_count() + u];
  }
  double& num(int g, int t, int u) {
    return x_num[(static_cast<std::size_t>(g) * n_hours + t) * schema.numeric_count() + u];
  }
  int cat(int g, int t, int v) const {
    return x_cat[(static_cast<std::size_t>(g) * n_hours + t) * schema.categorical_count() + v];
  }

  // Keeps only the features named in `subset` (which must be drawn from this
  // tensor's schema), in the order of this schema.
  FeatureTensor select(const FeatureSchema& subset) const;
};

// Binary N x N matrix.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(int n) : n_(n), bits_(static_cast<std::size_t>(n) * n, 0) {}
  static Adjacency identity(int n);

  int size() const { return n_; }
  std::uint8_t operator()(int i, int j) const { return bits_[static_cast<std::size_t>(i) * n_ + j]; }
  void set(int i, int j, bool on = true) { bits_[static_cast<std::size_t>(i) * n_ + j] = on ? 1 : 0; }
  bool symmetric() const;
  std::size_t edge_count() const;
  bool operator==(const Adjacency& other) const = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct AdjacencyPair {
  Adjacency od;
  Adjacency se;
};

struct TrajectoryPoint {
  std::string truck_id;
  int t = 0;
  int grid_id = 0;
};

// A(i, j) = 1 when some truck moves from grid i to grid j between two
// consecutive points; the diagonal is always 1. Points must be
// time-ordered within each truck.
Adjacency build_od_adjacency(int n_grids, std::span<const TrajectoryPoint> points, bool symmetrize = false);

struct RoadSegment {
  std::string road_id;
  int grid_id = 0;
  double length_km = 0.0;           // length of the road inside the grid
  std::vector<double> congestion;   // hourly congestion index of the whole road
};

// Length-weighted mean congestion of the roads inside a grid; 0 without roads.
double grid_congestion_index(std::span<const RoadSegment> segments, int grid_id, int t);
Eigen::MatrixXd congestion_index_matrix(std::span<const RoadSegment> segments, int n_grids, int n_hours);

struct KMeansOptions {
  int restarts = 20;
  int max_iterations = 300;
};

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // [k x features]
  double inertia = 0.0;
  int restart = 0;
};

// Column-wise z-score; constant columns become zero.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x);

// Lloyd iterations from k-means++ seeds; best inertia over restarts, ties
// resolved by the lowest restart index.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

// Same-cluster relation of K-means on the standardized geographic features.
Adjacency build_semantic_adjacency(const Eigen::MatrixXd& x_ge, int k, std::uint64_t seed,
                                   const KMeansOptions& options = {});

// Hourly series observed at a fixed position.
struct ContextSeries {
  LatLon pos;
  int grid_id = -1;
  std::vector<double> values;
};

using PollutantContexts = std::map<Pollutant, std::vector<ContextSeries>>;

// IDW field [grids x hours] of the pollutant most relevant to `target`.
Eigen::MatrixXd rep_feature(const GridGraph& graph, const PollutantContexts& contexts, Pollutant target,
                            double p = 2.0);

// IDW field [grids x hours] of arbitrary context series.
Eigen::MatrixXd idw_field(const GridGraph& graph, std::span<const ContextSeries> contexts, double p);

int truck_flow(std::span<const TrajectoryPoint> points, int grid_id, int hour);
Eigen::MatrixXd truck_flow_matrix(std::span<const TrajectoryPoint> points, int n_grids, int n_hours);

struct HourStamp {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;

  static HourStamp parse(std::string_view text);  // "YYYY-MM-DDTHH[:MM]"
  HourStamp plus_hours(long long hours) const;
  std::string to_string() const;
};

struct TimestampCodes {
  std::vector<int> hour_of_day;  // 0..23
  std::vector<int> day_of_week;  // 0..6, Monday = 0
};

TimestampCodes encode_timestamps(std::span<const HourStamp> stamps);

// Linear interpolation across interior gaps, then next-value fill for what
// is still missing; a trailing gap keeps the last observed value.
std::vector<double> fill_missing(std::span<const double> series);

struct FeatureInputs {
  int n_grids = 0;
  int n_hours = 0;
  Eigen::MatrixXd trend;       // X^TRL [grids x hours]
  Eigen::MatrixXd rep;         // X^REP [grids x hours]
  std::string rep_name = "rep";
  std::vector<std::string> weather_names;
  Eigen::MatrixXd weather;     // X^ME [hours x meteorological factors]
  Eigen::MatrixXd congestion;  // X^CI [grids x hours]
  std::vector<std::string> geo_names;
  Eigen::MatrixXd geographic;  // X^GE [grids x columns]
  std::optional<Eigen::MatrixXd> flow;  // X^FL [grids x hours]
  TimestampCodes timestamps;
  int embed_dim = 8;
  bool with_adjacency = true;
  int expected_feature_count = 0;  // 0 skips the check
};

FeatureTensor assemble_features(const FeatureInputs& inputs);

}  // namespace aqi
