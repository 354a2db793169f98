#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aqi {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Geographic position in radians.
struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Geographic bounding box in radians.
struct BoundingBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;
};

// Box whose south-west corner is `south_west` and whose extent is given in
// meters, using the same local flat-earth conversion as the mesh builder.
BoundingBox bbox_from_extent(LatLon south_west, double width_m, double height_m);

struct GridCell {
  int id = 0;
  int row = 0;
  int col = 0;
  LatLon centroid;
  bool is_context = false;
};

enum class StationKind { kStandardized, kMicro };

struct Station {
  std::string id;
  StationKind kind = StationKind::kStandardized;
  LatLon pos;
  int grid_id = -1;
};

// Row-major mesh over a bounding box. Row 0 is the southern-most band and
// column 0 the western-most, so centroids increase along both axes.
struct GridGraph {
  int n_rows = 0;
  int n_cols = 0;
  double cell_size_m = 0.0;
  BoundingBox bbox;
  LatLon origin;  // south-west corner
  double lat_step = 0.0;  // radians per row
  double lon_step = 0.0;  // radians per column
  std::vector<GridCell> cells;

  int size() const { return n_rows * n_cols; }
  int id(int row, int col) const { return row * n_cols + col; }

  // Cell containing `p`. A point on a shared edge belongs to the cell with
  // the smaller id. Throws kInvalidInput outside the box.
  int locate(LatLon p) const;
  bool contains(LatLon p) const;

  std::vector<int> context_ids() const;
  std::vector<LatLon> centroids() const;
};

GridGraph build_grid_graph(const BoundingBox& bbox, double cell_size_m);

// Sets each station's grid_id and marks context cells (cells with at least
// one standardized station). Idempotent.
GridGraph assign_stations(GridGraph graph, std::span<Station> stations);

struct Fold {
  std::vector<int> train_ids;
  std::vector<int> validation_ids;
};

struct SplitPlan {
  std::vector<int> interpolation_ids;
  std::vector<int> test_ids;
  std::vector<Fold> folds;
  std::uint64_t seed = 0;

  // All grids that take part in cross-validation.
  std::vector<int> cv_pool() const;
};

// Round-half-up share of `count`.
int rounded_share(int count, double fraction);

// 20 % interpolation, 10 % test, remaining grids split into 3 folds.
SplitPlan split_grids(std::vector<int> context_ids, std::uint64_t seed, int n_folds = 3);

std::vector<Station> read_stations(const std::filesystem::path& path);
void write_stations(const std::filesystem::path& path, std::span<const Station> stations);

}  // namespace aqi
