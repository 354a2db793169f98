#include "aqi/grid.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "aqi/csv.hpp"
#include "aqi/error.hpp"

namespace aqi {
namespace {

constexpr double kMetersPerRadian = kEarthRadiusKm * 1000.0;

// Number of cells needed to cover `extent`; tolerant to round-off so that an
// extent of exactly k cells does not spill into k + 1.
int cells_to_cover(double extent, double step) {
  double ratio = extent / step;
  double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) < 1e-9 * std::max(1.0, ratio)) return std::max(1, static_cast<int>(nearest));
  return std::max(1, static_cast<int>(std::ceil(ratio)));
}

// Index of the band containing `offset`; boundaries go to the lower band.
int band_index(double offset, double step, int count) {
  double ratio = offset / step;
  double nearest = std::round(ratio);
  int idx;
  if (std::abs(ratio - nearest) < 1e-9 * std::max(1.0, std::abs(ratio))) {
    idx = static_cast<int>(nearest) - 1;
  } else {
    idx = static_cast<int>(std::floor(ratio));
  }
  return std::clamp(idx, 0, count - 1);
}

}  // namespace

BoundingBox bbox_from_extent(LatLon south_west, double width_m, double height_m) {
  BoundingBox box;
  box.lat_min = south_west.lat;
  box.lat_max = south_west.lat + height_m / kMetersPerRadian;
  double lat_mid = 0.5 * (box.lat_min + box.lat_max);
  box.lon_min = south_west.lon;
  box.lon_max = south_west.lon + width_m / (kMetersPerRadian * std::cos(lat_mid));
  return box;
}

bool GridGraph::contains(LatLon p) const {
  return p.lat >= bbox.lat_min && p.lat <= bbox.lat_max && p.lon >= bbox.lon_min &&
         p.lon <= bbox.lon_max;
}

int GridGraph::locate(LatLon p) const {
  if (!contains(p)) fail(ErrorCode::kInvalidInput, "point outside the grid bounding box");
  int row = band_index(p.lat - bbox.lat_min, lat_step, n_rows);
  int col = band_index(p.lon - bbox.lon_min, lon_step, n_cols);
  return id(row, col);
}

std::vector<int> GridGraph::context_ids() const {
  std::vector<int> out;
  for (const auto& cell : cells) {
    if (cell.is_context) out.push_back(cell.id);
  }
  return out;
}

std::vector<LatLon> GridGraph::centroids() const {
  std::vector<LatLon> out;
  out.reserve(cells.size());
  for (const auto& cell : cells) out.push_back(cell.centroid);
  return out;
}

GridGraph build_grid_graph(const BoundingBox& bbox, double cell_size_m) {
  if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) {
    fail(ErrorCode::kInvalidInput, "cell size must be positive");
  }
  if (!(bbox.lat_max > bbox.lat_min) || !(bbox.lon_max > bbox.lon_min)) {
    fail(ErrorCode::kInvalidInput, "degenerate bounding box");
  }
  GridGraph g;
  g.bbox = bbox;
  g.cell_size_m = cell_size_m;
  g.origin = {bbox.lat_min, bbox.lon_min};
  double lat_mid = 0.5 * (bbox.lat_min + bbox.lat_max);
  g.lat_step = cell_size_m / kMetersPerRadian;
  g.lon_step = cell_size_m / (kMetersPerRadian * std::cos(lat_mid));
  g.n_rows = cells_to_cover(bbox.lat_max - bbox.lat_min, g.lat_step);
  g.n_cols = cells_to_cover(bbox.lon_max - bbox.lon_min, g.lon_step);
  // The mesh may overhang the box by less than one cell; widen the box so
  // every cell lies inside it.
  g.bbox.lat_max = std::max(bbox.lat_max, bbox.lat_min + g.n_rows * g.lat_step);
  g.bbox.lon_max = std::max(bbox.lon_max, bbox.lon_min + g.n_cols * g.lon_step);
  g.cells.reserve(static_cast<std::size_t>(g.size()));
  for (int r = 0; r < g.n_rows; ++r) {
    for (int c = 0; c < g.n_cols; ++c) {
      GridCell cell;
      cell.id = g.id(r, c);
      cell.row = r;
      cell.col = c;
      cell.centroid = {bbox.lat_min + (r + 0.5) * g.lat_step, bbox.lon_min + (c + 0.5) * g.lon_step};
      g.cells.push_back(cell);
    }
  }
  return g;
}

GridGraph assign_stations(GridGraph graph, std::span<Station> stations) {
  for (auto& cell : graph.cells) cell.is_context = false;
  for (auto& st : stations) {
    if (!graph.contains(st.pos)) {
      fail(ErrorCode::kInvalidInput, "station '" + st.id + "' lies outside the bounding box");
    }
    st.grid_id = graph.locate(st.pos);
    if (st.kind == StationKind::kStandardized) graph.cells[st.grid_id].is_context = true;
  }
  return graph;
}

std::vector<int> SplitPlan::cv_pool() const {
  std::vector<int> out;
  for (const auto& f : folds) out.insert(out.end(), f.validation_ids.begin(), f.validation_ids.end());
  std::sort(out.begin(), out.end());
  return out;
}

int rounded_share(int count, double fraction) {
  return static_cast<int>(std::floor(count * fraction + 0.5 + 1e-9));
}

SplitPlan split_grids(std::vector<int> context_ids, std::uint64_t seed, int n_folds) {
  std::sort(context_ids.begin(), context_ids.end());
  context_ids.erase(std::unique(context_ids.begin(), context_ids.end()), context_ids.end());
  const int n = static_cast<int>(context_ids.size());
  if (n < 10) {
    fail(ErrorCode::kInsufficientLabels,
         "need at least 10 context grids, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order depends only on the seed.
  for (int i = n - 1; i > 0; --i) {
    auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(context_ids[i], context_ids[j]);
  }
  const int n_interp = rounded_share(n, 0.2);
  const int n_test = rounded_share(n, 0.1);
  const int n_pool = n - n_interp - n_test;

  SplitPlan plan;
  plan.seed = seed;
  auto it = context_ids.begin();
  plan.interpolation_ids.assign(it, it + n_interp);
  it += n_interp;
  plan.test_ids.assign(it, it + n_test);
  it += n_test;
  std::vector<int> pool(it, context_ids.end());

  std::vector<std::vector<int>> chunks(n_folds);
  int offset = 0;
  for (int f = 0; f < n_folds; ++f) {
    int size = n_pool / n_folds + (f < n_pool % n_folds ? 1 : 0);
    chunks[f].assign(pool.begin() + offset, pool.begin() + offset + size);
    offset += size;
  }
  for (int f = 0; f < n_folds; ++f) {
    Fold fold;
    fold.validation_ids = chunks[f];
    for (int other = 0; other < n_folds; ++other) {
      if (other != f) fold.train_ids.insert(fold.train_ids.end(), chunks[other].begin(), chunks[other].end());
    }
    std::sort(fold.validation_ids.begin(), fold.validation_ids.end());
    std::sort(fold.train_ids.begin(), fold.train_ids.end());
    plan.folds.push_back(std::move(fold));
  }
  std::sort(plan.interpolation_ids.begin(), plan.interpolation_ids.end());
  std::sort(plan.test_ids.begin(), plan.test_ids.end());
  return plan;
}

std::vector<Station> read_stations(const std::filesystem::path& path) {
  auto table = read_csv(path);
  auto c_id = table.column("id");
  auto c_kind = table.column("kind");
  auto c_lat = table.column("lat_deg");
  auto c_lon = table.column("lon_deg");
  std::vector<Station> out;
  for (const auto& row : table.rows) {
    Station st;
    st.id = row[c_id];
    if (row[c_kind] == "standardized") {
      st.kind = StationKind::kStandardized;
    } else if (row[c_kind] == "micro") {
      st.kind = StationKind::kMicro;
    } else {
      fail(ErrorCode::kInvalidInput, "unknown station kind '" + row[c_kind] + "'");
    }
    st.pos = {deg_to_rad(parse_double(row[c_lat])), deg_to_rad(parse_double(row[c_lon]))};
    out.push_back(std::move(st));
  }
  return out;
}

void write_stations(const std::filesystem::path& path, std::span<const Station> stations) {
  CsvWriter w({"id", "kind", "lat_deg", "lon_deg"});
  for (const auto& st : stations) {
    w.row(st.id, st.kind == StationKind::kStandardized ? "standardized" : "micro",
          rad_to_deg(st.pos.lat), rad_to_deg(st.pos.lon));
  }
  write_file_atomic(path, w.str());
}

}  // namespace aqi
