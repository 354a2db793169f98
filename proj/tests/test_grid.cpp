#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "aqi/error.hpp"
#include "aqi/grid.hpp"
#include "aqi/random.hpp"

using namespace aqi;

namespace {

const LatLon kOrigin{deg_to_rad(30.6), deg_to_rad(104.0)};

GridGraph mesh(double width_m, double height_m, double cell = 500.0) {
  return build_grid_graph(bbox_from_extent(kOrigin, width_m, height_m), cell);
}

LatLon cell_point(const GridGraph& g, int id, double dr = 0.0, double dc = 0.0) {
  const GridCell& c = g.cells[static_cast<std::size_t>(id)];
  return {c.centroid.lat + dr * g.lat_step, c.centroid.lon + dc * g.lon_step};
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an aqi::Error");
  return ErrorCode::kIo;
}

std::vector<int> iota_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

TEST_CASE("2 km by 1.5 km with 500 m cells is a 4 x 3 row-major mesh") {
  const GridGraph g = mesh(2000.0, 1500.0);
  CHECK(g.n_cols == 4);
  CHECK(g.n_rows == 3);
  REQUIRE(g.size() == 12);
  for (int id = 0; id < 12; ++id) {
    const GridCell& c = g.cells[static_cast<std::size_t>(id)];
    CHECK(c.id == id);
    CHECK(c.row == id / 4);
    CHECK(c.col == id % 4);
    CHECK(g.id(c.row, c.col) == id);
  }
}

TEST_CASE("a box exactly one cell wide and tall has one cell") {
  CHECK(mesh(500.0, 500.0).size() == 1);
}

TEST_CASE("a 250 km2 study area at 500 m gives about a thousand cells") {
  // 18.5 km x 13.5 km = 249.75 km2 -> 37 x 27 = 999 cells.
  const GridGraph g = mesh(18500.0, 13500.0);
  CHECK(g.n_cols == 37);
  CHECK(g.n_rows == 27);
  CHECK(g.size() == 999);
}

TEST_CASE("centroids increase strictly along rows and columns") {
  const GridGraph g = mesh(3000.0, 2500.0);
  for (int r = 0; r < g.n_rows; ++r)
    for (int c = 0; c < g.n_cols; ++c) {
      const LatLon p = g.cells[static_cast<std::size_t>(g.id(r, c))].centroid;
      if (r + 1 < g.n_rows) CHECK(g.cells[static_cast<std::size_t>(g.id(r + 1, c))].centroid.lat > p.lat);
      if (c + 1 < g.n_cols) CHECK(g.cells[static_cast<std::size_t>(g.id(r, c + 1))].centroid.lon > p.lon);
    }
}

TEST_CASE("degenerate boxes and cell sizes are rejected") {
  BoundingBox flat = bbox_from_extent(kOrigin, 1000.0, 1000.0);
  flat.lat_max = flat.lat_min;
  CHECK(code_of([&] { build_grid_graph(flat, 500.0); }) == ErrorCode::kInvalidInput);
  CHECK(code_of([&] { build_grid_graph(bbox_from_extent(kOrigin, 1000.0, 1000.0), 0.0); }) ==
        ErrorCode::kInvalidInput);
}

TEST_CASE("locate finds the containing cell and sends shared edges to the smaller id") {
  const GridGraph g = mesh(2000.0, 1500.0);
  for (int id = 0; id < g.size(); ++id) CHECK(g.locate(cell_point(g, id, 0.3, -0.3)) == id);
  // Edge between columns 1 and 2 of row 1.
  CHECK(g.locate(cell_point(g, g.id(1, 1), 0.0, 0.5)) == g.id(1, 1));
  // Edge between rows 0 and 1 of column 3.
  CHECK(g.locate(cell_point(g, g.id(0, 3), 0.5, 0.0)) == g.id(0, 3));
  CHECK(code_of([&] { g.locate({g.bbox.lat_max + 1e-6, g.bbox.lon_min}); }) == ErrorCode::kInvalidInput);
}

TEST_CASE("assign_stations marks only standardized-station cells as context") {
  const GridGraph g = mesh(2000.0, 1500.0);
  SUBCASE("one standardized station in cell 7") {
    std::vector<Station> st{{"S1", StationKind::kStandardized, cell_point(g, 7, 0.2, 0.1), -1}};
    const GridGraph out = assign_stations(g, st);
    CHECK(out.context_ids() == std::vector<int>{7});
    CHECK(st[0].grid_id == 7);
  }
  SUBCASE("micro-stations never create context cells") {
    std::vector<Station> st{{"M1", StationKind::kMicro, cell_point(g, 3), -1},
                            {"M2", StationKind::kMicro, cell_point(g, 9), -1}};
    const GridGraph out = assign_stations(g, st);
    CHECK(out.context_ids().empty());
    CHECK(st[1].grid_id == 9);
  }
  SUBCASE("a station outside the box is an error") {
    std::vector<Station> st{{"S1", StationKind::kStandardized, {g.bbox.lat_min - 1e-4, g.bbox.lon_min}, -1}};
    CHECK(code_of([&] { assign_stations(g, st); }) == ErrorCode::kInvalidInput);
  }
}

TEST_CASE("55 standardized stations in 55 distinct cells give 55 context cells") {
  const GridGraph g = mesh(18500.0, 13500.0);
  std::mt19937_64 rng(3);
  std::vector<int> ids = iota_ids(g.size());
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<Station> st;
  for (int i = 0; i < 55; ++i)
    st.push_back({"S" + std::to_string(i), StationKind::kStandardized,
                  cell_point(g, ids[static_cast<std::size_t>(i)], uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4)),
                  -1});
  const GridGraph out = assign_stations(g, st);
  CHECK(out.context_ids().size() == 55);
  // Idempotent.
  const GridGraph again = assign_stations(out, st);
  CHECK(again.context_ids() == out.context_ids());
  for (const Station& s : st) CHECK(s.grid_id == out.locate(s.pos));
}

TEST_CASE("rounded_share rounds half up") {
  CHECK(rounded_share(55, 0.1) == 6);
  CHECK(rounded_share(55, 0.2) == 11);
  CHECK(rounded_share(100, 0.2) == 20);
  CHECK(rounded_share(12, 0.1) == 1);
  CHECK(rounded_share(15, 0.1) == 2);
}

TEST_CASE("split of 100 context grids: 20 interpolation, 10 test, folds 24/23/23") {
  const SplitPlan s = split_grids(iota_ids(100), 9);
  CHECK(s.interpolation_ids.size() == 20);
  CHECK(s.test_ids.size() == 10);
  REQUIRE(s.folds.size() == 3);
  CHECK(s.folds[0].validation_ids.size() == 24);
  CHECK(s.folds[1].validation_ids.size() == 23);
  CHECK(s.folds[2].validation_ids.size() == 23);
  CHECK(s.cv_pool().size() == 70);
}

TEST_CASE("split of 55 context grids: 11 interpolation, 6 test, 38 in folds") {
  const SplitPlan s = split_grids(iota_ids(55), 1);
  CHECK(s.interpolation_ids.size() == 11);
  CHECK(s.test_ids.size() == 6);
  CHECK(s.cv_pool().size() == 38);
}

TEST_CASE("splits partition the context set and are reproducible") {
  for (int n : {10, 12, 17, 55, 101}) {
    for (std::uint64_t seed : {0ULL, 5ULL, 77ULL}) {
      std::vector<int> ctx;
      for (int i = 0; i < n; ++i) ctx.push_back(3 * i + 1);
      const SplitPlan s = split_grids(ctx, seed);
      std::multiset<int> seen(s.interpolation_ids.begin(), s.interpolation_ids.end());
      seen.insert(s.test_ids.begin(), s.test_ids.end());
      for (const Fold& f : s.folds) seen.insert(f.validation_ids.begin(), f.validation_ids.end());
      CHECK(seen == std::multiset<int>(ctx.begin(), ctx.end()));
      for (const Fold& f : s.folds) {
        std::vector<int> all = f.train_ids;
        all.insert(all.end(), f.validation_ids.begin(), f.validation_ids.end());
        std::sort(all.begin(), all.end());
        std::vector<int> pool = s.cv_pool();
        std::sort(pool.begin(), pool.end());
        CHECK(all == pool);
      }
      const SplitPlan t = split_grids(ctx, seed);
      CHECK(t.interpolation_ids == s.interpolation_ids);
      CHECK(t.test_ids == s.test_ids);
      for (std::size_t k = 0; k < s.folds.size(); ++k) CHECK(t.folds[k].validation_ids == s.folds[k].validation_ids);
    }
  }
}

TEST_CASE("fewer than 10 context grids cannot be split") {
  CHECK(code_of([] { split_grids(iota_ids(9), 1); }) == ErrorCode::kInsufficientLabels);
}

TEST_CASE("stations round-trip through the stations file in degrees") {
  const auto path = std::filesystem::temp_directory_path() / "aqi_test_stations.csv";
  std::vector<Station> st{{"SS001", StationKind::kStandardized, {deg_to_rad(30.61), deg_to_rad(104.02)}, -1},
                          {"MS007", StationKind::kMicro, {deg_to_rad(30.65), deg_to_rad(104.05)}, -1}};
  write_stations(path, st);
  const std::vector<Station> back = read_stations(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == st[i].id);
    CHECK(back[i].kind == st[i].kind);
    CHECK(back[i].pos.lat == doctest::Approx(st[i].pos.lat).epsilon(1e-12));
    CHECK(back[i].pos.lon == doctest::Approx(st[i].pos.lon).epsilon(1e-12));
  }
  std::filesystem::remove(path);
}
