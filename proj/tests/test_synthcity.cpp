#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "aqi/dataset.hpp"
#include "aqi/decompose.hpp"
#include "aqi/synthcity.hpp"
#include "support.hpp"

using namespace aqi;
using aqi::testing::code_of;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> row(const Eigen::MatrixXd& m, int r) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.cols(); ++t) out[static_cast<std::size_t>(t)] = m(r, t);
  return out;
}

std::string slurp_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream all;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    all << f.filename().string() << '\n' << in.rdbuf();
  }
  return all.str();
}

SynthConfig small() {
  SynthConfig c;
  c.n_rows = 6;
  c.n_cols = 7;
  c.hours = 96;
  c.n_ss = 8;
  c.n_ms = 10;
  return c;
}

}  // namespace

TEST_CASE("an identity sensor reads the truth") {
  SynthConfig c = small();
  c.sensor = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  c.ss_noise_std = 0.0;
  DatasetBundle b = generate(c);
  const GridGraph g = assign_stations(b.grid(), b.stations);
  for (const Station& st : b.stations)
    for (Pollutant p : kAllPollutants) {
      const std::vector<double>& r = b.readings.at(p).at(st.id);
      for (int t = 0; t < c.hours; ++t)
        CHECK(r[static_cast<std::size_t>(t)] == doctest::Approx(b.truth.at(p)(st.grid_id, t)).epsilon(1e-12));
    }
  CHECK(g.size() == 42);
}

TEST_CASE("truth fields are finite and nonnegative") {
  const DatasetBundle b = generate(small());
  for (Pollutant p : kAllPollutants) {
    const Eigen::MatrixXd& f = b.truth.at(p);
    CHECK(f.rows() == 42);
    CHECK(f.cols() == 96);
    CHECK(f.allFinite());
    CHECK(f.minCoeff() >= 0.0);
  }
}

TEST_CASE("default city: NO2 and O3 diurnal cycles are anti-correlated in every grid") {
  const DatasetBundle b = generate(SynthConfig{});
  const Eigen::MatrixXd& no2 = b.truth.at(Pollutant::kNO2);
  const Eigen::MatrixXd& o3 = b.truth.at(Pollutant::kO3);
  // The start time is midnight, so column t has hour of day t % 24.
  const auto profile = [](const Eigen::MatrixXd& m, int g) {
    std::vector<double> out(24, 0.0);
    for (Eigen::Index t = 0; t < m.cols(); ++t) out[static_cast<std::size_t>(t % 24)] += m(g, t);
    return out;
  };
  int negative = 0;
  for (int g = 0; g < no2.rows(); ++g) negative += pearson(profile(no2, g), profile(o3, g)) < 0.0 ? 1 : 0;
  CHECK(negative == no2.rows());
}

TEST_CASE("default city: micro-station trends track the co-located truth trend") {
  const DatasetBundle b = generate(SynthConfig{});
  const GridGraph g = b.grid();
  std::vector<Station> st = b.stations;
  assign_stations(g, st);
  double worst = 1.0;
  int micro = 0;
  for (const Station& s : st) {
    if (s.kind != StationKind::kMicro) continue;
    ++micro;
    const Decomposition dm = stl_decompose(b.readings.at(Pollutant::kNO2).at(s.id));
    const Decomposition dt = stl_decompose(row(b.truth.at(Pollutant::kNO2), s.grid_id));
    worst = std::min(worst, pearson(dm.trend, dt.trend));
  }
  CHECK(micro == 60);
  CHECK(worst > 0.8);
}

TEST_CASE("the default city has the documented scale") {
  const SynthConfig c;
  CHECK(c.n_rows * c.n_cols == 400);
  CHECK(c.hours == 21 * 24);
  const DatasetBundle b = generate(c);
  int ss = 0, ms = 0;
  for (const Station& s : b.stations) (s.kind == StationKind::kStandardized ? ss : ms)++;
  CHECK(ss == 12);
  CHECK(ms == 60);
  CHECK(b.geo_names.size() == 27);
  CHECK(b.weather_names.size() == 7);
}

TEST_CASE("the noise column is opt-in") {
  SynthConfig c = small();
  CHECK(generate(c).weather_names.back() != "noise");
  c.noise_feature = true;
  const DatasetBundle b = generate(c);
  CHECK(b.weather_names.back() == "noise");
  CHECK(b.weather.cols() == 8);
}

TEST_CASE("same seed gives byte-identical files; another seed does not") {
  const auto root = std::filesystem::temp_directory_path() / "aqi_test_synth";
  std::filesystem::remove_all(root);
  write_bundle(root / "a", generate(small()));
  write_bundle(root / "b", generate(small()));
  SynthConfig other = small();
  other.seed = 43;
  write_bundle(root / "c", generate(other));
  CHECK(slurp_dir(root / "a") == slurp_dir(root / "b"));
  CHECK(slurp_dir(root / "a") != slurp_dir(root / "c"));
  const DatasetBundle back = read_bundle(root / "a");
  const DatasetBundle orig = generate(small());
  CHECK(back.hours == orig.hours);
  CHECK(back.stations.size() == orig.stations.size());
  CHECK(back.geo_names == orig.geo_names);
  CHECK((back.geographic - orig.geographic).cwiseAbs().maxCoeff() <= 1e-9);
  std::filesystem::remove_all(root);
}

TEST_CASE("invalid synthetic configurations are rejected") {
  SynthConfig c = small();
  c.n_ss = 4;
  CHECK(code_of([&] { generate(c); }) == ErrorCode::kInvalidConfig);
  c = small();
  c.hours = 48;
  CHECK(code_of([&] { generate(c); }) == ErrorCode::kInvalidConfig);
  c = small();
  c.sensor.exponent = 0.0;
  CHECK(code_of([&] { generate(c); }) == ErrorCode::kInvalidConfig);
}
