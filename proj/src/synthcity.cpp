#include "aqi/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "aqi/error.hpp"
#include "aqi/random.hpp"

namespace aqi {

using Eigen::MatrixXd;

void SynthConfig::validate() const {
  require(n_rows >= 2 && n_cols >= 2, ErrorCode::kInvalidConfig, "synthetic grid must be at least 2 x 2");
  require(cell_size_m > 0.0, ErrorCode::kInvalidConfig, "cell_size_m must be > 0");
  require(hours >= 72, ErrorCode::kInvalidConfig, "hours must be >= 72 (three daily cycles)");
  require(n_ss >= 5, ErrorCode::kInvalidConfig, "n_ss must be >= 5");
  require(n_ms >= 1, ErrorCode::kInvalidConfig, "n_ms must be >= 1");
  require(n_ss <= n_rows * n_cols && n_ms <= n_rows * n_cols, ErrorCode::kInvalidConfig,
          "more stations than grid cells");
  require(n_sources >= 1 && n_roads >= 0 && n_trucks >= 0, ErrorCode::kInvalidConfig, "invalid source/road/truck count");
  require(ss_noise_std >= 0.0 && field_noise_std >= 0.0 && sensor.noise_std >= 0.0, ErrorCode::kInvalidConfig,
          "noise levels must be >= 0");
  require(sensor.exponent > 0.0 && sensor.gain > 0.0 && sensor.spread >= 0.0 && sensor.spread < 1.0,
          ErrorCode::kInvalidConfig, "invalid sensor distortion");
}

namespace {

enum Stream : std::uint64_t {
  kSources = 1,
  kGreen,
  kRoads,
  kTrucks,
  kWeather,
  kEpisode,
  kFieldNoise,
  kPlacement,
  kStandardNoise,
  kMicro,
  kGeographic,
  kNoiseFeature,
};

constexpr double kTwoPi = 2.0 * kPi;

struct Bump {
  double row, col, sigma, amplitude;
};

// Sum of Gaussian bumps at cell centers, scaled to a maximum of 1.
std::vector<double> bump_field(const std::vector<Bump>& bumps, int rows, int cols) {
  std::vector<double> f(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double v = 0.0;
      for (const Bump& b : bumps) {
        const double dr = r + 0.5 - b.row;
        const double dc = c + 0.5 - b.col;
        v += b.amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
      }
      f[static_cast<std::size_t>(r) * cols + c] = v;
    }
  const double peak = *std::max_element(f.begin(), f.end());
  if (peak > 0.0)
    for (double& v : f) v /= peak;
  return f;
}

// Smooth multiplicative factor around 1: a few slow sinusoids plus an AR(1).
std::vector<double> slow_factor(std::mt19937_64& rng, int hours, double strength) {
  std::vector<double> z(static_cast<std::size_t>(hours), 0.0);
  for (int k = 0; k < 3; ++k) {
    const double period = uniform(rng, 60.0, 200.0);
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double amp = uniform(rng, 0.5, 1.0);
    for (int t = 0; t < hours; ++t) z[static_cast<std::size_t>(t)] += amp * std::sin(kTwoPi * t / period + phase);
  }
  double ar = 0.0;
  for (int t = 0; t < hours; ++t) {
    ar = 0.97 * ar + 0.08 * standard_normal(rng);
    z[static_cast<std::size_t>(t)] += ar;
  }
  std::vector<double> out(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) out[t] = std::exp(strength * z[t] / 2.0);
  return out;
}

}  // namespace

DatasetBundle generate(const SynthConfig& cfg) {
  cfg.validate();
  const int rows = cfg.n_rows;
  const int cols = cfg.n_cols;
  const int n = rows * cols;
  const int hours = cfg.hours;
  const auto stream = [&](Stream s) { return std::mt19937_64(mix_seed(cfg.seed, s)); };

  DatasetBundle b;
  b.cell_size_m = cfg.cell_size_m;
  b.start_time = cfg.start_time;
  b.hours = hours;
  const LatLon origin{deg_to_rad(cfg.origin_lat_deg), deg_to_rad(cfg.origin_lon_deg)};
  b.bbox = bbox_from_extent(origin, cols * cfg.cell_size_m, rows * cfg.cell_size_m);
  const GridGraph graph = b.grid();
  require(graph.n_rows == rows && graph.n_cols == cols, ErrorCode::kInvalidConfig, "mesh does not match the config");
  const auto position = [&](double r, double c) {
    return LatLon{graph.origin.lat + r * graph.lat_step, graph.origin.lon + c * graph.lon_step};
  };
  const auto stamps = b.timestamps();
  const TimestampCodes codes = encode_timestamps(stamps);

  // Emission sources and green space.
  std::vector<Bump> sources;
  {
    auto rng = stream(kSources);
    for (int k = 0; k < cfg.n_sources; ++k)
      sources.push_back({uniform(rng, 1.0, rows - 1.0), uniform(rng, 1.0, cols - 1.0), uniform(rng, 1.0, 2.2),
                         uniform(rng, 0.5, 1.0)});
  }
  const std::vector<double> S = bump_field(sources, rows, cols);
  std::vector<double> G;
  {
    auto rng = stream(kGreen);
    std::vector<Bump> parks;
    for (int k = 0; k < 3; ++k)
      parks.push_back({uniform(rng, 0.0, rows), uniform(rng, 0.0, cols), uniform(rng, 2.0, 4.0), 1.0});
    G = bump_field(parks, rows, cols);
  }

  // Roads: straight horizontal or vertical runs, most through a source.
  std::vector<double> road_class_length(static_cast<std::size_t>(n) * 3, 0.0);
  {
    auto rng = stream(kRoads);
    for (int r_idx = 0; r_idx < cfg.n_roads; ++r_idx) {
      const bool horizontal = uniform01(rng) < 0.5;
      const int span = horizontal ? cols : rows;
      const int across = horizontal ? rows : cols;
      int line;
      if (uniform01(rng) < 0.6) {
        const Bump& s = sources[uniform_index(rng, sources.size())];
        line = std::clamp(static_cast<int>(horizontal ? s.row : s.col), 0, across - 1);
      } else {
        line = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(across)));
      }
      const int length = std::min(span, 8 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(span))));
      const int begin = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(span - length + 1)));
      std::vector<int> cells;
      double s_mean = 0.0;
      for (int k = begin; k < begin + length; ++k) {
        const int g = horizontal ? graph.id(line, k) : graph.id(k, line);
        cells.push_back(g);
        s_mean += S[static_cast<std::size_t>(g)];
      }
      s_mean /= static_cast<double>(cells.size());
      const double base = 0.8 + 1.5 * s_mean + uniform(rng, 0.0, 0.3);
      std::vector<double> congestion(static_cast<std::size_t>(hours));
      for (int t = 0; t < hours; ++t) {
        const double h = codes.hour_of_day[static_cast<std::size_t>(t)];
        const double rush = std::exp(-(h - 8.0) * (h - 8.0) / 4.0) + std::exp(-(h - 18.0) * (h - 18.0) / 4.0);
        const double weekend = codes.day_of_week[static_cast<std::size_t>(t)] >= 5 ? 0.8 : 1.0;
        congestion[static_cast<std::size_t>(t)] =
            std::max(0.0, base * weekend * (0.6 + 0.8 * rush) + 0.05 * standard_normal(rng));
      }
      char id[16];
      std::snprintf(id, sizeof id, "R%03d", r_idx);
      for (int g : cells) {
        const double len = cfg.cell_size_m / 1000.0 * uniform(rng, 0.6, 1.0);
        b.roads.push_back({id, g, len, congestion});
        road_class_length[static_cast<std::size_t>(g) * 3 + static_cast<std::size_t>(r_idx % 3)] += len;
      }
    }
  }
  const MatrixXd ci = congestion_index_matrix(b.roads, n, hours);

  // Construction-waste trucks shuttle between sites near sources at night.
  MatrixXd flow = MatrixXd::Zero(n, hours);
  {
    auto rng = stream(kTrucks);
    for (int k = 0; k < cfg.n_trucks; ++k) {
      const Bump& site = sources[uniform_index(rng, sources.size())];
      const double o_r = std::clamp(site.row + uniform(rng, -1.5, 1.5), 0.01, rows - 0.01);
      const double o_c = std::clamp(site.col + uniform(rng, -1.5, 1.5), 0.01, cols - 0.01);
      const double d_r = uniform(rng, 0.01, rows - 0.01);
      const double d_c = uniform(rng, 0.01, cols - 0.01);
      char id[16];
      std::snprintf(id, sizeof id, "T%03d", k);
      int phase = static_cast<int>(uniform_index(rng, 6));
      for (int t = 0; t < hours; ++t) {
        const int h = codes.hour_of_day[static_cast<std::size_t>(t)];
        if (!(h >= 20 || h <= 5)) continue;
        const double frac = std::abs(3 - phase % 6) / 3.0;  // 1, 2/3, 1/3, 0, 1/3, 2/3 ...
        ++phase;
        const double r = o_r + (1.0 - frac) * (d_r - o_r) + uniform(rng, -0.2, 0.2);
        const double c = o_c + (1.0 - frac) * (d_c - o_c) + uniform(rng, -0.2, 0.2);
        const LatLon p = position(std::clamp(r, 0.01, rows - 0.01), std::clamp(c, 0.01, cols - 0.01));
        b.trajectories.push_back({id, t, p});
        flow(graph.locate(p), t) += 1.0;
      }
    }
  }

  // Weather, uniform in space.
  b.weather_names = {"temperature", "humidity", "wind_speed", "wind_dir_sin", "wind_dir_cos", "pressure",
                     "precipitation"};
  if (cfg.noise_feature) b.weather_names.push_back("noise");
  b.weather = MatrixXd::Zero(hours, static_cast<Eigen::Index>(b.weather_names.size()));
  {
    auto rng = stream(kWeather);
    const std::vector<double> synoptic = slow_factor(rng, hours, 1.0);
    double wind_ar = 0.0, direction = uniform(rng, 0.0, kTwoPi), rain_left = 0.0, rain_rate = 0.0;
    for (int t = 0; t < hours; ++t) {
      const double h = codes.hour_of_day[static_cast<std::size_t>(t)];
      const double day = std::sin(kTwoPi * (h - 9.0) / 24.0);
      const double syn = std::log(synoptic[static_cast<std::size_t>(t)]);
      wind_ar = 0.9 * wind_ar + 0.3 * standard_normal(rng);
      direction += 0.15 * standard_normal(rng);
      if (rain_left <= 0.0 && uniform01(rng) < 0.02) {
        rain_left = 2.0 + static_cast<double>(uniform_index(rng, 5));
        rain_rate = uniform(rng, 0.5, 4.0);
      }
      const double precip = rain_left > 0.0 ? rain_rate : 0.0;
      rain_left -= 1.0;
      b.weather(t, 0) = 14.0 + 6.0 * day + 3.0 * syn + 0.5 * standard_normal(rng);
      b.weather(t, 1) = std::clamp(70.0 - 15.0 * day + 3.0 * standard_normal(rng) + 5.0 * precip, 20.0, 100.0);
      b.weather(t, 2) = std::max(0.3, 2.0 + wind_ar + 0.6 * std::sin(kTwoPi * (h - 14.0) / 24.0));
      b.weather(t, 3) = std::sin(direction);
      b.weather(t, 4) = std::cos(direction);
      b.weather(t, 5) = 1010.0 - 4.0 * syn + 0.3 * standard_normal(rng);
      b.weather(t, 6) = precip;
    }
    if (cfg.noise_feature) {
      auto noise_rng = stream(kNoiseFeature);
      for (int t = 0; t < hours; ++t) b.weather(t, 7) = standard_normal(noise_rng);
    }
  }

  // True fields.
  std::vector<double> episode, episode_o3;
  {
    auto rng = stream(kEpisode);
    episode = slow_factor(rng, hours, 0.5);
    episode_o3 = slow_factor(rng, hours, 0.3);
  }
  MatrixXd no2(n, hours), o3(n, hours), pm(n, hours);
  {
    auto rng = stream(kFieldNoise);
    std::vector<double> ar(static_cast<std::size_t>(n) * 3, 0.0);
    const double innovation = cfg.field_noise_std * std::sqrt(1.0 - 0.7 * 0.7);
    for (int t = 0; t < hours; ++t) {
      const double h = codes.hour_of_day[static_cast<std::size_t>(t)];
      const double night = 1.0 + 0.35 * std::cos(kTwoPi * (h - 1.0) / 24.0);
      const double sun = (h >= 7.0 && h <= 21.0) ? std::sin(kPi * (h - 7.0) / 14.0) : 0.0;
      const double wind = b.weather(t, 2);
      const double dilution = std::clamp(std::sqrt(2.0 / wind), 0.5, 2.0);
      const double precip = b.weather(t, 6);
      const double humidity = b.weather(t, 1);
      const double e = episode[static_cast<std::size_t>(t)];
      for (int g = 0; g < n; ++g) {
        const double s = S[static_cast<std::size_t>(g)];
        const double green = G[static_cast<std::size_t>(g)];
        for (int p = 0; p < 3; ++p) {
          double& a = ar[static_cast<std::size_t>(g) * 3 + p];
          a = 0.7 * a + innovation * standard_normal(rng);
        }
        const double* eps = &ar[static_cast<std::size_t>(g) * 3];
        no2(g, t) = e * dilution * night * (12.0 + 45.0 * s + 6.0 * ci(g, t) + 1.5 * flow(g, t)) - 5.0 * green + eps[0];
        o3(g, t) = episode_o3[static_cast<std::size_t>(t)] * (35.0 + 55.0 * sun) * (1.0 - 0.35 * s * (1.0 - sun)) +
                   4.0 * green - 0.3 * no2(g, t) + eps[1];  // titration by NO2
        pm(g, t) = e * dilution * (20.0 + 30.0 * s + 0.15 * humidity) * (1.0 - std::min(0.5, 0.08 * precip)) + eps[2];
      }
    }
  }
  no2 = no2.cwiseMax(0.0);
  o3 = o3.cwiseMax(0.0);
  pm = pm.cwiseMax(0.0);
  b.truth[Pollutant::kNO2] = no2;
  b.truth[Pollutant::kO3] = o3;
  b.truth[Pollutant::kPM25] = pm;

  // Stations on distinct cells (per kind), placed inside the cell interior.
  {
    auto rng = stream(kPlacement);
    const auto pick = [&](int count) {
      std::vector<int> ids(static_cast<std::size_t>(n));
      for (int g = 0; g < n; ++g) ids[static_cast<std::size_t>(g)] = g;
      for (int i = 0; i < count; ++i)
        std::swap(ids[static_cast<std::size_t>(i)],
                  ids[static_cast<std::size_t>(i) + uniform_index(rng, static_cast<std::uint64_t>(n - i))]);
      ids.resize(static_cast<std::size_t>(count));
      return ids;
    };
    const auto place = [&](int g, StationKind kind, const char* prefix, int index) {
      const int r = g / cols;
      const int c = g % cols;
      char id[16];
      std::snprintf(id, sizeof id, "%s%03d", prefix, index);
      const LatLon p = position(r + 0.5 + uniform(rng, -0.35, 0.35), c + 0.5 + uniform(rng, -0.35, 0.35));
      b.stations.push_back({id, kind, p, g});
    };
    const std::vector<int> ss = pick(cfg.n_ss);
    for (int i = 0; i < cfg.n_ss; ++i) place(ss[static_cast<std::size_t>(i)], StationKind::kStandardized, "SS", i);
    const std::vector<int> ms = pick(cfg.n_ms);
    for (int i = 0; i < cfg.n_ms; ++i) place(ms[static_cast<std::size_t>(i)], StationKind::kMicro, "MS", i);
  }
  {
    auto ss_rng = stream(kStandardNoise);
    auto ms_rng = stream(kMicro);
    const SensorDistortion& d = cfg.sensor;
    for (const Station& st : b.stations) {
      double gain = d.gain, offset = d.offset, drift = d.drift_per_day;
      if (st.kind == StationKind::kMicro) {
        gain *= 1.0 + d.spread * uniform(ms_rng, -1.0, 1.0);
        offset *= 1.0 + d.spread * uniform(ms_rng, -1.0, 1.0);
        drift *= 1.0 + d.spread * uniform(ms_rng, -1.0, 1.0);
      }
      for (Pollutant p : kAllPollutants) {
        const MatrixXd& truth = b.truth[p];
        std::vector<double> series(static_cast<std::size_t>(hours));
        for (int t = 0; t < hours; ++t) {
          const double y = truth(st.grid_id, t);
          if (st.kind == StationKind::kStandardized) {
            series[static_cast<std::size_t>(t)] = std::max(0.0, y + cfg.ss_noise_std * standard_normal(ss_rng));
          } else {
            series[static_cast<std::size_t>(t)] = gain * std::pow(y, d.exponent) + offset + drift * (t / 24.0) +
                                                  d.noise_std * standard_normal(ms_rng);
          }
        }
        b.readings[p][st.id] = std::move(series);
      }
    }
    // grid ids are recomputed from positions by consumers.
    for (Station& st : b.stations) st.grid_id = -1;
  }

  // Geographic columns: noisy proxies of sources, green space and roads.
  {
    auto rng = stream(kGeographic);
    const char* poi[] = {"poi_catering", "poi_shopping", "poi_hotel",    "poi_office", "poi_residential",
                         "poi_school",   "poi_hospital", "poi_factory",  "poi_gas_station", "poi_parking",
                         "poi_park",     "poi_scenic"};
    const double poi_s[] = {1.0, 0.9, 0.5, 0.8, 0.6, 0.3, 0.2, 0.9, 0.7, 0.8, 0.0, 0.1};
    const double poi_g[] = {0.0, 0.0, 0.1, 0.0, 0.2, 0.2, 0.1, -0.3, 0.0, 0.0, 1.0, 0.8};
    const char* land[] = {"lu_residential", "lu_commercial", "lu_industrial", "lu_green",
                          "lu_water",       "lu_construction", "lu_transport"};
    const double land_s[] = {0.3, 0.8, 0.9, -0.6, -0.2, 0.7, 0.6};
    const double land_g[] = {0.1, -0.2, -0.5, 1.2, 0.4, -0.3, -0.2};
    const char* road[] = {"rl_motorway", "rl_trunk", "rl_primary", "rl_secondary",
                          "rl_tertiary", "rl_residential", "rl_service", "rl_other"};
    for (const char* s : poi) b.geo_names.push_back(s);
    for (const char* s : land) b.geo_names.push_back(s);
    for (const char* s : road) b.geo_names.push_back(s);
    b.geographic = MatrixXd::Zero(n, static_cast<Eigen::Index>(b.geo_names.size()));
    for (int g = 0; g < n; ++g) {
      const double s = S[static_cast<std::size_t>(g)];
      const double green = G[static_cast<std::size_t>(g)];
      int c = 0;
      for (int k = 0; k < 12; ++k)
        b.geographic(g, c++) = std::max(0.0, std::round(2.0 + 20.0 * poi_s[k] * s + 10.0 * poi_g[k] * green +
                                                        1.5 * standard_normal(rng)));
      double raw[7], total = 0.0;
      for (int k = 0; k < 7; ++k) {
        raw[k] = std::exp(0.2 + 1.2 * land_s[k] * s + 1.2 * land_g[k] * green + 0.25 * standard_normal(rng));
        total += raw[k];
      }
      for (int k = 0; k < 7; ++k) b.geographic(g, c++) = raw[k] / total;
      const double* placed = &road_class_length[static_cast<std::size_t>(g) * 3];
      b.geographic(g, c++) = placed[0];
      b.geographic(g, c++) = placed[1];
      b.geographic(g, c++) = placed[2];
      for (int k = 0; k < 5; ++k)
        b.geographic(g, c++) =
            std::max(0.0, 0.3 + 0.8 * s * (k < 2 ? 1.0 : 0.5) - 0.2 * green + 0.15 * standard_normal(rng));
    }
  }
  return b;
}

}  // namespace aqi
