#pragma once

#include <cstdint>
#include <string>

#include "aqi/dataset.hpp"

namespace aqi {

struct SensorDistortion {
  double gain = 1.3;
  double offset = 4.0;
  double drift_per_day = 0.15;
  double noise_std = 3.0;
  double exponent = 0.9;  // micro reading ~ gain * truth^exponent
  double spread = 0.1;    // relative per-sensor jitter of gain and offset
};

struct SynthConfig {
  int n_rows = 20;
  int n_cols = 20;
  double cell_size_m = 500.0;
  int hours = 504;
  std::string start_time = "2022-03-01T00:00";
  double origin_lat_deg = 30.60;
  double origin_lon_deg = 104.00;
  int n_ss = 12;
  int n_ms = 60;
  int n_sources = 6;
  int n_roads = 24;
  int n_trucks = 30;
  double ss_noise_std = 0.5;
  double field_noise_std = 1.5;  // spatio-temporal noise of the true field
  SensorDistortion sensor;
  // Adds a meteorological column "noise" that the generator never uses.
  bool noise_feature = false;
  std::uint64_t seed = 42;

  void validate() const;
};

// Synthetic study area with ground-truth pollutant fields. Sources sit near
// busy roads and construction sites; NO2 peaks at night, O3 by day.
DatasetBundle generate(const SynthConfig& cfg);

}  // namespace aqi
