#pragma once

#include <span>
#include <vector>

namespace aqi {

// Seasonal-trend decomposition by loess. Windows are in samples and must be
// odd; the low-pass window must be at least one period long.
struct StlOptions {
  int period = 24;
  int seasonal_window = 25;
  int trend_window = 49;
  int lowpass_window = 25;
  int seasonal_degree = 1;
  int trend_degree = 1;
  int lowpass_degree = 1;
  int inner_iterations = 2;
  int robust_iterations = 1;
  // Remove the residual per-cycle mean from the seasonal component and fold
  // it into the trend, so every full cycle of the seasonal term sums to zero.
  bool center_seasonal = true;
};

struct Decomposition {
  std::vector<double> trend;
  std::vector<double> seasonal;
  std::vector<double> residual;  // input - trend - seasonal
  std::vector<double> robustness_weights;
  int period = 0;
};

Decomposition stl_decompose(std::span<const double> series, const StlOptions& options = {});

struct NormalizedSeries {
  std::vector<double> values;
  bool degenerate_variance = false;
};

// Z-score with the population standard deviation. A constant input yields
// zeros and sets `degenerate_variance`.
NormalizedSeries normalize_trend(std::span<const double> trend);

struct SpectrumBin {
  double frequency = 0.0;  // cycles per hour
  double power = 0.0;
};

// One-sided periodogram (density scaling) of the mean-removed series, from
// frequency 0 up to Nyquist.
std::vector<SpectrumBin> seasonality_psd(std::span<const double> seasonal, double sample_interval_h = 1.0);

}  // namespace aqi
