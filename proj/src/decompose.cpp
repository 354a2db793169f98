#include "aqi/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aqi/error.hpp"
#include "aqi/grid.hpp"

namespace aqi {
namespace {

// Loess fit at abscissa `xs` using points nleft..nright (1-based) of y.
// Returns false when every weight vanishes.
bool loess_estimate(const double* y, int n, int len, int degree, double xs, double& ys, int nleft,
                    int nright, double* w, bool use_rw, const double* rw) {
  const double range = static_cast<double>(n) - 1.0;
  double h = std::max(xs - nleft, nright - xs);
  if (len > n) h += static_cast<double>((len - n) / 2);
  const double h9 = 0.999 * h;
  const double h1 = 0.001 * h;
  double a = 0.0;
  for (int j = nleft; j <= nright; ++j) {
    w[j] = 0.0;
    double r = std::abs(j - xs);
    if (r <= h9) {
      if (r <= h1) {
        w[j] = 1.0;
      } else {
        double q = r / h;
        q = 1.0 - q * q * q;
        w[j] = q * q * q;
      }
      if (use_rw) w[j] *= rw[j];
      a += w[j];
    }
  }
  if (a <= 0.0) return false;
  for (int j = nleft; j <= nright; ++j) w[j] /= a;
  if (h > 0.0 && degree > 0) {
    a = 0.0;
    for (int j = nleft; j <= nright; ++j) a += w[j] * j;
    double b = xs - a;
    double c = 0.0;
    for (int j = nleft; j <= nright; ++j) c += w[j] * (j - a) * (j - a);
    if (std::sqrt(c) > 0.001 * range) {
      b /= c;
      for (int j = nleft; j <= nright; ++j) w[j] *= b * (j - a) + 1.0;
    }
  }
  ys = 0.0;
  for (int j = nleft; j <= nright; ++j) ys += w[j] * y[j];
  return true;
}

// Loess smoothing of y[1..n] evaluated at every index. Arrays are 1-based.
void loess_smooth(const double* y, int n, int len, int degree, bool use_rw, const double* rw, double* ys,
                  double* work) {
  if (n < 2) {
    ys[1] = y[1];
    return;
  }
  if (len >= n) {
    for (int i = 1; i <= n; ++i) {
      if (!loess_estimate(y, n, len, degree, i, ys[i], 1, n, work, use_rw, rw)) ys[i] = y[i];
    }
    return;
  }
  const int half = (len + 1) / 2;
  int nleft = 1;
  int nright = len;
  for (int i = 1; i <= n; ++i) {
    if (i > half && nright != n) {
      ++nleft;
      ++nright;
    }
    if (!loess_estimate(y, n, len, degree, i, ys[i], nleft, nright, work, use_rw, rw)) ys[i] = y[i];
  }
}

// Moving average of length `len` over x[1..n] into ave[1..n-len+1].
void moving_average(const double* x, int n, int len, double* ave) {
  const int newn = n - len + 1;
  double v = 0.0;
  for (int i = 1; i <= len; ++i) v += x[i];
  ave[1] = v / len;
  for (int j = 2; j <= newn; ++j) {
    v = v - x[j - 1] + x[len + j - 1];
    ave[j] = v / len;
  }
}

struct Workspace {
  explicit Workspace(int n, int period)
      : cycle(n + 2 * period + 2), lowpass(n + 2 * period + 2), tmp1(n + 2 * period + 2),
        tmp2(n + 2 * period + 2), tmp3(n + 2 * period + 2), sub_y(n + 3), sub_rw(n + 3),
        sub_fit(n + 4), sub_work(n + 3) {}
  std::vector<double> cycle, lowpass, tmp1, tmp2, tmp3;
  std::vector<double> sub_y, sub_rw, sub_fit, sub_work;
};

// Cycle-subseries smoothing, extended one period at each end.
// Writes n + 2 * period values into `season` (1-based).
void smooth_cycle_subseries(const double* y, int n, int period, int window, int degree, bool use_rw,
                            const double* rw, double* season, Workspace& ws) {
  for (int j = 1; j <= period; ++j) {
    const int k = (n - j) / period + 1;
    for (int i = 1; i <= k; ++i) ws.sub_y[i] = y[(i - 1) * period + j];
    if (use_rw) {
      for (int i = 1; i <= k; ++i) ws.sub_rw[i] = rw[(i - 1) * period + j];
    }
    // Fit at positions 1..k lands in sub_fit[2..k+1].
    loess_smooth(ws.sub_y.data(), k, window, degree, use_rw, ws.sub_rw.data(), ws.sub_fit.data() + 1,
                 ws.sub_work.data());
    const int nright = std::min(window, k);
    if (!loess_estimate(ws.sub_y.data(), k, window, degree, 0.0, ws.sub_fit[1], 1, nright,
                        ws.sub_work.data(), use_rw, ws.sub_rw.data())) {
      ws.sub_fit[1] = ws.sub_fit[2];
    }
    const int nleft = std::max(1, k - window + 1);
    if (!loess_estimate(ws.sub_y.data(), k, window, degree, k + 1.0, ws.sub_fit[k + 2], nleft, k,
                        ws.sub_work.data(), use_rw, ws.sub_rw.data())) {
      ws.sub_fit[k + 2] = ws.sub_fit[k + 1];
    }
    for (int m = 1; m <= k + 2; ++m) season[(m - 1) * period + j] = ws.sub_fit[m];
  }
}

void inner_loop(const double* y, int n, const StlOptions& o, bool use_rw, const double* rw,
                double* season, double* trend, Workspace& ws) {
  const int np = o.period;
  std::vector<double> detrended(n + 1);
  std::vector<double> deseasoned(n + 1);
  for (int iter = 0; iter < o.inner_iterations; ++iter) {
    for (int i = 1; i <= n; ++i) detrended[i] = y[i] - trend[i];
    smooth_cycle_subseries(detrended.data(), n, np, o.seasonal_window, o.seasonal_degree, use_rw, rw,
                           ws.cycle.data(), ws);
    // Low-pass filter: MA(np), MA(np), MA(3), then loess.
    moving_average(ws.cycle.data(), n + 2 * np, np, ws.tmp1.data());
    moving_average(ws.tmp1.data(), n + np + 1, np, ws.tmp2.data());
    moving_average(ws.tmp2.data(), n + 2, 3, ws.tmp1.data());
    loess_smooth(ws.tmp1.data(), n, o.lowpass_window, o.lowpass_degree, false, rw, ws.lowpass.data(),
                 ws.tmp3.data());
    for (int i = 1; i <= n; ++i) season[i] = ws.cycle[np + i] - ws.lowpass[i];
    for (int i = 1; i <= n; ++i) deseasoned[i] = y[i] - season[i];
    loess_smooth(deseasoned.data(), n, o.trend_window, o.trend_degree, use_rw, rw, trend, ws.tmp3.data());
  }
}

void robustness_weights(const double* y, int n, const double* fit, double* rw) {
  std::vector<double> r(n);
  for (int i = 1; i <= n; ++i) r[i - 1] = std::abs(y[i] - fit[i]);
  std::vector<double> sorted = r;
  const int mid1 = n / 2 + 1;
  const int mid2 = n - mid1 + 1;
  std::nth_element(sorted.begin(), sorted.begin() + (mid1 - 1), sorted.end());
  double v1 = sorted[mid1 - 1];
  std::nth_element(sorted.begin(), sorted.begin() + (mid2 - 1), sorted.end());
  double v2 = sorted[mid2 - 1];
  const double cmad = 3.0 * (v1 + v2);
  const double c9 = 0.999 * cmad;
  const double c1 = 0.001 * cmad;
  for (int i = 1; i <= n; ++i) {
    double ri = r[i - 1];
    if (ri <= c1) {
      rw[i] = 1.0;
    } else if (ri <= c9) {
      double q = ri / cmad;
      q = 1.0 - q * q;
      rw[i] = q * q;
    } else {
      rw[i] = 0.0;
    }
  }
}

void validate(std::span<const double> series, const StlOptions& o) {
  if (o.period < 2) fail(ErrorCode::kInvalidConfig, "STL period must be at least 2");
  for (int w : {o.seasonal_window, o.trend_window, o.lowpass_window}) {
    if (w < 3 || w % 2 == 0) fail(ErrorCode::kInvalidConfig, "STL windows must be odd and >= 3");
  }
  if (o.lowpass_window < o.period) {
    fail(ErrorCode::kInvalidConfig, "STL low-pass window must be at least one period");
  }
  if (o.inner_iterations < 1 || o.robust_iterations < 0) {
    fail(ErrorCode::kInvalidConfig, "STL iteration counts out of range");
  }
  if (series.size() < 2 * static_cast<std::size_t>(o.period)) {
    fail(ErrorCode::kInsufficientData, "series shorter than two periods");
  }
  for (double v : series) {
    if (!std::isfinite(v)) fail(ErrorCode::kMissingData, "series contains missing values");
  }
}

}  // namespace

Decomposition stl_decompose(std::span<const double> series, const StlOptions& options) {
  validate(series, options);
  const int n = static_cast<int>(series.size());
  const int np = options.period;
  std::vector<double> y(n + 1), season(n + 2 * np + 1), trend(n + 1, 0.0), rw(n + 1, 1.0);
  std::copy(series.begin(), series.end(), y.begin() + 1);
  Workspace ws(n, np);

  bool use_rw = false;
  inner_loop(y.data(), n, options, use_rw, rw.data(), season.data(), trend.data(), ws);
  std::vector<double> fit(n + 1);
  for (int k = 0; k < options.robust_iterations; ++k) {
    for (int i = 1; i <= n; ++i) fit[i] = trend[i] + season[i];
    robustness_weights(y.data(), n, fit.data(), rw.data());
    use_rw = true;
    inner_loop(y.data(), n, options, use_rw, rw.data(), season.data(), trend.data(), ws);
  }

  Decomposition out;
  out.period = np;
  out.trend.assign(trend.begin() + 1, trend.end());
  out.seasonal.assign(season.begin() + 1, season.begin() + 1 + n);
  out.robustness_weights.assign(rw.begin() + 1, rw.end());
  if (options.robust_iterations == 0) std::fill(out.robustness_weights.begin(), out.robustness_weights.end(), 1.0);

  if (options.center_seasonal) {
    const int full_cycles = n / np;
    double offset = 0.0;
    for (int c = 0; c < full_cycles; ++c) {
      double mean = 0.0;
      for (int i = c * np; i < (c + 1) * np; ++i) mean += out.seasonal[i];
      offset = mean / np;
      for (int i = c * np; i < (c + 1) * np; ++i) {
        out.seasonal[i] -= offset;
        out.trend[i] += offset;
      }
    }
    // A trailing partial cycle reuses the last full cycle's offset.
    for (int i = full_cycles * np; i < n; ++i) {
      out.seasonal[i] -= offset;
      out.trend[i] += offset;
    }
  }
  out.residual.resize(n);
  for (int i = 0; i < n; ++i) out.residual[i] = series[i] - out.trend[i] - out.seasonal[i];
  return out;
}

NormalizedSeries normalize_trend(std::span<const double> trend) {
  if (trend.size() < 2) fail(ErrorCode::kInsufficientData, "normalization needs at least two values");
  const double n = static_cast<double>(trend.size());
  const double mean = std::accumulate(trend.begin(), trend.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : trend) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  NormalizedSeries out;
  out.values.resize(trend.size(), 0.0);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    out.degenerate_variance = true;
    return out;
  }
  for (std::size_t i = 0; i < trend.size(); ++i) out.values[i] = (trend[i] - mean) / sd;
  return out;
}

std::vector<SpectrumBin> seasonality_psd(std::span<const double> seasonal, double sample_interval_h) {
  const std::size_t n = seasonal.size();
  if (n < 16) fail(ErrorCode::kInsufficientData, "periodogram needs at least 16 samples");
  if (!(sample_interval_h > 0.0)) fail(ErrorCode::kInvalidInput, "sample interval must be positive");
  const double mean = std::accumulate(seasonal.begin(), seasonal.end(), 0.0) / static_cast<double>(n);
  const double fs = 1.0 / sample_interval_h;
  std::vector<SpectrumBin> out;
  out.reserve(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce the phase index first to keep the argument small.
      const double angle = 2.0 * kPi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      const double x = seasonal[t] - mean;
      re += x * std::cos(angle);
      im -= x * std::sin(angle);
    }
    double power = (re * re + im * im) / (fs * static_cast<double>(n));
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    if (k != 0 && !nyquist) power *= 2.0;
    out.push_back({static_cast<double>(k) * fs / static_cast<double>(n), power});
  }
  return out;
}

}  // namespace aqi
