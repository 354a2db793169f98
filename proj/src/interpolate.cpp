#include "aqi/interpolate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aqi/error.hpp"

namespace aqi {

double haversine_km(LatLon a, LatLon b) {
  const double s_lat = std::sin(0.5 * (a.lat - b.lat));
  const double s_lon = std::sin(0.5 * (a.lon - b.lon));
  double h = s_lat * s_lat + std::cos(a.lat) * std::cos(b.lat) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

std::vector<double> idw_weights(LatLon target, std::span<const LatLon> contexts, double p) {
  if (contexts.empty()) fail(ErrorCode::kNoContext, "IDW needs at least one context point");
  if (!(p > 0.0)) fail(ErrorCode::kInvalidInput, "IDW exponent must be positive");
  std::vector<double> w(contexts.size(), 0.0);
  std::size_t coincident = 0;
  std::vector<double> dist(contexts.size());
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    dist[c] = haversine_km(target, contexts[c]);
    if (dist[c] == 0.0) ++coincident;
  }
  if (coincident > 0) {
    for (std::size_t c = 0; c < contexts.size(); ++c) {
      if (dist[c] == 0.0) w[c] = 1.0 / static_cast<double>(coincident);
    }
    return w;
  }
  double total = 0.0;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    w[c] = std::pow(dist[c], -p);
    total += w[c];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> idw(std::span<const LatLon> targets, std::span<const ContextPoint> contexts, double p) {
  if (contexts.empty()) fail(ErrorCode::kNoContext, "IDW needs at least one context point");
  std::vector<LatLon> pos;
  pos.reserve(contexts.size());
  for (const auto& c : contexts) pos.push_back(c.pos);
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    auto w = idw_weights(t, pos, p);
    double v = 0.0;
    for (std::size_t c = 0; c < contexts.size(); ++c) v += w[c] * contexts[c].value;
    out.push_back(v);
  }
  return out;
}

std::vector<int> knn_indices(LatLon target, std::span<const LatLon> contexts, std::span<const int> ids, int k) {
  if (contexts.empty()) fail(ErrorCode::kNoContext, "KNN needs at least one context point");
  if (k < 1 || k > static_cast<int>(contexts.size())) {
    fail(ErrorCode::kInvalidK, "k=" + std::to_string(k) + " with " + std::to_string(contexts.size()) +
                                   " contexts");
  }
  std::vector<int> order(contexts.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(contexts.size());
  for (std::size_t c = 0; c < contexts.size(); ++c) dist[c] = haversine_km(target, contexts[c]);
  auto key = [&](int c) { return ids.empty() ? c : ids[c]; };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return key(a) < key(b);
  });
  order.resize(k);
  return order;
}

std::vector<double> knn_interpolate(std::span<const LatLon> targets, std::span<const ContextPoint> contexts,
                                    int k) {
  std::vector<LatLon> pos;
  std::vector<int> ids;
  for (const auto& c : contexts) {
    pos.push_back(c.pos);
    ids.push_back(c.id);
  }
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    auto nearest = knn_indices(t, pos, ids, k);
    double sum = 0.0;
    for (int c : nearest) sum += contexts[c].value;
    out.push_back(sum / k);
  }
  return out;
}

Eigen::MatrixXd interpolation_weights(std::span<const LatLon> targets, std::span<const LatLon> contexts,
                                      std::span<const int> context_ids, InterpolationMethod method,
                                      double p, int k) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(targets.size()),
                                            static_cast<Eigen::Index>(contexts.size()));
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (method == InterpolationMethod::kIdw) {
      auto row = idw_weights(targets[t], contexts, p);
      for (std::size_t c = 0; c < row.size(); ++c) w(t, c) = row[c];
    } else {
      for (int c : knn_indices(targets[t], contexts, context_ids, k)) w(t, c) = 1.0 / k;
    }
  }
  return w;
}

InterpolationField generate_ss_labels(const GridGraph& graph, std::span<const int> interpolation_ids,
                                      const Eigen::MatrixXd& context_values, double p,
                                      InterpolationMethod method, int k) {
  if (interpolation_ids.empty()) fail(ErrorCode::kNoContext, "interpolation grid set is empty");
  if (context_values.rows() != static_cast<Eigen::Index>(interpolation_ids.size())) {
    fail(ErrorCode::kShape, "context values must have one row per interpolation grid");
  }
  std::vector<LatLon> ctx;
  for (int id : interpolation_ids) ctx.push_back(graph.cells.at(id).centroid);
  auto targets = graph.centroids();
  InterpolationField field;
  field.method = method;
  field.p = p;
  field.k = method == InterpolationMethod::kKnn ? k : 0;
  auto w = interpolation_weights(targets, ctx, interpolation_ids, method, p, k);
  field.values = w * context_values;
  return field;
}

}  // namespace aqi
