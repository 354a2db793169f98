#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aqi/grid.hpp"

namespace aqi {

// Great-circle distance in km on a sphere of radius kEarthRadiusKm.
double haversine_km(LatLon a, LatLon b);

struct ContextPoint {
  LatLon pos;
  double value = 0.0;
  int id = -1;  // grid id (or any stable key) used for KNN tie-breaking
};

// Normalized inverse-distance weights of every context for one target.
// A context at distance zero takes all the weight (shared equally among
// coincident contexts).
std::vector<double> idw_weights(LatLon target, std::span<const LatLon> contexts, double p);

std::vector<double> idw(std::span<const LatLon> targets, std::span<const ContextPoint> contexts, double p);

// Unweighted mean of the k nearest contexts; equal distances resolve to the
// smaller id.
std::vector<double> knn_interpolate(std::span<const LatLon> targets, std::span<const ContextPoint> contexts,
                                    int k);

// Indices of the k nearest contexts, nearest first.
std::vector<int> knn_indices(LatLon target, std::span<const LatLon> contexts, std::span<const int> ids, int k);

enum class InterpolationMethod { kIdw, kKnn };

// Linear operator mapping context values to target values:
// field[targets x hours] = weights[targets x contexts] * values[contexts x hours].
Eigen::MatrixXd interpolation_weights(std::span<const LatLon> targets, std::span<const LatLon> contexts,
                                      std::span<const int> context_ids, InterpolationMethod method,
                                      double p, int k);

struct InterpolationField {
  Eigen::MatrixXd values;  // [grids x hours]
  InterpolationMethod method = InterpolationMethod::kIdw;
  double p = 2.0;
  int k = 0;
};

// Self-supervised labels on every grid from the series observed at the
// interpolation grids. `context_values` is [interpolation grids x hours] in
// the order of `interpolation_ids`.
InterpolationField generate_ss_labels(const GridGraph& graph, std::span<const int> interpolation_ids,
                                      const Eigen::MatrixXd& context_values, double p = 2.0,
                                      InterpolationMethod method = InterpolationMethod::kIdw, int k = 3);

}  // namespace aqi
