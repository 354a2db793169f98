#pragma once

#include <doctest.h>

#include <random>
#include <vector>

#include "aqi/error.hpp"
#include "aqi/network.hpp"
#include "aqi/random.hpp"

namespace aqi::testing {

inline ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an aqi::Error");
  return ErrorCode::kIo;
}

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

// A small model with 3 numeric inputs and one 4-level categorical input,
// on N grids connected in a ring with self-loops.
struct TinyProblem {
  ModelConfig config;
  FeatureDims dims;
  FeatureSchema schema;
  WindowInput input;
  GraphInputs graph;
};

inline TinyProblem tiny_problem(std::uint64_t seed, int n, int tau) {
  std::mt19937_64 rng(seed);
  TinyProblem p;
  p.config.d_p = 2;
  p.config.d_t = 4;
  p.config.heads_od = 2;
  p.config.heads_se = 1;
  p.config.heads_sup = 1;
  p.config.head_dim = 3;
  p.config.tau = tau;
  p.config.ss_hidden = 3;
  p.schema.numeric_names = {"a", "b", "c"};
  p.schema.categorical_names = {"hour"};
  p.schema.cardinalities = {4};
  p.schema.embed_dims = {2};
  p.dims = FeatureDims::from_schema(p.schema);
  for (int t = 0; t < tau; ++t) {
    p.input.numeric.push_back(gaussian(3, n, rng));
    Eigen::MatrixXi codes(1, n);
    for (int i = 0; i < n; ++i) codes(0, i) = static_cast<int>(uniform_index(rng, 4));
    p.input.categorical.push_back(codes);
  }
  p.graph.positional = gaussian(4, n, rng);
  Adjacency a(n);
  for (int i = 0; i < n; ++i) {
    a.set(i, i);
    a.set(i, (i + 1) % n);
  }
  p.graph.od = NeighborList::from(a);
  p.graph.se = NeighborList::from(a);
  return p;
}

}  // namespace aqi::testing
