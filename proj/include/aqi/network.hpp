#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqi/featurize.hpp"
#include "aqi/grid.hpp"

namespace aqi {

struct ModelConfig {
  int d_p = 8;        // positional embedding width per axis (row, column)
  int d_t = 64;       // Bi-LSTM output width, split evenly between directions
  int heads_od = 4;
  int heads_se = 2;
  int heads_sup = 2;
  int head_dim = 8;   // output width of one attention head
  int tau = 24;       // time window in hours
  int d_sup = 1;
  int d_ss = 1;
  int ss_hidden = 16;
  double leaky_slope = 0.2;
  bool use_positional = true;
  bool use_ss_head = true;

  void validate() const;
};

// Input-side dimensions the model is built for.
struct FeatureDims {
  int numeric = 0;
  std::vector<std::string> categorical_names;
  std::vector<int> cardinalities;
  std::vector<int> embed_dims;

  static FeatureDims from_schema(const FeatureSchema& schema);
  int embedded_width() const;
  int perturbable_width() const { return numeric + embedded_width(); }
};

struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
};

using Gradients = std::vector<Eigen::MatrixXd>;

// Compressed neighbor lists of a binary adjacency: node i attends to
// indices[offsets[i] .. offsets[i + 1]).
struct NeighborList {
  std::vector<int> offsets{0};
  std::vector<int> indices;

  int size() const { return static_cast<int>(offsets.size()) - 1; }
  static NeighborList from(const Adjacency& adjacency);
};

// One inference window. numeric[s] is [U x N] and categorical[s] is [V x N]
// for window step s (oldest first).
struct WindowInput {
  std::vector<Eigen::MatrixXd> numeric;
  std::vector<Eigen::MatrixXi> categorical;
};

struct GraphInputs {
  Eigen::MatrixXd positional;  // [2 d_p x N]
  NeighborList od;
  NeighborList se;
};

// Gradients (or perturbations) with respect to the per-step numeric inputs
// [U x N] and embedded categorical inputs [sum Q_j x N].
struct InputGradients {
  std::vector<Eigen::MatrixXd> numeric;
  std::vector<Eigen::MatrixXd> embedded;
};
using InputPerturbation = InputGradients;

// Sinusoidal row/column embedding, [N x 2 d_p]: the first d_p columns
// encode the row, the last d_p the column.
Eigen::MatrixXd positional_embedding(const GridGraph& graph, int d_p);

// Row lookup; tables[j] is [cardinality_j x Q_j]. Codes are [V x N]; the
// result is [sum Q_j x N]. Throws kInvalidCategory for an out-of-range code.
Eigen::MatrixXd embed_categorical(const Eigen::MatrixXi& codes, const std::vector<const Eigen::MatrixXd*>& tables);

namespace nn {

enum Gate { kForget = 0, kInput = 1, kCandidate = 2, kOutput = 3 };

struct LstmParams {
  const Eigen::MatrixXd* w[4];  // [h x (h + F)], input is [h_prev; x]
  const Eigen::MatrixXd* b[4];  // [h x 1]
};
struct LstmGrads {
  Eigen::MatrixXd* w[4];
  Eigen::MatrixXd* b[4];
};
struct LstmStep {
  Eigen::MatrixXd gates;  // activated, [4h x N] stacked in Gate order
  Eigen::MatrixXd cell;
  Eigen::MatrixXd cell_tanh;
  Eigen::MatrixXd hidden;
};
struct LstmCache {
  std::vector<LstmStep> steps;  // in processing order
  Eigen::MatrixXd inputs;       // [F x steps*N], processing order
  Eigen::MatrixXd hidden_prev;  // [h x steps*N], processing order
  bool reverse = false;
};

// Runs one direction over the window and returns the last hidden state.
Eigen::MatrixXd lstm_forward(const std::vector<Eigen::MatrixXd>& inputs, const LstmParams& params, bool reverse,
                             LstmCache& cache);
// Accumulates parameter gradients and d_inputs (indexed like `inputs`).
void lstm_backward(const LstmCache& cache, const LstmParams& params, const Eigen::MatrixXd& d_last_hidden,
                   LstmGrads& grads, std::vector<Eigen::MatrixXd>& d_inputs);

struct GatParams {
  std::vector<const Eigen::MatrixXd*> w;      // per head [d_out x d_in]
  std::vector<const Eigen::MatrixXd*> a_src;  // per head [d_out x 1]
  std::vector<const Eigen::MatrixXd*> a_dst;  // per head [d_out x 1]
  double slope = 0.2;
};
struct GatGrads {
  std::vector<Eigen::MatrixXd*> w;
  std::vector<Eigen::MatrixXd*> a_src;
  std::vector<Eigen::MatrixXd*> a_dst;
};
struct GatHeadCache {
  Eigen::MatrixXd proj;        // W h, [d_out x N]
  Eigen::MatrixXd aggregated;  // sum_j alpha_ij W h_j, before ELU
  std::vector<double> score;   // e_ij per edge (CSR order)
  std::vector<double> alpha;   // attention per edge (CSR order)
};
struct GatCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd output;
  std::vector<GatHeadCache> heads;
};

// Multi-head graph attention with ELU; heads are stacked row-wise into
// [K d_out x N]. Throws kEmptyNeighborhood for an isolated node.
Eigen::MatrixXd gat_forward(const Eigen::MatrixXd& input, const NeighborList& neighbors, const GatParams& params,
                            GatCache& cache);
// Accumulates parameter gradients; returns the gradient w.r.t. the input.
Eigen::MatrixXd gat_backward(const GatCache& cache, const NeighborList& neighbors, const GatParams& params,
                             const Eigen::MatrixXd& d_output, GatGrads& grads);

}  // namespace nn

struct ModelOutput {
  Eigen::MatrixXd y_sup;  // [d_sup x N]
  Eigen::MatrixXd y_ss;   // [d_ss x N], empty without the self-supervised head
};

// Forward-pass caches needed by the backward pass.
struct HiddenState {
  std::vector<Eigen::MatrixXd> inputs;  // per step [F x N]
  std::vector<Eigen::MatrixXi> categorical;
  nn::LstmCache lstm_fwd;
  nn::LstmCache lstm_bwd;
  Eigen::MatrixXd h1, h2, h3;
  nn::GatCache od, se, sup;
  NeighborList od_neighbors, se_neighbors;
  Eigen::MatrixXd ss_pre, ss_hidden;
  ModelOutput output;
  std::uint64_t version = 0;
  bool valid = false;
};

// Multi-task spatio-temporal network: categorical and positional embedding,
// Bi-LSTM temporal block, OD and semantic graph-attention blocks, a
// graph-attention supervised decoder and a dense self-supervised decoder.
class Mtstn {
 public:
  Mtstn(const ModelConfig& config, const FeatureDims& dims, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const FeatureDims& dims() const { return dims_; }
  int input_width() const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter& parameter(const std::string& name) const;
  Parameter& parameter(const std::string& name);
  std::size_t scalar_count() const;
  Gradients zero_gradients() const;

  // Must be called after parameters are modified in place; invalidates
  // outstanding forward caches.
  void parameters_changed() { ++version_; }
  std::uint64_t version() const { return version_; }

  std::vector<Eigen::MatrixXd> snapshot() const;
  void restore(const std::vector<Eigen::MatrixXd>& values);
  bool finite() const;

  ModelOutput forward(const WindowInput& input, const GraphInputs& graph, HiddenState& state,
                      const InputPerturbation* perturbation = nullptr) const;

  // Reverse pass for the output gradients d_sup [d_sup x N] and d_ss
  // [d_ss x N] (ignored without the self-supervised head). Parameter
  // gradients accumulate into `grads`; input gradients are written to
  // `input_grads` when given.
  void backward(const HiddenState& state, const Eigen::MatrixXd& d_sup, const Eigen::MatrixXd& d_ss,
                Gradients& grads, InputGradients* input_grads = nullptr) const;

  // Which of the three parameter groups (encoder, supervised decoder,
  // self-supervised decoder) a parameter belongs to.
  static std::string group_of(const std::string& name);

 private:
  struct LstmIndex {
    std::size_t w[4];
    std::size_t b[4];
  };
  struct GatIndex {
    std::vector<std::size_t> w, a_src, a_dst;
  };

  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  LstmIndex add_lstm(const std::string& prefix, int hidden, int input);
  GatIndex add_gat(const std::string& prefix, int heads, int in, int out);
  nn::LstmParams lstm_params(const LstmIndex& idx) const;
  nn::LstmGrads lstm_grads(const LstmIndex& idx, Gradients& g) const;
  nn::GatParams gat_params(const GatIndex& idx) const;
  nn::GatGrads gat_grads(const GatIndex& idx, Gradients& g) const;

  ModelConfig config_;
  FeatureDims dims_;
  std::vector<Parameter> params_;
  std::uint64_t version_ = 1;

  std::vector<std::size_t> embed_;
  LstmIndex lstm_fwd_{}, lstm_bwd_{};
  GatIndex od_, se_, sup_;
  std::size_t readout_w_ = 0, readout_b_ = 0;
  std::size_t ss_w1_ = 0, ss_b1_ = 0, ss_w2_ = 0, ss_b2_ = 0;
};

}  // namespace aqi
