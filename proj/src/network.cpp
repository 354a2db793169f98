#include "aqi/network.hpp"

#include <cmath>
#include <random>

#include "aqi/error.hpp"
#include "aqi/random.hpp"

namespace aqi {

using Eigen::MatrixXd;

void ModelConfig::validate() const {
  require(d_p >= 1 && d_t >= 1 && heads_od >= 1 && heads_se >= 1 && heads_sup >= 1 && head_dim >= 1 &&
              d_sup >= 1 && d_ss >= 1 && ss_hidden >= 1,
          ErrorCode::kInvalidConfig, "model dimensions must be >= 1");
  require(d_p % 2 == 0, ErrorCode::kInvalidConfig, "d_p must be even");
  require(d_t % 2 == 0, ErrorCode::kInvalidConfig, "d_t must be even (split across LSTM directions)");
  require(tau >= 1, ErrorCode::kInvalidConfig, "tau must be >= 1");
  require(std::isfinite(leaky_slope) && leaky_slope >= 0.0, ErrorCode::kInvalidConfig, "leaky_slope must be >= 0");
}

FeatureDims FeatureDims::from_schema(const FeatureSchema& schema) {
  FeatureDims d;
  d.numeric = schema.numeric_count();
  d.categorical_names = schema.categorical_names;
  d.cardinalities = schema.cardinalities;
  d.embed_dims = schema.embed_dims;
  return d;
}

int FeatureDims::embedded_width() const {
  int w = 0;
  for (int q : embed_dims) w += q;
  return w;
}

NeighborList NeighborList::from(const Adjacency& adjacency) {
  NeighborList out;
  const int n = adjacency.size();
  out.offsets.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (adjacency(i, j)) out.indices.push_back(j);
    out.offsets.push_back(static_cast<int>(out.indices.size()));
  }
  return out;
}

MatrixXd positional_embedding(const GridGraph& graph, int d_p) {
  require(d_p >= 2 && d_p % 2 == 0, ErrorCode::kInvalidConfig, "d_p must be a positive even number");
  const int n = graph.size();
  MatrixXd pe(n, 2 * d_p);
  for (int g = 0; g < n; ++g) {
    const double pos[2] = {static_cast<double>(g / graph.n_cols), static_cast<double>(g % graph.n_cols)};
    for (int axis = 0; axis < 2; ++axis) {
      for (int i = 0; i < d_p / 2; ++i) {
        const double angle = pos[axis] / std::pow(10000.0, 4.0 * i / d_p);
        pe(g, axis * d_p + 2 * i) = std::sin(angle);
        pe(g, axis * d_p + 2 * i + 1) = std::cos(angle);
      }
    }
  }
  return pe;
}

MatrixXd embed_categorical(const Eigen::MatrixXi& codes, const std::vector<const MatrixXd*>& tables) {
  require(static_cast<std::size_t>(codes.rows()) == tables.size(), ErrorCode::kShape,
          "categorical codes and embedding tables disagree");
  Eigen::Index width = 0;
  for (const MatrixXd* t : tables) width += t->cols();
  MatrixXd out(width, codes.cols());
  Eigen::Index offset = 0;
  for (std::size_t j = 0; j < tables.size(); ++j) {
    const MatrixXd& table = *tables[j];
    for (Eigen::Index n = 0; n < codes.cols(); ++n) {
      const int code = codes(static_cast<Eigen::Index>(j), n);
      if (code < 0 || code >= table.rows())
        fail(ErrorCode::kInvalidCategory, "category code " + std::to_string(code) + " out of range for table " +
                                              std::to_string(j));
      out.block(offset, n, table.cols(), 1) = table.row(code).transpose();
    }
    offset += table.cols();
  }
  return out;
}

namespace nn {
namespace {

MatrixXd elu(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

MatrixXd elu_grad(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

}  // namespace

MatrixXd lstm_forward(const std::vector<MatrixXd>& inputs, const LstmParams& params, bool reverse, LstmCache& cache) {
  require(!inputs.empty(), ErrorCode::kShape, "LSTM window is empty");
  const Eigen::Index h = params.w[0]->rows();
  const Eigen::Index f = inputs.front().rows();
  const Eigen::Index n = inputs.front().cols();
  require(params.w[0]->cols() == h + f, ErrorCode::kShape, "LSTM input width does not match weights");
  const std::size_t steps = inputs.size();
  const Eigen::Index cols = static_cast<Eigen::Index>(steps) * n;
  cache.reverse = reverse;
  cache.steps.assign(steps, {});
  cache.inputs.resize(f, cols);
  cache.hidden_prev.resize(h, cols);
  MatrixXd w_hidden(4 * h, h), w_input(4 * h, f);
  Eigen::VectorXd bias(4 * h);
  for (int g = 0; g < 4; ++g) {
    w_hidden.middleRows(g * h, h) = params.w[g]->leftCols(h);
    w_input.middleRows(g * h, h) = params.w[g]->rightCols(f);
    bias.segment(g * h, h) = params.b[g]->col(0);
  }
  for (std::size_t k = 0; k < steps; ++k) {
    const MatrixXd& x = inputs[reverse ? steps - 1 - k : k];
    require(x.rows() == f && x.cols() == n, ErrorCode::kShape, "LSTM inputs change shape across the window");
    cache.inputs.middleCols(static_cast<Eigen::Index>(k) * n, n) = x;
  }
  // The input projection does not depend on the recurrence, so it is one product.
  MatrixXd projected = w_input * cache.inputs;
  projected.colwise() += bias;
  MatrixXd hidden = MatrixXd::Zero(h, n);
  MatrixXd cell = MatrixXd::Zero(h, n);
  for (std::size_t k = 0; k < steps; ++k) {
    LstmStep& s = cache.steps[k];
    cache.hidden_prev.middleCols(static_cast<Eigen::Index>(k) * n, n) = hidden;
    s.gates = projected.middleCols(static_cast<Eigen::Index>(k) * n, n);
    s.gates.noalias() += w_hidden * hidden;
    auto act = s.gates.array();
    act.topRows(2 * h) = 1.0 / (1.0 + (-act.topRows(2 * h)).exp());
    act.middleRows(kCandidate * h, h) = act.middleRows(kCandidate * h, h).tanh();
    act.bottomRows(h) = 1.0 / (1.0 + (-act.bottomRows(h)).exp());
    cell = s.gates.middleRows(kForget * h, h).cwiseProduct(cell) +
           s.gates.middleRows(kInput * h, h).cwiseProduct(s.gates.middleRows(kCandidate * h, h));
    s.cell = cell;
    s.cell_tanh = cell.array().tanh();
    hidden = s.gates.middleRows(kOutput * h, h).cwiseProduct(s.cell_tanh);
    s.hidden = hidden;
  }
  return hidden;
}

void lstm_backward(const LstmCache& cache, const LstmParams& params, const MatrixXd& d_last_hidden, LstmGrads& grads,
                   std::vector<MatrixXd>& d_inputs) {
  const std::size_t steps = cache.steps.size();
  const Eigen::Index h = params.w[0]->rows();
  const Eigen::Index f = cache.inputs.rows();
  const Eigen::Index n = d_last_hidden.cols();
  MatrixXd w_hidden_t(h, 4 * h);
  for (int g = 0; g < 4; ++g) w_hidden_t.middleCols(g * h, h) = params.w[g]->leftCols(h).transpose();
  MatrixXd d_pre_all(4 * h, static_cast<Eigen::Index>(steps) * n);
  MatrixXd dh = d_last_hidden;
  MatrixXd dc = MatrixXd::Zero(h, n);
  const MatrixXd zero = MatrixXd::Zero(h, n);
  for (std::size_t r = 0; r < steps; ++r) {
    const std::size_t k = steps - 1 - r;
    const LstmStep& s = cache.steps[k];
    const MatrixXd& c_prev = k == 0 ? zero : cache.steps[k - 1].cell;
    const auto gf = s.gates.middleRows(kForget * h, h).array();
    const auto gi = s.gates.middleRows(kInput * h, h).array();
    const auto gc = s.gates.middleRows(kCandidate * h, h).array();
    const auto go = s.gates.middleRows(kOutput * h, h).array();
    const Eigen::ArrayXXd dct = dc.array() + dh.array() * go * (1.0 - s.cell_tanh.array().square());
    auto d_pre = d_pre_all.middleCols(static_cast<Eigen::Index>(k) * n, n);
    d_pre.middleRows(kForget * h, h) = (dct * c_prev.array() * gf * (1.0 - gf)).matrix();
    d_pre.middleRows(kInput * h, h) = (dct * gc * gi * (1.0 - gi)).matrix();
    d_pre.middleRows(kCandidate * h, h) = (dct * gi * (1.0 - gc.square())).matrix();
    d_pre.middleRows(kOutput * h, h) = (dh.array() * s.cell_tanh.array() * go * (1.0 - go)).matrix();
    dc = (dct * gf).matrix();
    dh.noalias() = w_hidden_t * d_pre;
  }
  const MatrixXd d_w_hidden = d_pre_all * cache.hidden_prev.transpose();
  const MatrixXd d_w_input = d_pre_all * cache.inputs.transpose();
  const Eigen::VectorXd d_bias = d_pre_all.rowwise().sum();
  MatrixXd w_input(4 * h, f);
  for (int g = 0; g < 4; ++g) {
    grads.w[g]->leftCols(h) += d_w_hidden.middleRows(g * h, h);
    grads.w[g]->rightCols(f) += d_w_input.middleRows(g * h, h);
    grads.b[g]->col(0) += d_bias.segment(g * h, h);
    w_input.middleRows(g * h, h) = params.w[g]->rightCols(f);
  }
  const MatrixXd d_x = w_input.transpose() * d_pre_all;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t input_index = cache.reverse ? steps - 1 - k : k;
    d_inputs[input_index] += d_x.middleCols(static_cast<Eigen::Index>(k) * n, n);
  }
}

MatrixXd gat_forward(const MatrixXd& input, const NeighborList& neighbors, const GatParams& params, GatCache& cache) {
  const Eigen::Index n = input.cols();
  require(neighbors.size() == n, ErrorCode::kShape, "adjacency size does not match node count");
  for (Eigen::Index i = 0; i < n; ++i)
    if (neighbors.offsets[i + 1] == neighbors.offsets[i])
      fail(ErrorCode::kEmptyNeighborhood, "node " + std::to_string(i) + " has no neighbors");
  const std::size_t heads = params.w.size();
  const Eigen::Index d_out = params.w.front()->rows();
  cache.input = input;
  cache.heads.assign(heads, {});
  cache.output.resize(static_cast<Eigen::Index>(heads) * d_out, n);
  const std::size_t edges = neighbors.indices.size();
  for (std::size_t k = 0; k < heads; ++k) {
    require(params.w[k]->cols() == input.rows(), ErrorCode::kShape, "attention weight width mismatch");
    GatHeadCache& hc = cache.heads[k];
    hc.proj = (*params.w[k]) * input;
    const Eigen::RowVectorXd src = params.a_src[k]->transpose() * hc.proj;
    const Eigen::RowVectorXd dst = params.a_dst[k]->transpose() * hc.proj;
    hc.score.resize(edges);
    hc.alpha.resize(edges);
    hc.aggregated = MatrixXd::Zero(d_out, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int begin = neighbors.offsets[i];
      const int end = neighbors.offsets[i + 1];
      double peak = -INFINITY;
      for (int e = begin; e < end; ++e) {
        const double s = src(i) + dst(neighbors.indices[e]);
        hc.score[e] = s;
        const double l = s > 0.0 ? s : params.slope * s;
        hc.alpha[e] = l;
        peak = std::max(peak, l);
      }
      double total = 0.0;
      for (int e = begin; e < end; ++e) {
        hc.alpha[e] = std::exp(hc.alpha[e] - peak);
        total += hc.alpha[e];
      }
      for (int e = begin; e < end; ++e) {
        hc.alpha[e] /= total;
        hc.aggregated.col(i) += hc.alpha[e] * hc.proj.col(neighbors.indices[e]);
      }
    }
    cache.output.middleRows(static_cast<Eigen::Index>(k) * d_out, d_out) = elu(hc.aggregated);
  }
  return cache.output;
}

MatrixXd gat_backward(const GatCache& cache, const NeighborList& neighbors, const GatParams& params,
                      const MatrixXd& d_output, GatGrads& grads) {
  const Eigen::Index n = cache.input.cols();
  const Eigen::Index d_out = params.w.front()->rows();
  MatrixXd d_input = MatrixXd::Zero(cache.input.rows(), n);
  for (std::size_t k = 0; k < cache.heads.size(); ++k) {
    const GatHeadCache& hc = cache.heads[k];
    const MatrixXd d_agg = d_output.middleRows(static_cast<Eigen::Index>(k) * d_out, d_out)
                               .cwiseProduct(elu_grad(hc.aggregated));
    MatrixXd d_proj = MatrixXd::Zero(d_out, n);
    Eigen::VectorXd d_src = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd d_dst = Eigen::VectorXd::Zero(n);
    std::vector<double> d_alpha;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int begin = neighbors.offsets[i];
      const int end = neighbors.offsets[i + 1];
      d_alpha.assign(static_cast<std::size_t>(end - begin), 0.0);
      double weighted = 0.0;
      for (int e = begin; e < end; ++e) {
        const int j = neighbors.indices[e];
        d_proj.col(j) += hc.alpha[e] * d_agg.col(i);
        d_alpha[e - begin] = d_agg.col(i).dot(hc.proj.col(j));
        weighted += hc.alpha[e] * d_alpha[e - begin];
      }
      for (int e = begin; e < end; ++e) {
        const double d_l = hc.alpha[e] * (d_alpha[e - begin] - weighted);
        const double d_s = hc.score[e] > 0.0 ? d_l : params.slope * d_l;
        d_src(i) += d_s;
        d_dst(neighbors.indices[e]) += d_s;
      }
    }
    *grads.a_src[k] += hc.proj * d_src;
    *grads.a_dst[k] += hc.proj * d_dst;
    d_proj.noalias() += (*params.a_src[k]) * d_src.transpose();
    d_proj.noalias() += (*params.a_dst[k]) * d_dst.transpose();
    grads.w[k]->noalias() += d_proj * cache.input.transpose();
    d_input.noalias() += params.w[k]->transpose() * d_proj;
  }
  return d_input;
}

}  // namespace nn

namespace {

void xavier(MatrixXd& m, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
}

}  // namespace

Mtstn::Mtstn(const ModelConfig& config, const FeatureDims& dims, std::uint64_t seed) : config_(config), dims_(dims) {
  config_.validate();
  require(dims_.numeric >= 0 && dims_.cardinalities.size() == dims_.embed_dims.size() &&
              dims_.categorical_names.size() == dims_.cardinalities.size(),
          ErrorCode::kSchema, "inconsistent categorical feature dimensions");
  require(input_width() >= 1, ErrorCode::kSchema, "model has no input features");
  std::mt19937_64 rng(seed);

  for (std::size_t j = 0; j < dims_.cardinalities.size(); ++j) {
    require(dims_.cardinalities[j] >= 1 && dims_.embed_dims[j] >= 1, ErrorCode::kSchema,
            "categorical cardinality and embedding width must be >= 1");
    const std::size_t idx = add("embed." + dims_.categorical_names[j], dims_.cardinalities[j], dims_.embed_dims[j]);
    embed_.push_back(idx);
    xavier(params_[idx].value, dims_.cardinalities[j], dims_.embed_dims[j], rng);
  }
  const int half = config_.d_t / 2;
  lstm_fwd_ = add_lstm("lstm.fwd", half, input_width());
  lstm_bwd_ = add_lstm("lstm.bwd", half, input_width());
  const int hd = config_.head_dim;
  od_ = add_gat("odsb", config_.heads_od, config_.d_t, hd);
  se_ = add_gat("sesb", config_.heads_se, config_.heads_od * hd, hd);
  sup_ = add_gat("supb", config_.heads_sup, config_.heads_se * hd, hd);
  readout_w_ = add("supb.readout.W", config_.d_sup, config_.heads_sup * hd);
  readout_b_ = add("supb.readout.b", config_.d_sup, 1);
  if (config_.use_ss_head) {
    ss_w1_ = add("ssb.W1", config_.ss_hidden, config_.heads_se * hd);
    ss_b1_ = add("ssb.b1", config_.ss_hidden, 1);
    ss_w2_ = add("ssb.W2", config_.d_ss, config_.ss_hidden);
    ss_b2_ = add("ssb.b2", config_.d_ss, 1);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_[i].name;
    MatrixXd& v = params_[i].value;
    if (name.rfind("embed.", 0) == 0) continue;
    if (name.find(".b_") != std::string::npos || name.back() == 'b' || name.find(".b1") != std::string::npos ||
        name.find(".b2") != std::string::npos) {
      v.setZero();
      if (name.find(".b_f") != std::string::npos) v.setOnes();
    } else if (name.find(".a_") != std::string::npos) {
      xavier(v, 2.0 * static_cast<double>(v.rows()), 1.0, rng);
    } else {
      xavier(v, static_cast<double>(v.cols()), static_cast<double>(v.rows()), rng);
    }
  }
}

int Mtstn::input_width() const {
  return dims_.numeric + dims_.embedded_width() + (config_.use_positional ? 2 * config_.d_p : 0);
}

std::size_t Mtstn::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  params_.push_back({name, MatrixXd::Zero(rows, cols)});
  return params_.size() - 1;
}

Mtstn::LstmIndex Mtstn::add_lstm(const std::string& prefix, int hidden, int input) {
  static const char* kNames[4] = {"f", "i", "c", "o"};
  LstmIndex idx{};
  for (int g = 0; g < 4; ++g) {
    idx.w[g] = add(prefix + ".W_" + kNames[g], hidden, hidden + input);
    idx.b[g] = add(prefix + ".b_" + kNames[g], hidden, 1);
  }
  return idx;
}

Mtstn::GatIndex Mtstn::add_gat(const std::string& prefix, int heads, int in, int out) {
  GatIndex idx;
  for (int k = 0; k < heads; ++k) {
    const std::string p = prefix + ".head" + std::to_string(k);
    idx.w.push_back(add(p + ".W", out, in));
    idx.a_src.push_back(add(p + ".a_src", out, 1));
    idx.a_dst.push_back(add(p + ".a_dst", out, 1));
  }
  return idx;
}

nn::LstmParams Mtstn::lstm_params(const LstmIndex& idx) const {
  nn::LstmParams p{};
  for (int g = 0; g < 4; ++g) {
    p.w[g] = &params_[idx.w[g]].value;
    p.b[g] = &params_[idx.b[g]].value;
  }
  return p;
}

nn::LstmGrads Mtstn::lstm_grads(const LstmIndex& idx, Gradients& g) const {
  nn::LstmGrads out{};
  for (int k = 0; k < 4; ++k) {
    out.w[k] = &g[idx.w[k]];
    out.b[k] = &g[idx.b[k]];
  }
  return out;
}

nn::GatParams Mtstn::gat_params(const GatIndex& idx) const {
  nn::GatParams p;
  p.slope = config_.leaky_slope;
  for (std::size_t k = 0; k < idx.w.size(); ++k) {
    p.w.push_back(&params_[idx.w[k]].value);
    p.a_src.push_back(&params_[idx.a_src[k]].value);
    p.a_dst.push_back(&params_[idx.a_dst[k]].value);
  }
  return p;
}

nn::GatGrads Mtstn::gat_grads(const GatIndex& idx, Gradients& g) const {
  nn::GatGrads out;
  for (std::size_t k = 0; k < idx.w.size(); ++k) {
    out.w.push_back(&g[idx.w[k]]);
    out.a_src.push_back(&g[idx.a_src[k]]);
    out.a_dst.push_back(&g[idx.a_dst[k]]);
  }
  return out;
}

const Parameter& Mtstn::parameter(const std::string& name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return p;
  fail(ErrorCode::kInvalidInput, "unknown parameter " + name);
}

Parameter& Mtstn::parameter(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const Mtstn&>(*this).parameter(name));
}

std::size_t Mtstn::scalar_count() const {
  std::size_t total = 0;
  for (const Parameter& p : params_) total += static_cast<std::size_t>(p.value.size());
  return total;
}

Gradients Mtstn::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const Parameter& p : params_) g.push_back(MatrixXd::Zero(p.value.rows(), p.value.cols()));
  return g;
}

std::vector<MatrixXd> Mtstn::snapshot() const {
  std::vector<MatrixXd> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.value);
  return out;
}

void Mtstn::restore(const std::vector<MatrixXd>& values) {
  require(values.size() == params_.size(), ErrorCode::kShape, "parameter count mismatch on restore");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(values[i].rows() == params_[i].value.rows() && values[i].cols() == params_[i].value.cols(),
            ErrorCode::kShape, "parameter shape mismatch on restore: " + params_[i].name);
    params_[i].value = values[i];
  }
  parameters_changed();
}

bool Mtstn::finite() const {
  for (const Parameter& p : params_)
    if (!p.value.allFinite()) return false;
  return true;
}

std::string Mtstn::group_of(const std::string& name) {
  if (name.rfind("supb.", 0) == 0) return "supervised";
  if (name.rfind("ssb.", 0) == 0) return "self_supervised";
  return "encoder";
}

ModelOutput Mtstn::forward(const WindowInput& input, const GraphInputs& graph, HiddenState& state,
                           const InputPerturbation* perturbation) const {
  const std::size_t steps = input.numeric.size();
  require(steps >= 1 && input.categorical.size() == steps, ErrorCode::kShape, "window inputs are inconsistent");
  const Eigen::Index n = input.numeric.front().cols();
  const Eigen::Index u = dims_.numeric;
  const Eigen::Index q = dims_.embedded_width();
  const Eigen::Index pe_rows = config_.use_positional ? 2 * config_.d_p : 0;
  if (config_.use_positional)
    require(graph.positional.rows() == pe_rows && graph.positional.cols() == n, ErrorCode::kShape,
            "positional embedding shape mismatch");
  require(graph.od.size() == n && graph.se.size() == n, ErrorCode::kShape, "adjacency size mismatch");
  if (perturbation)
    require(perturbation->numeric.size() == steps && perturbation->embedded.size() == steps, ErrorCode::kShape,
            "perturbation window mismatch");

  std::vector<const MatrixXd*> tables;
  for (std::size_t j = 0; j < embed_.size(); ++j) tables.push_back(&params_[embed_[j]].value);

  state.valid = false;
  state.inputs.assign(steps, MatrixXd());
  state.categorical = input.categorical;
  for (std::size_t s = 0; s < steps; ++s) {
    const MatrixXd& x = input.numeric[s];
    require(x.rows() == u && x.cols() == n, ErrorCode::kShape, "numeric input shape mismatch");
    require(input.categorical[s].cols() == n, ErrorCode::kShape, "categorical input shape mismatch");
    MatrixXd& z = state.inputs[s];
    z.resize(u + q + pe_rows, n);
    z.topRows(u) = x;
    if (q > 0) z.middleRows(u, q) = embed_categorical(input.categorical[s], tables);
    if (perturbation) {
      z.topRows(u) += perturbation->numeric[s];
      if (q > 0) z.middleRows(u, q) += perturbation->embedded[s];
    }
    if (pe_rows > 0) z.bottomRows(pe_rows) = graph.positional;
  }

  const MatrixXd h_fwd = nn::lstm_forward(state.inputs, lstm_params(lstm_fwd_), false, state.lstm_fwd);
  const MatrixXd h_bwd = nn::lstm_forward(state.inputs, lstm_params(lstm_bwd_), true, state.lstm_bwd);
  state.h1.resize(h_fwd.rows() + h_bwd.rows(), n);
  state.h1.topRows(h_fwd.rows()) = h_fwd;
  state.h1.bottomRows(h_bwd.rows()) = h_bwd;
  state.od_neighbors = graph.od;
  state.se_neighbors = graph.se;
  state.h2 = nn::gat_forward(state.h1, graph.od, gat_params(od_), state.od);
  state.h3 = nn::gat_forward(state.h2, graph.se, gat_params(se_), state.se);
  const MatrixXd sup = nn::gat_forward(state.h3, graph.se, gat_params(sup_), state.sup);
  state.output.y_sup = params_[readout_w_].value * sup;
  state.output.y_sup.colwise() += params_[readout_b_].value.col(0);
  if (config_.use_ss_head) {
    state.ss_pre = params_[ss_w1_].value * state.h3;
    state.ss_pre.colwise() += params_[ss_b1_].value.col(0);
    state.ss_hidden = state.ss_pre.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    state.output.y_ss = params_[ss_w2_].value * state.ss_hidden;
    state.output.y_ss.colwise() += params_[ss_b2_].value.col(0);
  } else {
    state.output.y_ss.resize(0, n);
  }
  state.version = version_;
  state.valid = true;
  return state.output;
}

void Mtstn::backward(const HiddenState& state, const MatrixXd& d_sup, const MatrixXd& d_ss, Gradients& grads,
                     InputGradients* input_grads) const {
  if (!state.valid || state.version != version_)
    fail(ErrorCode::kStaleState, "backward called without a forward pass for the current parameters");
  require(grads.size() == params_.size(), ErrorCode::kShape, "gradient buffer does not match parameters");
  const Eigen::Index n = state.h1.cols();
  require(d_sup.rows() == config_.d_sup && d_sup.cols() == n, ErrorCode::kShape, "d_sup shape mismatch");

  const MatrixXd& sup_out = state.sup.output;
  grads[readout_w_].noalias() += d_sup * sup_out.transpose();
  grads[readout_b_] += d_sup.rowwise().sum();
  const MatrixXd d_sup_feat = params_[readout_w_].value.transpose() * d_sup;
  nn::GatGrads sup_g = gat_grads(sup_, grads);
  MatrixXd d_h3 = nn::gat_backward(state.sup, state.se_neighbors, gat_params(sup_), d_sup_feat, sup_g);

  if (config_.use_ss_head) {
    require(d_ss.rows() == config_.d_ss && d_ss.cols() == n, ErrorCode::kShape, "d_ss shape mismatch");
    grads[ss_w2_].noalias() += d_ss * state.ss_hidden.transpose();
    grads[ss_b2_] += d_ss.rowwise().sum();
    const MatrixXd d_hidden = params_[ss_w2_].value.transpose() * d_ss;
    const MatrixXd d_pre = d_hidden.cwiseProduct(
        state.ss_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); }));
    grads[ss_w1_].noalias() += d_pre * state.h3.transpose();
    grads[ss_b1_] += d_pre.rowwise().sum();
    d_h3.noalias() += params_[ss_w1_].value.transpose() * d_pre;
  }

  nn::GatGrads se_g = gat_grads(se_, grads);
  const MatrixXd d_h2 = nn::gat_backward(state.se, state.se_neighbors, gat_params(se_), d_h3, se_g);
  nn::GatGrads od_g = gat_grads(od_, grads);
  const MatrixXd d_h1 = nn::gat_backward(state.od, state.od_neighbors, gat_params(od_), d_h2, od_g);

  const std::size_t steps = state.inputs.size();
  std::vector<MatrixXd> d_inputs(steps);
  for (std::size_t s = 0; s < steps; ++s) d_inputs[s] = MatrixXd::Zero(state.inputs[s].rows(), n);
  const Eigen::Index half = d_h1.rows() / 2;
  nn::LstmGrads fwd_g = lstm_grads(lstm_fwd_, grads);
  nn::lstm_backward(state.lstm_fwd, lstm_params(lstm_fwd_), d_h1.topRows(half), fwd_g, d_inputs);
  nn::LstmGrads bwd_g = lstm_grads(lstm_bwd_, grads);
  nn::lstm_backward(state.lstm_bwd, lstm_params(lstm_bwd_), d_h1.bottomRows(half), bwd_g, d_inputs);

  const Eigen::Index u = dims_.numeric;
  const Eigen::Index q = dims_.embedded_width();
  for (std::size_t s = 0; s < steps; ++s) {
    Eigen::Index offset = u;
    for (std::size_t j = 0; j < embed_.size(); ++j) {
      MatrixXd& table_grad = grads[embed_[j]];
      const Eigen::Index width = table_grad.cols();
      for (Eigen::Index c = 0; c < n; ++c) {
        const int code = state.categorical[s](static_cast<Eigen::Index>(j), c);
        table_grad.row(code) += d_inputs[s].block(offset, c, width, 1).transpose();
      }
      offset += width;
    }
  }
  if (input_grads) {
    input_grads->numeric.resize(steps);
    input_grads->embedded.resize(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      input_grads->numeric[s] = d_inputs[s].topRows(u);
      input_grads->embedded[s] = d_inputs[s].middleRows(u, q);
    }
  }
}

}  // namespace aqi
