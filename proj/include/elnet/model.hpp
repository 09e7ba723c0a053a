#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "elnet/blurpool.hpp"
#include "elnet/msnorm.hpp"
#include "elnet/ops.hpp"

namespace elnet {

enum class NormVariant { layer, contrast, batch };
enum class PoolVariant { blurpool, maxpool };

inline const char* to_string(NormVariant v) {
  switch (v) {
    case NormVariant::layer: return "layer";
    case NormVariant::contrast: return "contrast";
    case NormVariant::batch: return "batch";
  }
  return "?";
}
inline const char* to_string(PoolVariant v) {
  return v == PoolVariant::blurpool ? "blurpool" : "maxpool";
}

inline NormVariant norm_variant_from_string(const std::string& s) {
  if (s == "layer") return NormVariant::layer;
  if (s == "contrast") return NormVariant::contrast;
  if (s == "batch") return NormVariant::batch;
  throw std::invalid_argument("unknown norm variant: " + s);
}
inline PoolVariant pool_variant_from_string(const std::string& s) {
  if (s == "blurpool") return PoolVariant::blurpool;
  if (s == "maxpool") return PoolVariant::maxpool;
  throw std::invalid_argument("unknown pool variant: " + s);
}

// Everything that determines the network. Channel widths are fixed at
// 4K / 8K / 16K; `stages` (3..5, default 5) drops the trailing 16K stages
// and exists for small verification builds.
struct ModelConfig {
  int64_t k = 1;
  NormVariant norm = NormVariant::layer;
  PoolVariant pool = PoolVariant::blurpool;
  std::array<int64_t, 5> blur_b{5, 5, 5, 5, 5};
  double dropout_rate = 0.5;
  int64_t input_h = 256;
  int64_t input_w = 256;
  uint64_t seed = 0;
  int64_t stages = 5;

  void validate() const {
    if (k < 1) throw std::invalid_argument("ModelConfig: K must be >= 1");
    if (stages < 3 || stages > 5)
      throw std::invalid_argument("ModelConfig: stages must be in [3, 5]");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("ModelConfig: dropout rate must be in [0, 1)");
    if (input_h < 1 || input_w < 1)
      throw std::invalid_argument("ModelConfig: bad input size");
    for (int64_t b : blur_b)
      if (b < 2) throw std::invalid_argument("ModelConfig: blur kernel must be >= 2");
  }
};

// Spatial size after one downsampling stage.
inline int64_t pool_out_dim(int64_t in, PoolVariant pool, int64_t b) {
  if (pool == PoolVariant::blurpool) {
    if (in < b) return 0;
    return (in - b) / 2 + 1;
  }
  if (in < 2) return 0;
  return (in - 2) / 2 + 1;
}

template <typename T>
struct ConvLayer {
  TensorT<T> weight;  // (Cout, Cin, k, k), no bias
  int64_t stride = 1;
  int64_t pad = 0;
};

template <typename T>
struct NormLayer {
  NormParams<T> params;
  BatchNormState<T> bn_state;  // used by the batch variant only
};

template <typename T>
struct Block {
  ConvLayer<T> conv;  // same padding, stride 1
  NormLayer<T> norm;
};

template <typename T>
struct Stage {
  int64_t pool_b = 5;            // blur kernel for this stage
  std::vector<Block<T>> blocks;  // run after the pool
  ConvLayer<T> raise_conv;       // channel-raising conv after the blocks
  bool has_raise = false;
};

// Captured during forward when requested: per-layer output shapes, the nodes
// where additive bias terms enter (inputs to saliency), and the feature
// vector before the classifier.
template <typename T>
struct ForwardTrace {
  std::vector<std::pair<std::string, Shape>> shapes;
  struct BiasSite {
    std::string name;
    TensorT<T> out;   // node right after the bias add
    TensorT<T> bias;  // the bias tensor itself
  };
  std::vector<BiasSite> bias_sites;
  TensorT<T> input;
  TensorT<T> features;  // (16K) vector before dropout
  TensorT<T> logits;
};

template <typename T>
struct ForwardResult {
  TensorT<T> probs;
  TensorT<T> logits;
};

template <typename T>
class ModelT {
 public:
  ModelConfig cfg;
  ConvLayer<T> stem_conv;
  NormLayer<T> stem_norm;
  std::vector<Stage<T>> stages;
  TensorT<T> fc_w;  // (2, 16K)
  TensorT<T> fc_b;  // (2)

  // Trainable parameters in a fixed, named order.
  std::vector<std::pair<std::string, TensorT<T>>> parameters() {
    std::vector<std::pair<std::string, TensorT<T>>> out;
    auto push_norm = [&out](const std::string& prefix, NormLayer<T>& n) {
      out.emplace_back(prefix + ".gamma", n.params.gamma);
      out.emplace_back(prefix + ".beta", n.params.beta);
    };
    out.emplace_back("stem.conv.weight", stem_conv.weight);
    push_norm("stem.norm", stem_norm);
    for (size_t si = 0; si < stages.size(); ++si) {
      const std::string sp = "stage" + std::to_string(si + 1);
      for (size_t bi = 0; bi < stages[si].blocks.size(); ++bi) {
        const std::string bp = sp + ".block" + std::to_string(bi);
        out.emplace_back(bp + ".conv.weight", stages[si].blocks[bi].conv.weight);
        push_norm(bp + ".norm", stages[si].blocks[bi].norm);
      }
      if (stages[si].has_raise)
        out.emplace_back(sp + ".raise.weight", stages[si].raise_conv.weight);
    }
    out.emplace_back("head.fc.weight", fc_w);
    out.emplace_back("head.fc.bias", fc_b);
    return out;
  }

  // Non-trainable state persisted alongside the parameters (batch-norm
  // running statistics).
  std::vector<std::pair<std::string, std::vector<T>*>> running_stats() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    if (cfg.norm != NormVariant::batch) return out;
    auto push = [&out](const std::string& prefix, NormLayer<T>& n) {
      out.emplace_back(prefix + ".running_mean", &n.bn_state.running_mean);
      out.emplace_back(prefix + ".running_var", &n.bn_state.running_var);
    };
    push("stem.norm", stem_norm);
    for (size_t si = 0; si < stages.size(); ++si)
      for (size_t bi = 0; bi < stages[si].blocks.size(); ++bi)
        push("stage" + std::to_string(si + 1) + ".block" + std::to_string(bi) +
                 ".norm",
             stages[si].blocks[bi].norm);
    return out;
  }

  int64_t parameter_count() {
    int64_t n = 0;
    for (auto& [name, t] : parameters()) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : parameters()) t.zero_grad();
  }

  TensorT<T> apply_norm(NormLayer<T>& n, const TensorT<T>& x, bool train,
                        const std::string& name, ForwardTrace<T>* trace) {
    TensorT<T> y;
    switch (cfg.norm) {
      case NormVariant::layer: {
        const int64_t group = x.shape()[1] * x.shape()[2] * x.shape()[3];
        y = standardize_groups(x, group, n.params.eps);
        break;
      }
      case NormVariant::contrast: {
        const int64_t group = x.shape()[2] * x.shape()[3];
        y = standardize_groups(x, group, n.params.eps);
        break;
      }
      case NormVariant::batch:
        y = batchnorm_standardize(x, n.bn_state, train, n.params.eps);
        break;
    }
    y = channel_bias(channel_scale(y, n.params.gamma), n.params.beta);
    if (trace)
      trace->bias_sites.push_back({name, y, n.params.beta});
    return y;
  }

  TensorT<T> apply_pool(const TensorT<T>& x, int64_t b) {
    if (cfg.pool == PoolVariant::blurpool) return blurpool2d(x, b);
    return maxpool2d(x, int64_t{2}, int64_t{2});
  }

  // Full forward pass over one volume tensor (S, 1, H, W). The slice axis
  // acts as the batch; dropout_seed only matters in train mode.
  ForwardResult<T> forward(const TensorT<T>& x, bool train,
                           uint64_t dropout_seed = 0,
                           ForwardTrace<T>* trace = nullptr) {
    if (x.rank() != 4 || x.shape()[1] != 1)
      throw std::invalid_argument("forward: expected (S, 1, H, W), got " +
                                  x.shape().str());
    if (x.shape()[2] != cfg.input_h || x.shape()[3] != cfg.input_w)
      throw std::invalid_argument("forward: input is " + x.shape().str() +
                                  " but model expects " +
                                  std::to_string(cfg.input_h) + "x" +
                                  std::to_string(cfg.input_w));
    if (trace) trace->input = x;
    auto rec = [trace](const std::string& name, const TensorT<T>& t) {
      if (trace) trace->shapes.emplace_back(name, t.shape());
    };

    TensorT<T> h = conv2d(x, stem_conv.weight, stem_conv.stride, stem_conv.pad);
    h = apply_norm(stem_norm, h, train, "stem.norm", trace);
    h = relu(h);
    rec("stem", h);
    for (size_t si = 0; si < stages.size(); ++si) {
      const std::string sp = "stage" + std::to_string(si + 1);
      h = apply_pool(h, stages[si].pool_b);
      rec(sp + ".pool", h);
      for (size_t bi = 0; bi < stages[si].blocks.size(); ++bi) {
        Block<T>& blk = stages[si].blocks[bi];
        TensorT<T> f = conv2d(h, blk.conv.weight, blk.conv.stride, blk.conv.pad);
        f = apply_norm(blk.norm, f, train,
                       sp + ".block" + std::to_string(bi) + ".norm", trace);
        f = relu(f);
        h = add(h, f);  // skip connection
      }
      if (!stages[si].blocks.empty()) rec(sp + ".blocks", h);
      if (stages[si].has_raise) {
        h = relu(conv2d(h, stages[si].raise_conv.weight,
                        stages[si].raise_conv.stride, stages[si].raise_conv.pad));
        rec(sp + ".raise", h);
      }
    }
    TensorT<T> feat = global_maxpool2d(h);  // (S, 16K)
    rec("global_maxpool", feat);
    TensorT<T> v = slice_maxpool(feat);  // (16K)
    rec("slice_maxpool", v);
    if (trace) trace->features = v;
    v = dropout(v, cfg.dropout_rate, train, dropout_seed);
    TensorT<T> logits = add(matvec(fc_w, v), fc_b);
    if (trace) {
      trace->bias_sites.push_back({"head.fc", logits, fc_b});
      trace->logits = logits;
    }
    rec("logits", logits);
    ForwardResult<T> r;
    r.logits = logits;
    r.probs = softmax_vec(logits);
    return r;
  }
};

// Closed-form trainable-parameter count for the full five-stage network.
inline int64_t param_count_closed_form(int64_t k) {
  if (k < 1) throw std::invalid_argument("param_count_closed_form: K must be >= 1");
  return 13120 * k * k + 348 * k + 2;
}

namespace detail {

template <typename T>
ConvLayer<T> make_conv(int64_t cout, int64_t cin, int64_t k, int64_t stride,
                       int64_t pad, Rng& rng, bool requires_grad) {
  // He-uniform fan-in initialization
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
  std::vector<T> w(static_cast<size_t>(cout * cin * k * k));
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  ConvLayer<T> c;
  c.weight = TensorT<T>::from_values(Shape{cout, cin, k, k}, std::move(w),
                                     requires_grad);
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename T>
NormLayer<T> make_norm(int64_t channels, bool requires_grad) {
  NormLayer<T> n;
  n.params = NormParams<T>::init(channels, requires_grad);
  n.bn_state = BatchNormState<T>(channels);
  return n;
}

template <typename T>
Block<T> make_block(int64_t channels, int64_t k, Rng& rng, bool requires_grad) {
  Block<T> b;
  b.conv = make_conv<T>(channels, channels, k, 1, k / 2, rng, requires_grad);
  b.norm = make_norm<T>(channels, requires_grad);
  return b;
}

}  // namespace detail

// Assembles the network. Layer sequence for the full configuration:
//   7x7 conv 4K (stride 2, pad 3) -> norm -> relu
//   pool -> Block[5x5] x2 (4K)  -> 5x5 conv 8K  -> relu
//   pool -> Block[3x3] x2 (8K)  -> 3x3 conv 16K -> relu
//   pool -> Block[3x3]    (16K) -> 3x3 conv 16K -> relu
//   pool -> Block[3x3]    (16K) -> 3x3 conv 16K -> relu
//   pool -> global 2D max-pool -> slice max-pool -> dropout -> fc(2) -> softmax
template <typename T>
ModelT<T> build_elnet(const ModelConfig& cfg, bool requires_grad = true) {
  cfg.validate();

  // trace the spatial dims through the stem and every pool stage
  int64_t h = (cfg.input_h + 2 * 3 - 7) / 2 + 1;
  int64_t w = (cfg.input_w + 2 * 3 - 7) / 2 + 1;
  if (cfg.input_h + 6 < 7 || h < 1 || w < 1)
    throw std::invalid_argument("build_elnet: input too small for the stem conv");
  for (int64_t si = 0; si < cfg.stages; ++si) {
    h = pool_out_dim(h, cfg.pool, cfg.blur_b[static_cast<size_t>(si)]);
    w = pool_out_dim(w, cfg.pool, cfg.blur_b[static_cast<size_t>(si)]);
    if (h < 1 || w < 1)
      throw std::invalid_argument(
          "build_elnet: input size collapses below 1 at stage " +
          std::to_string(si + 1));
  }

  Rng rng(cfg.seed);
  ModelT<T> m;
  m.cfg = cfg;
  const int64_t k = cfg.k;
  m.stem_conv = detail::make_conv<T>(4 * k, 1, 7, 2, 3, rng, requires_grad);
  m.stem_norm = detail::make_norm<T>(4 * k, requires_grad);

  struct StagePlan {
    int64_t channels, block_k, nblocks, raise_out, raise_k;
  };
  const StagePlan plans[4] = {
      {4 * k, 5, 2, 8 * k, 5},
      {8 * k, 3, 2, 16 * k, 3},
      {16 * k, 3, 1, 16 * k, 3},
      {16 * k, 3, 1, 16 * k, 3},
  };
  for (int64_t si = 0; si < cfg.stages - 1; ++si) {
    const StagePlan& p = plans[si];
    Stage<T> st;
    st.pool_b = cfg.blur_b[static_cast<size_t>(si)];
    for (int64_t bi = 0; bi < p.nblocks; ++bi)
      st.blocks.push_back(detail::make_block<T>(p.channels, p.block_k, rng,
                                                requires_grad));
    st.raise_conv = detail::make_conv<T>(p.raise_out, p.channels, p.raise_k, 1,
                                         p.raise_k / 2, rng, requires_grad);
    st.has_raise = true;
    m.stages.push_back(std::move(st));
  }
  {
    Stage<T> last;  // pool only, ahead of the global max-pool
    last.pool_b = cfg.blur_b[static_cast<size_t>(cfg.stages - 1)];
    m.stages.push_back(std::move(last));
  }

  const int64_t feat = 16 * k;
  const double bound = std::sqrt(6.0 / static_cast<double>(feat));
  std::vector<T> fw(static_cast<size_t>(2 * feat));
  for (auto& v : fw) v = static_cast<T>(rng.uniform(-bound, bound));
  m.fc_w = TensorT<T>::from_values(Shape{2, feat}, std::move(fw), requires_grad);
  m.fc_b = TensorT<T>::zeros(Shape{2}, requires_grad);
  return m;
}

// Per-row parameter subtotals for auditing against the closed form.
struct ParamAuditRow {
  std::string label;
  int64_t count;
};

template <typename T>
std::vector<ParamAuditRow> param_audit(ModelT<T>& m) {
  std::vector<ParamAuditRow> rows;
  rows.push_back({"stem.conv (7x7, 4K)", m.stem_conv.weight.numel()});
  rows.push_back({"stem.norm",
                  m.stem_norm.params.gamma.numel() + m.stem_norm.params.beta.numel()});
  for (size_t si = 0; si < m.stages.size(); ++si) {
    const std::string sp = "stage" + std::to_string(si + 1);
    int64_t blocks = 0;
    for (auto& b : m.stages[si].blocks)
      blocks += b.conv.weight.numel() + b.norm.params.gamma.numel() +
                b.norm.params.beta.numel();
    if (!m.stages[si].blocks.empty()) rows.push_back({sp + ".blocks", blocks});
    if (m.stages[si].has_raise)
      rows.push_back({sp + ".raise", m.stages[si].raise_conv.weight.numel()});
  }
  rows.push_back({"head.fc", m.fc_w.numel() + m.fc_b.numel()});
  return rows;
}

using ModelF = ModelT<float>;

}  // namespace elnet
