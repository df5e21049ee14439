#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tggat/numerics.hpp"

// Transformer building blocks assembled from nx ops. Each block registers its
// parameters in a ParameterStore under a dotted prefix.
namespace tggat::nx {

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng);

  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }
};

struct LayerNorm {
  Var gain;
  Var bias;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, Index dim);

  Var operator()(const Var& x) const { return layer_norm(x, gain, bias, eps); }
};

// Two affine layers with GELU between.
struct FeedForward {
  Linear up;
  Linear down;

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& prefix, Index dim, Index hidden, Rng& rng);

  Var operator()(const Var& x) const { return down(gelu(up(x))); }
};

// Additive mask where masked entries are -1e9 (exp underflows to exactly 0).
Matrix key_padding_mask(Index queries, Index keys, Index valid_keys);

inline constexpr double kMaskedScore = -1e9;

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& prefix, Index dim, int heads, Rng& rng);

  // queries: n x d, keys/values: m x d. `head_bias` holds one n x m Var per
  // head (or is empty). `mask` is an additive constant n x m applied after the
  // bias. Per-head softmax weights are appended to `weights_out` if given.
  Var operator()(const Var& queries, const Var& keys_values, const std::vector<Var>& head_bias = {},
                 const Matrix* mask = nullptr, std::vector<Var>* weights_out = nullptr) const;

  int heads() const { return heads_; }
  Index head_dim() const { return head_dim_; }

  Linear q_proj, k_proj, v_proj, out_proj;

 private:
  int heads_ = 1;
  Index head_dim_ = 0;
};

// Pre-norm transformer layer: x + attn(ln(x)), then + ffn(ln(.)).
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& prefix, Index dim, int heads, Index ffn_hidden,
                   Rng& rng);

  Var operator()(const Var& x, const std::vector<Var>& head_bias = {}, const Matrix* mask = nullptr) const;

  LayerNorm ln_attn;
  MultiHeadAttention attn;
  LayerNorm ln_ffn;
  FeedForward ffn;
};

}  // namespace tggat::nx
