#include "tggat/layers.hpp"

#include <cmath>

namespace tggat::nx {

Linear::Linear(ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng) {
  weight = store.add(prefix + ".weight", uniform_init(rng, in, out, in));
  bias = store.add(prefix + ".bias", uniform_init(rng, 1, out, in));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& prefix, Index dim) {
  gain = store.add(prefix + ".gain", Matrix::Ones(1, dim));
  bias = store.add(prefix + ".bias", Matrix::Zero(1, dim));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& prefix, Index dim, Index hidden, Rng& rng)
    : up(store, prefix + ".up", dim, hidden, rng), down(store, prefix + ".down", hidden, dim, rng) {}

Matrix key_padding_mask(Index queries, Index keys, Index valid_keys) {
  Matrix m = Matrix::Zero(queries, keys);
  if (valid_keys < keys) m.rightCols(keys - valid_keys).setConstant(kMaskedScore);
  return m;
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& prefix, Index dim, int heads,
                                       Rng& rng)
    : q_proj(store, prefix + ".q", dim, dim, rng),
      k_proj(store, prefix + ".k", dim, dim, rng),
      v_proj(store, prefix + ".v", dim, dim, rng),
      out_proj(store, prefix + ".o", dim, dim, rng),
      heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ShapeError("MultiHeadAttention: head count " + std::to_string(heads) + " does not divide " +
                     std::to_string(dim));
  }
  head_dim_ = dim / heads;
}

Var MultiHeadAttention::operator()(const Var& queries, const Var& keys_values, const std::vector<Var>& head_bias,
                                   const Matrix* mask, std::vector<Var>* weights_out) const {
  const Index dim = q_proj.in_features();
  if (queries.cols() != dim || keys_values.cols() != dim) {
    throw ShapeError("MultiHeadAttention: inputs must have " + std::to_string(dim) + " columns");
  }
  if (!head_bias.empty() && head_bias.size() != static_cast<std::size_t>(heads_)) {
    throw ShapeError("MultiHeadAttention: need one bias per head");
  }
  const Var q = q_proj(queries);
  const Var k = k_proj(keys_values);
  const Var v = v_proj(keys_values);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  std::vector<Var> contexts;
  contexts.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    const Index c0 = h * head_dim_;
    const Var qh = heads_ == 1 ? q : slice_cols(q, c0, head_dim_);
    const Var kh = heads_ == 1 ? k : slice_cols(k, c0, head_dim_);
    const Var vh = heads_ == 1 ? v : slice_cols(v, c0, head_dim_);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
    if (!head_bias.empty()) scores = add(scores, head_bias[static_cast<std::size_t>(h)]);
    if (mask != nullptr) scores = add_const(scores, *mask);
    const Var weights = softmax(scores, 1);
    if (weights_out != nullptr) weights_out->push_back(weights);
    contexts.push_back(matmul(weights, vh));
  }
  const Var merged = heads_ == 1 ? contexts.front() : concat_cols(contexts);
  return out_proj(merged);
}

TransformerLayer::TransformerLayer(ParameterStore& store, const std::string& prefix, Index dim, int heads,
                                   Index ffn_hidden, Rng& rng)
    : ln_attn(store, prefix + ".ln_attn", dim),
      attn(store, prefix + ".attn", dim, heads, rng),
      ln_ffn(store, prefix + ".ln_ffn", dim),
      ffn(store, prefix + ".ffn", dim, ffn_hidden, rng) {}

Var TransformerLayer::operator()(const Var& x, const std::vector<Var>& head_bias, const Matrix* mask) const {
  const Var normed = ln_attn(x);
  const Var h = add(x, attn(normed, normed, head_bias, mask));
  return add(h, ffn(ln_ffn(h)));
}

}  // namespace tggat::nx
