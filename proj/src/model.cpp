#include "tggat/model.hpp"

#include <cmath>

namespace tggat::gat {

// --- MemoryBuffer ---------------------------------------------------------------

void MemoryBuffer::append(Var image, Var direction, const geo::Vec2& location) {
  if (entries_.size() >= static_cast<std::size_t>(capacity_)) {
    throw CapacityError("MemoryBuffer: capacity of " + std::to_string(capacity_) + " steps exhausted");
  }
  entries_.push_back(MemoryEntry{std::move(image), std::move(direction), location, static_cast<int>(entries_.size())});
}

std::vector<geo::Vec2> MemoryBuffer::locations() const {
  std::vector<geo::Vec2> out;
  out.reserve(entries_.size());
  for (const MemoryEntry& e : entries_) out.push_back(e.location);
  return out;
}

// --- bias -------------------------------------------------------------------------

Var build_bias(const Matrix& distances, const Var& w_e, const Var& b_e) {
  if (distances.rows() != distances.cols()) throw ShapeError("build_bias: distance matrix must be square");
  return nx::add(nx::scalar_times(w_e, distances), nx::scalar_times(b_e, Matrix::Ones(distances.rows(), distances.cols())));
}

Matrix tile_history_distances(const Matrix& step_distances) {
  const Index m = step_distances.rows();
  Matrix out(2 * m, 2 * m);
  out << step_distances, step_distances, step_distances, step_distances;
  return out;
}

// --- GatLayer -----------------------------------------------------------------------

GatLayer::GatLayer(nx::ParameterStore& store, const std::string& prefix, Index d_model, int heads, Index ffn_hidden,
                   nx::Rng& rng)
    : block(store, prefix, d_model, heads, ffn_hidden, rng) {
  w_e = store.add(prefix + ".w_e", Matrix::Zero(1, heads));
  b_e = store.add(prefix + ".b_e", Matrix::Zero(1, heads));
}

std::vector<Var> GatLayer::token_bias(const FusedTokens& tokens, const Matrix& distances) const {
  const Index n = tokens.size();
  std::vector<Index> located;
  for (Index i = 0; i < n; ++i) {
    if (tokens.locations[static_cast<std::size_t>(i)]) located.push_back(i);
  }
  const auto m = static_cast<Index>(located.size());
  if (distances.rows() != m || distances.cols() != m) {
    throw ShapeError("GatLayer: distance matrix is " + std::to_string(distances.rows()) + "x" +
                     std::to_string(distances.cols()) + " but " + std::to_string(m) + " tokens carry locations");
  }
  std::vector<Var> out;
  const int heads = block.attn.heads();
  if (m == 0) return out;

  // Scatter m x m into n x n via a constant selection matrix: B = P G P^T.
  const bool contiguous_tail = located.front() == n - m && located.back() == n - 1;
  Matrix select = Matrix::Zero(n, m);
  for (Index k = 0; k < m; ++k) select(located[static_cast<std::size_t>(k)], k) = 1.0;
  const Var p = Var::constant(select);
  const Var pt = Var::constant(select.transpose());

  for (int h = 0; h < heads; ++h) {
    const Var g = build_bias(distances, nx::slice_cols(w_e, h, 1), nx::slice_cols(b_e, h, 1));
    if (m == n) {
      out.push_back(g);
    } else if (contiguous_tail) {
      const Var top = Var::constant(Matrix::Zero(n - m, n));
      const Var left = Var::constant(Matrix::Zero(m, n - m));
      const Var bottom = nx::concat_cols(std::vector<Var>{left, g});
      out.push_back(nx::concat_rows(std::vector<Var>{top, bottom}));
    } else {
      out.push_back(nx::matmul(nx::matmul(p, g), pt));
    }
  }
  return out;
}

FusedTokens GatLayer::operator()(const FusedTokens& tokens, const Matrix& distances, const Matrix* mask) const {
  if (tokens.locations.size() != static_cast<std::size_t>(tokens.size())) {
    throw ShapeError("GatLayer: token metadata does not match embeddings");
  }
  const std::vector<Var> bias = token_bias(tokens, distances);
  FusedTokens out = tokens;
  out.embeddings = block(tokens.embeddings, bias, mask);
  return out;
}

// --- ActionPrediction -------------------------------------------------------------------

geo::Action ActionPrediction::to_action() const {
  const Matrix& d = displacement.value();
  return geo::Action{d(0, 0), d(0, 1), d(0, 2), stop_prob.item() > 0.5};
}

// --- TgGatModel --------------------------------------------------------------------------

TgGatModel::TgGatModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.vocab_size < 5) throw UsageError("TgGatModel: vocabulary is empty");
  if (cfg.max_steps < 1) throw UsageError("TgGatModel: max_steps must be positive");
  nx::Rng rng(seed);
  const Index d = cfg.d_model;
  text_ = enc::TextEncoder(params_, "text",
                           enc::TextEncoderConfig{cfg.vocab_size, cfg.max_text_len, d, cfg.heads, cfg.text_layers,
                                                  cfg.ffn_mult},
                           rng);
  direction_ = enc::DirectionEncoder(params_, "direction", d, rng);
  observation_ = enc::ObservationFeaturizer(params_, "observation", cfg.channels, d, rng);
  mhca_ = enc::MhcaPool(params_, "mhca", d, cfg.heads, cfg.mhca_layers, cfg.ffn_mult, rng);
  step_encoding_ = params_.add("step_encoding", nx::uniform_init(rng, cfg.max_steps, d, d));
  for (int l = 0; l < cfg.gat_layers; ++l) {
    gat_.emplace_back(params_, "gat.layer" + std::to_string(l), d, cfg.heads, cfg.ffn_mult * d, rng);
  }
  final_ln_ = nx::LayerNorm(params_, "gat.final_ln", d);
  action_hidden_ = nx::Linear(params_, "head.action.fc0", d, d, rng);
  action_out_ = nx::Linear(params_, "head.action.fc1", d, 4, rng);
  grounding_ = {nx::Linear(params_, "head.grounding.fc0", d, d, rng),
                nx::Linear(params_, "head.grounding.fc1", d, d, rng),
                nx::Linear(params_, "head.grounding.fc2", d, 5, rng)};
  attention_query_ = nx::Linear(params_, "head.attention.query", d, d, rng);
}

FusedTokens TgGatModel::fuse(const Var& text_embedding, Index text_valid, const MemoryBuffer& buffer) const {
  if (buffer.empty()) throw UsageError("TgGatModel::forward: memory buffer is empty");
  if (text_valid < 1 || text_valid > text_embedding.rows()) throw ShapeError("TgGatModel: invalid text length");
  const auto t = static_cast<Index>(buffer.size());
  if (t > cfg_.max_steps) throw CapacityError("TgGatModel: more steps than step encodings");

  std::vector<Var> images, directions;
  for (const MemoryEntry& e : buffer.entries()) {
    images.push_back(e.image);
    directions.push_back(e.direction);
  }
  const Var steps = nx::slice_rows(step_encoding_, 0, t);
  const Var text = text_valid == text_embedding.rows() ? text_embedding : nx::slice_rows(text_embedding, 0, text_valid);
  const Var image_tokens = nx::add(nx::concat_rows(images), steps);
  const Var direction_tokens = nx::add(nx::concat_rows(directions), steps);

  FusedTokens tokens;
  tokens.embeddings = nx::concat_rows(std::vector<Var>{text, image_tokens, direction_tokens});
  tokens.modality.assign(static_cast<std::size_t>(text_valid), Modality::Text);
  tokens.locations.assign(static_cast<std::size_t>(text_valid), std::nullopt);
  for (Modality m : {Modality::Image, Modality::Direction}) {
    for (const MemoryEntry& e : buffer.entries()) {
      tokens.modality.push_back(m);
      tokens.locations.emplace_back(e.location);
    }
  }
  return tokens;
}

ForwardOutput TgGatModel::forward(const Var& text_embedding, Index text_valid, const MemoryBuffer& buffer,
                                  const Var& grid_features) const {
  FusedTokens tokens = fuse(text_embedding, text_valid, buffer);
  const std::vector<geo::Vec2> locs = buffer.locations();
  const Matrix distances = tile_history_distances(geo::pairwise_distance_matrix(std::span<const geo::Vec2>(locs)));
  for (const GatLayer& layer : gat_) tokens = layer(tokens, distances);
  const Var fused = final_ln_(tokens.embeddings);

  const auto t = static_cast<Index>(buffer.size());
  ForwardOutput out;
  out.image_token = nx::slice_rows(fused, text_valid + t - 1, 1);
  out.direction_token = nx::slice_rows(fused, text_valid + 2 * t - 1, 1);
  out.grid_features = grid_features;
  return out;
}

ActionPrediction TgGatModel::predict_action(const Var& direction_token) const {
  ActionPrediction p;
  p.raw = action_out_(nx::gelu(action_hidden_(direction_token)));
  p.displacement = nx::scale(nx::tanh(nx::slice_cols(p.raw, 0, 3)), cfg_.max_step_m);
  p.stop_logit = nx::slice_cols(p.raw, 3, 1);
  p.stop_prob = nx::sigmoid(p.stop_logit);
  return p;
}

GroundingPrediction TgGatModel::predict_grounding(const Var& image_token) const {
  Var x = grounding_[0](image_token);
  x = grounding_[1](nx::gelu(x));
  x = grounding_[2](nx::gelu(x));
  const Var out = nx::sigmoid(x);
  return GroundingPrediction{nx::slice_cols(out, 0, 4), nx::slice_cols(out, 4, 1)};
}

AttentionMapPrediction TgGatModel::predict_human_attention(const Var& image_token, const Var& grid_features) const {
  const Index cells = static_cast<Index>(cfg_.grid) * cfg_.grid;
  if (grid_features.rows() != cells || grid_features.cols() != cfg_.d_model) {
    throw ShapeError("predict_human_attention: grid features do not match the configured grid");
  }
  const Var query = attention_query_(image_token);
  const Var scores = nx::scale(nx::matmul(grid_features, nx::transpose(query)),
                               1.0 / std::sqrt(static_cast<double>(cfg_.d_model)));
  return AttentionMapPrediction{nx::reshape(nx::sigmoid(scores), cfg_.grid, cfg_.grid)};
}

}  // namespace tggat::gat
