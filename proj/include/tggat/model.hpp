#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tggat/encoders.hpp"
#include "tggat/geo.hpp"
#include "tggat/layers.hpp"

namespace tggat::gat {

using nx::Index;
using nx::Matrix;
using nx::Var;

struct ModelConfig {
  Index d_model = 64;
  int heads = 4;
  int text_layers = 2;
  int mhca_layers = 1;
  int gat_layers = 2;
  Index ffn_mult = 4;
  Index vocab_size = 0;
  Index max_text_len = 32;
  int grid = 8;
  Index channels = 8;
  int max_steps = 10;
  double max_step_m = 50.0;  // action displacement cap per axis, meters
};

struct MemoryEntry {
  Var image;      // 1 x d pooled observation
  Var direction;  // 1 x d heading embedding
  geo::Vec2 location;
  int step = 0;
};

// Per-step history of pooled image, direction embedding and planar location.
class MemoryBuffer {
 public:
  explicit MemoryBuffer(int capacity) : capacity_(capacity) {}

  // Throws CapacityError once `capacity` entries are stored.
  void append(Var image, Var direction, const geo::Vec2& location);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int capacity() const { return capacity_; }
  const MemoryEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::span<const MemoryEntry> entries() const { return entries_; }
  std::vector<geo::Vec2> locations() const;

 private:
  int capacity_;
  std::vector<MemoryEntry> entries_;
};

// G = w_e * E + b_e elementwise, differentiable in both scalars.
Var build_bias(const Matrix& distances, const Var& w_e, const Var& b_e);

enum class Modality { Text, Image, Direction };

struct FusedTokens {
  Var embeddings;  // n x d
  std::vector<Modality> modality;
  std::vector<std::optional<geo::Vec2>> locations;  // set for history tokens only

  Index size() const { return embeddings.rows(); }
};

// Pre-norm transformer layer whose attention logits are QK^T/sqrt(d) + B, with
// B = w_e E + b_e (per head) between location-bearing tokens and 0 elsewhere.
class GatLayer {
 public:
  GatLayer() = default;
  GatLayer(nx::ParameterStore& store, const std::string& prefix, Index d_model, int heads, Index ffn_hidden,
           nx::Rng& rng);

  // `distances` is m x m over the located tokens in order of appearance.
  FusedTokens operator()(const FusedTokens& tokens, const Matrix& distances, const Matrix* mask = nullptr) const;

  // Per-head n x n logit bias for the given token layout.
  std::vector<Var> token_bias(const FusedTokens& tokens, const Matrix& distances) const;

  nx::TransformerLayer block;
  Var w_e;  // 1 x heads
  Var b_e;  // 1 x heads
};

struct ForwardOutput {
  Var direction_token;  // 1 x d, drives the action head
  Var image_token;      // 1 x d, drives grounding and attention heads
  Var grid_features;    // G^2 x d of the current observation
};

struct ActionPrediction {
  Var raw;           // 1 x 4
  Var displacement;  // 1 x 3 meters = max_step * tanh(raw[0:3])
  Var stop_logit;    // 1 x 1
  Var stop_prob;     // 1 x 1

  geo::Action to_action() const;
};

struct GroundingPrediction {
  Var box;         // 1 x 4 (x, y, w, h) in [0, 1]
  Var confidence;  // 1 x 1
};

struct AttentionMapPrediction {
  Var probs;  // G x G
};

class TgGatModel {
 public:
  TgGatModel(const ModelConfig& cfg, std::uint64_t seed);

  TgGatModel(const TgGatModel&) = delete;
  TgGatModel& operator=(const TgGatModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nx::ParameterStore& params() { return params_; }
  const nx::ParameterStore& params() const { return params_; }

  Var encode_text(const enc::TokenSequence& tokens) const { return text_(tokens); }
  Var featurize(const enc::ObservationGrid& obs) const { return observation_(obs); }
  Var pool(const Var& i_cls, const Var& grid_features, std::vector<Var>* weights = nullptr) const {
    return mhca_(i_cls, grid_features, weights);
  }
  Var encode_direction(const geo::Heading& heading) const { return direction_(heading); }

  // Text rows past `text_valid` are padding and are left out of the fused sequence.
  ForwardOutput forward(const Var& text_embedding, Index text_valid, const MemoryBuffer& buffer,
                        const Var& grid_features) const;

  // Fused token layout as the GAT layers see it (before the first layer).
  FusedTokens fuse(const Var& text_embedding, Index text_valid, const MemoryBuffer& buffer) const;

  ActionPrediction predict_action(const Var& direction_token) const;
  GroundingPrediction predict_grounding(const Var& image_token) const;
  AttentionMapPrediction predict_human_attention(const Var& image_token, const Var& grid_features) const;

  const std::vector<GatLayer>& gat_layers() const { return gat_; }
  const nx::LayerNorm& final_norm() const { return final_ln_; }
  const Var& step_encoding() const { return step_encoding_; }

 private:
  ModelConfig cfg_;
  nx::ParameterStore params_;
  enc::TextEncoder text_;
  enc::DirectionEncoder direction_;
  enc::ObservationFeaturizer observation_;
  enc::MhcaPool mhca_;
  Var step_encoding_;
  std::vector<GatLayer> gat_;
  nx::LayerNorm final_ln_;
  nx::Linear action_hidden_, action_out_;
  std::array<nx::Linear, 3> grounding_;
  nx::Linear attention_query_;
};

// Tiles an m x m step distance matrix to the 2m x 2m image/direction token layout.
Matrix tile_history_distances(const Matrix& step_distances);

}  // namespace tggat::gat
