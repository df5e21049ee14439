#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tggat/geo.hpp"
#include "tggat/layers.hpp"

namespace tggat::enc {

using nx::Index;
using nx::Matrix;
using nx::Var;

// Token <-> id bijection. Ids 0..3 are reserved for the special tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kQue = 2;
  static constexpr int kIns = 3;
  static constexpr std::string_view kSpecials[] = {"[PAD]", "[CLS]", "[QUE]", "[INS]"};

  Vocabulary();
  // `words` must not contain the special tokens; duplicates are ignored.
  explicit Vocabulary(std::span<const std::string> words);

  // One token per line, line number = id; the first four lines must be the specials.
  static Vocabulary load(const std::string& path);
  static Vocabulary from_lines(std::span<const std::string> lines);
  void save(const std::string& path) const;

  int id(std::string_view token) const;
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  std::span<const std::string> tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// One dialog round: an optional drone question followed by the human instruction.
struct DialogRound {
  std::optional<std::string> question;
  std::string instruction;
};

struct TokenSequence {
  std::vector<int> ids;  // padded to max length
  Index valid = 0;       // non-pad prefix length

  Index length() const { return static_cast<Index>(ids.size()); }
};

std::vector<std::string> split_words(std::string_view text);

// [CLS], current round, then history rounds oldest to newest; [QUE] before each
// question and [INS] before each instruction. Oldest history rounds are dropped
// first when over length; the tail is padded with [PAD].
TokenSequence tokenize(const DialogRound& current, std::span<const DialogRound> history, const Vocabulary& vocab,
                       Index max_len);

struct TextEncoderConfig {
  Index vocab_size = 0;
  Index max_len = 32;
  Index d_model = 64;
  int heads = 4;
  int layers = 2;
  Index ffn_mult = 4;
};

// Token + learned absolute position embedding followed by self-attention
// layers; [PAD] keys are masked out.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nx::ParameterStore& store, const std::string& prefix, const TextEncoderConfig& cfg, nx::Rng& rng);

  // seq_len x d_model; row 0 is the [CLS] embedding.
  Var operator()(const TokenSequence& tokens) const;

  const TextEncoderConfig& config() const { return cfg_; }

  Var token_embedding;
  Var position_embedding;
  std::vector<nx::TransformerLayer> layers;

 private:
  TextEncoderConfig cfg_;
};

// sin/cos of the heading through three affine layers.
class DirectionEncoder {
 public:
  DirectionEncoder() = default;
  DirectionEncoder(nx::ParameterStore& store, const std::string& prefix, Index d_model, nx::Rng& rng);

  Var operator()(const geo::Heading& heading) const;

  std::array<nx::Linear, 3> mlp;
};

// channels x G x G observation stored as a G^2 x channels matrix, cells row-major.
struct ObservationGrid {
  int grid = 8;
  int channels = 0;
  Matrix cells;

  double& at(int row, int col, int channel) { return cells(row * grid + col, channel); }
  double at(int row, int col, int channel) const { return cells(row * grid + col, channel); }
};

// Shared per-cell affine projection of channel vectors to d_model.
class ObservationFeaturizer {
 public:
  ObservationFeaturizer() = default;
  ObservationFeaturizer(nx::ParameterStore& store, const std::string& prefix, Index channels, Index d_model,
                        nx::Rng& rng);

  // G^2 x d_model.
  Var operator()(const ObservationGrid& obs) const;

  nx::Linear projection;
};

// [CLS]-queried cross attention over grid features with residual and FFN:
//   pooled = h + FFN(h),  h = i_cls + MHCA(i_cls, F_t).
class MhcaPool {
 public:
  MhcaPool() = default;
  MhcaPool(nx::ParameterStore& store, const std::string& prefix, Index d_model, int heads, int layers,
           Index ffn_mult, nx::Rng& rng);

  // i_cls: 1 x d, grid_features: G^2 x d -> 1 x d.
  Var operator()(const Var& i_cls, const Var& grid_features, std::vector<Var>* weights_out = nullptr) const;

  struct Block {
    nx::MultiHeadAttention attn;
    nx::FeedForward ffn;
  };
  std::vector<Block> blocks;
};

}  // namespace tggat::enc
