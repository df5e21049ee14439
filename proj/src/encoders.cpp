#include "tggat/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tggat::enc {

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (std::string_view s : kSpecials) push(std::string(s));
}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  for (const std::string& w : words) {
    if (std::find(std::begin(kSpecials), std::end(kSpecials), w) != std::end(kSpecials)) {
      throw VocabularyError("Vocabulary: '" + w + "' is a reserved token");
    }
    if (!contains(w)) push(w);
  }
}

void Vocabulary::push(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::from_lines(std::span<const std::string> lines) {
  if (lines.size() < 4) throw VocabularyError("Vocabulary: file shorter than the reserved header");
  for (std::size_t i = 0; i < 4; ++i) {
    if (lines[i] != kSpecials[i]) throw VocabularyError("Vocabulary: line " + std::to_string(i) + " must be " +
                                                        std::string(kSpecials[i]));
  }
  Vocabulary v;
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (lines[i].empty() || v.contains(lines[i])) {
      throw VocabularyError("Vocabulary: empty or duplicate token at line " + std::to_string(i));
    }
    v.push(lines[i]);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return from_lines(lines);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (const std::string& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) throw VocabularyError("out-of-vocabulary word '" + std::string(token) + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw VocabularyError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

// --- tokenize -----------------------------------------------------------------

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

namespace {

std::vector<int> round_ids(const DialogRound& round, const Vocabulary& vocab) {
  std::vector<int> ids;
  if (round.question) {
    ids.push_back(Vocabulary::kQue);
    for (const std::string& w : split_words(*round.question)) ids.push_back(vocab.id(w));
  }
  ids.push_back(Vocabulary::kIns);
  for (const std::string& w : split_words(round.instruction)) ids.push_back(vocab.id(w));
  return ids;
}

}  // namespace

TokenSequence tokenize(const DialogRound& current, std::span<const DialogRound> history, const Vocabulary& vocab,
                       Index max_len) {
  if (max_len < 2) throw UsageError("tokenize: max_len must allow [CLS] plus one token");
  std::vector<int> head = {Vocabulary::kCls};
  const std::vector<int> cur = round_ids(current, vocab);
  head.insert(head.end(), cur.begin(), cur.end());

  std::vector<std::vector<int>> hist;
  hist.reserve(history.size());
  for (const DialogRound& r : history) hist.push_back(round_ids(r, vocab));

  // Drop oldest history rounds until everything fits.
  std::size_t first = 0;
  auto total = [&] {
    std::size_t n = head.size();
    for (std::size_t i = first; i < hist.size(); ++i) n += hist[i].size();
    return n;
  };
  while (first < hist.size() && total() > static_cast<std::size_t>(max_len)) ++first;

  TokenSequence seq;
  seq.ids = head;
  for (std::size_t i = first; i < hist.size(); ++i) seq.ids.insert(seq.ids.end(), hist[i].begin(), hist[i].end());
  if (seq.ids.size() > static_cast<std::size_t>(max_len)) seq.ids.resize(static_cast<std::size_t>(max_len));
  seq.valid = static_cast<Index>(seq.ids.size());
  seq.ids.resize(static_cast<std::size_t>(max_len), Vocabulary::kPad);
  return seq;
}

// --- TextEncoder --------------------------------------------------------------

TextEncoder::TextEncoder(nx::ParameterStore& store, const std::string& prefix, const TextEncoderConfig& cfg,
                         nx::Rng& rng)
    : cfg_(cfg) {
  token_embedding = store.add(prefix + ".token_embedding", nx::uniform_init(rng, cfg.vocab_size, cfg.d_model, cfg.d_model));
  position_embedding =
      store.add(prefix + ".position_embedding", nx::uniform_init(rng, cfg.max_len, cfg.d_model, cfg.d_model));
  for (int l = 0; l < cfg.layers; ++l) {
    layers.emplace_back(store, prefix + ".layer" + std::to_string(l), cfg.d_model, cfg.heads,
                        cfg.ffn_mult * cfg.d_model, rng);
  }
}

Var TextEncoder::operator()(const TokenSequence& tokens) const {
  const Index n = tokens.length();
  if (n < 1 || n > cfg_.max_len) throw ShapeError("TextEncoder: sequence length outside [1, max_len]");
  if (tokens.valid < 1 || tokens.valid > n) throw ShapeError("TextEncoder: invalid non-pad length");
  Var x = nx::add(nx::gather_rows(token_embedding, tokens.ids), nx::slice_rows(position_embedding, 0, n));
  if (layers.empty()) return x;
  const Matrix mask = nx::key_padding_mask(n, n, tokens.valid);
  const Matrix* mask_ptr = tokens.valid < n ? &mask : nullptr;
  for (const nx::TransformerLayer& layer : layers) x = layer(x, {}, mask_ptr);
  return x;
}

// --- DirectionEncoder -----------------------------------------------------------

DirectionEncoder::DirectionEncoder(nx::ParameterStore& store, const std::string& prefix, Index d_model,
                                   nx::Rng& rng)
    : mlp{nx::Linear(store, prefix + ".fc0", 2, d_model, rng), nx::Linear(store, prefix + ".fc1", d_model, d_model, rng),
          nx::Linear(store, prefix + ".fc2", d_model, d_model, rng)} {}

Var DirectionEncoder::operator()(const geo::Heading& heading) const {
  Matrix in(1, 2);
  in << std::sin(heading.radians()), std::cos(heading.radians());
  Var x = mlp[0](Var::constant(std::move(in)));
  x = mlp[1](nx::gelu(x));
  return mlp[2](nx::gelu(x));
}

// --- ObservationFeaturizer ------------------------------------------------------

ObservationFeaturizer::ObservationFeaturizer(nx::ParameterStore& store, const std::string& prefix, Index channels,
                                             Index d_model, nx::Rng& rng)
    : projection(store, prefix + ".projection", channels, d_model, rng) {}

Var ObservationFeaturizer::operator()(const ObservationGrid& obs) const {
  if (obs.cells.rows() != static_cast<Index>(obs.grid) * obs.grid || obs.cells.cols() != projection.in_features()) {
    throw ShapeError("ObservationFeaturizer: grid does not match configured channels");
  }
  return projection(Var::constant(obs.cells));
}

// --- MhcaPool -------------------------------------------------------------------

MhcaPool::MhcaPool(nx::ParameterStore& store, const std::string& prefix, Index d_model, int heads, int layers,
                   Index ffn_mult, nx::Rng& rng) {
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    blocks.push_back(Block{nx::MultiHeadAttention(store, p + ".attn", d_model, heads, rng),
                           nx::FeedForward(store, p + ".ffn", d_model, ffn_mult * d_model, rng)});
  }
}

Var MhcaPool::operator()(const Var& i_cls, const Var& grid_features, std::vector<Var>* weights_out) const {
  if (i_cls.rows() != 1) throw ShapeError("MhcaPool: query must be a single row");
  Var query = i_cls;
  for (const Block& b : blocks) {
    const Var h = nx::add(query, b.attn(query, grid_features, {}, nullptr, weights_out));
    query = nx::add(h, b.ffn(h));
  }
  return query;
}

}  // namespace tggat::enc
