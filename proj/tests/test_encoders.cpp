#include <doctest.h>

#include <filesystem>

#include "support.hpp"
#include "tggat/encoders.hpp"

using namespace tggat;
using enc::Vocabulary;
using nx::Matrix;
using nx::Var;

namespace {

Vocabulary small_vocab() {
  const std::vector<std::string> words = {"go", "north", "red", "pool", "where", "now", "turn", "left"};
  return Vocabulary(words);
}

}  // namespace

TEST_CASE("vocabulary reserves the special tokens in fixed slots") {
  const Vocabulary v = small_vocab();
  CHECK(v.id("[PAD]") == Vocabulary::kPad);
  CHECK(v.id("[CLS]") == Vocabulary::kCls);
  CHECK(v.id("[QUE]") == Vocabulary::kQue);
  CHECK(v.id("[INS]") == Vocabulary::kIns);
  CHECK(v.size() == 12);
  CHECK(v.token(v.id("pool")) == "pool");
  CHECK_THROWS_AS(v.id("purple"), VocabularyError);
  CHECK_THROWS_AS(v.token(99), VocabularyError);
  const std::vector<std::string> reserved = {"go", "[CLS]"};
  CHECK_THROWS_AS(Vocabulary{reserved}, VocabularyError);
}

TEST_CASE("vocabulary file round-trip and malformed files") {
  const Vocabulary v = small_vocab();
  const auto path = std::filesystem::temp_directory_path() / "tggat_vocab_test.txt";
  v.save(path.string());
  CHECK(Vocabulary::load(path.string()) == v);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Vocabulary::load("/nonexistent/vocab.txt"), IoError);

  const std::vector<std::string> bad_header = {"[CLS]", "[PAD]", "[QUE]", "[INS]", "go"};
  CHECK_THROWS_AS(Vocabulary::from_lines(bad_header), VocabularyError);
  const std::vector<std::string> dup = {"[PAD]", "[CLS]", "[QUE]", "[INS]", "go", "go"};
  CHECK_THROWS_AS(Vocabulary::from_lines(dup), VocabularyError);
}

TEST_CASE("tokenize lays out [CLS], the current round, then history oldest first") {
  const Vocabulary v = small_vocab();
  const enc::DialogRound current{std::string("where now"), "go north"};
  const std::vector<enc::DialogRound> history = {{std::nullopt, "turn left"}, {std::nullopt, "red pool"}};
  const enc::TokenSequence seq = enc::tokenize(current, history, v, 16);
  const std::vector<int> expect = {Vocabulary::kCls, Vocabulary::kQue, v.id("where"), v.id("now"), Vocabulary::kIns,
                                   v.id("go"), v.id("north"), Vocabulary::kIns, v.id("turn"), v.id("left"),
                                   Vocabulary::kIns, v.id("red"), v.id("pool")};
  CHECK(seq.valid == 13);
  CHECK(seq.length() == 16);
  CHECK(std::vector<int>(seq.ids.begin(), seq.ids.begin() + 13) == expect);
  CHECK(seq.ids[13] == Vocabulary::kPad);
  CHECK(seq.ids[15] == Vocabulary::kPad);
}

TEST_CASE("tokenize drops the oldest history round first when over length") {
  const Vocabulary v = small_vocab();
  const enc::DialogRound current{std::nullopt, "go north"};
  const std::vector<enc::DialogRound> history = {{std::nullopt, "turn left"}, {std::nullopt, "red pool"}};
  const enc::TokenSequence seq = enc::tokenize(current, history, v, 8);
  const std::vector<int> expect = {Vocabulary::kCls, Vocabulary::kIns, v.id("go"), v.id("north"),
                                   Vocabulary::kIns, v.id("red"), v.id("pool"), Vocabulary::kPad};
  CHECK(seq.ids == expect);
  CHECK(seq.valid == 7);
  CHECK_THROWS_AS(enc::tokenize(current, history, v, 1), UsageError);
  CHECK_THROWS_AS(enc::tokenize({std::nullopt, "go purple"}, {}, v, 8), VocabularyError);
}

TEST_CASE("text encoder ignores padding positions") {
  const Vocabulary v = small_vocab();
  nx::ParameterStore store;
  nx::Rng rng(1);
  const enc::TextEncoder text(store, "text", enc::TextEncoderConfig{static_cast<nx::Index>(v.size()), 12, 8, 2, 2, 2},
                              rng);
  enc::TokenSequence a = enc::tokenize({std::nullopt, "go north"}, {}, v, 12);
  enc::TokenSequence b = a;
  b.ids[10] = v.id("pool");  // changes a padded slot only; valid stays the same
  const Matrix ea = text(a).value(), eb = text(b).value();
  CHECK(ea.rows() == 12);
  CHECK(ea.topRows(a.valid) == eb.topRows(a.valid));
}

TEST_CASE("direction encoder is periodic in the heading") {
  nx::ParameterStore store;
  nx::Rng rng(2);
  const enc::DirectionEncoder dir(store, "dir", 8, rng);
  const Matrix a = dir(geo::Heading(0.7)).value();
  const Matrix b = dir(geo::Heading(0.7 + 2.0 * std::numbers::pi)).value();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a - dir(geo::Heading(2.0)).value()).cwiseAbs().maxCoeff() > 1e-6);
  CHECK(a.rows() == 1);
  CHECK(a.cols() == 8);
}

TEST_CASE("observation featurizer projects each cell independently") {
  nx::ParameterStore store;
  nx::Rng rng(3);
  const enc::ObservationFeaturizer feat(store, "obs", 3, 8, rng);
  enc::ObservationGrid g{4, 3, Matrix::Zero(16, 3)};
  g.at(1, 2, 0) = 1.0;
  const Matrix f = feat(g).value();
  CHECK(f.rows() == 16);
  CHECK(f.row(0) == f.row(15));
  CHECK((f.row(6) - f.row(0)).cwiseAbs().maxCoeff() > 0.0);
  enc::ObservationGrid wrong{4, 2, Matrix::Zero(16, 2)};
  CHECK_THROWS_AS(feat(wrong), ShapeError);
}

TEST_CASE("MHCA pooling: one output row, normalized weights, correct gradients") {
  nx::ParameterStore store;
  nx::Rng rng(4);
  const enc::MhcaPool pool(store, "mhca", 8, 2, 1, 2, rng);
  std::mt19937_64 data(5);
  const Var cls(testing::random_matrix(data, 1, 8), true);
  const Var grid(testing::random_matrix(data, 16, 8), true);
  std::vector<Var> weights;
  const Var out = pool(cls, grid, &weights);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 8);
  REQUIRE(weights.size() == 2);
  CHECK(weights[0].value().sum() == doctest::Approx(1.0));

  std::vector<Var> params = store.trainable_values();
  params.insert(params.end(), {cls, grid});
  const Matrix w = testing::random_matrix(data, 1, 8);
  const auto f = [&] { return nx::sum(nx::mul(pool(cls, grid), Var::constant(w))); };
  CHECK(nx::finite_diff_check(f, params).max_rel_error < 1e-6);
  CHECK_THROWS_AS(pool(grid, grid), ShapeError);
}
