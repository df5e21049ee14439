#include <doctest.h>

#include "support.hpp"
#include "tggat/env.hpp"
#include "tggat/model.hpp"

using namespace tggat;
using nx::Matrix;
using nx::Var;

namespace {

struct Scenario {
  Var text;
  nx::Index valid = 0;
  gat::MemoryBuffer buffer{10};
  Var grid;
};

Scenario random_scenario(const gat::TgGatModel& model, std::mt19937_64& rng, int steps,
                         const geo::Vec2& shift = geo::Vec2::Zero(), bool dyadic = false) {
  const nx::Index d = model.config().d_model;
  Scenario s;
  s.valid = 3 + static_cast<nx::Index>(rng() % 6);
  s.text = Var::constant(testing::random_matrix(rng, s.valid + 2, d));
  std::uniform_real_distribution<double> u(0.0, 400.0);
  for (int i = 0; i < steps; ++i) {
    geo::Vec2 p(u(rng), u(rng));
    if (dyadic) p = (p * 8.0).array().round() / 8.0;
    s.buffer.append(Var::constant(testing::random_matrix(rng, 1, d)), Var::constant(testing::random_matrix(rng, 1, d)),
                    p + shift);
  }
  s.grid = Var::constant(testing::random_matrix(rng, 64, d));
  return s;
}

Matrix fused_input(const gat::TgGatModel& model, const Scenario& s) {
  return model.fuse(s.text, s.valid, s.buffer).embeddings.value();
}

void set_bias(gat::TgGatModel& model, std::mt19937_64& rng) {
  for (const gat::GatLayer& layer : model.gat_layers()) {
    Var w = layer.w_e, b = layer.b_e;
    w.mutable_value() = testing::random_matrix(rng, 1, w.cols(), 0.02);
    b.mutable_value() = testing::random_matrix(rng, 1, b.cols(), 0.5);
  }
}

const nx::Index kVocab = static_cast<nx::Index>(env::build_vocabulary().size());

}  // namespace

TEST_CASE("GAT forward with a distance bias matches the plain Eigen reference") {
  gat::TgGatModel model(testing::tiny_config(kVocab), 1);
  std::mt19937_64 rng(2);
  set_bias(model, rng);
  for (int steps = 1; steps <= 5; ++steps) {
    const Scenario s = random_scenario(model, rng, steps);
    const gat::ForwardOutput out = model.forward(s.text, s.valid, s.buffer, s.grid);
    const Matrix ref = testing::ref_gat_stack(model, fused_input(model, s), s.valid, s.buffer.locations());
    const auto t = static_cast<nx::Index>(steps);
    CHECK((out.image_token.value() - ref.row(s.valid + t - 1)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((out.direction_token.value() - ref.row(s.valid + 2 * t - 1)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("zero distance bias reduces to vanilla attention") {
  gat::TgGatModel model(testing::tiny_config(kVocab), 3);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    const Scenario s = random_scenario(model, rng, 2 + k);
    const gat::ForwardOutput out = model.forward(s.text, s.valid, s.buffer, s.grid);
    const Matrix ref = testing::ref_gat_stack(model, fused_input(model, s), s.valid, s.buffer.locations(), false);
    const auto t = static_cast<nx::Index>(2 + k);
    CHECK((out.direction_token.value() - ref.row(s.valid + 2 * t - 1)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("the distance bias changes the output when it varies with distance") {
  gat::TgGatModel model(testing::tiny_config(kVocab), 5);
  std::mt19937_64 rng(6);
  const Scenario s = random_scenario(model, rng, 4);
  const Matrix plain = model.forward(s.text, s.valid, s.buffer, s.grid).direction_token.value();
  set_bias(model, rng);
  const Matrix biased = model.forward(s.text, s.valid, s.buffer, s.grid).direction_token.value();
  CHECK((plain - biased).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("forward outputs are bit-identical under a translation of all locations") {
  gat::TgGatModel model(testing::tiny_config(kVocab), 7);
  std::mt19937_64 seed_rng(8);
  set_bias(model, seed_rng);
  for (const geo::Vec2 shift : {geo::Vec2(128.0, -64.5), geo::Vec2(-1024.25, 3.125)}) {
    std::mt19937_64 a(9), b(9);
    const Scenario s0 = random_scenario(model, a, 4, geo::Vec2::Zero(), true);
    const Scenario s1 = random_scenario(model, b, 4, shift, true);
    const gat::ForwardOutput o0 = model.forward(s0.text, s0.valid, s0.buffer, s0.grid);
    const gat::ForwardOutput o1 = model.forward(s1.text, s1.valid, s1.buffer, s1.grid);
    CHECK(o0.direction_token.value() == o1.direction_token.value());
    CHECK(o0.image_token.value() == o1.image_token.value());
  }
}

TEST_CASE("bias is applied only between location-bearing tokens") {
  gat::TgGatModel model(testing::tiny_config(kVocab), 10);
  std::mt19937_64 rng(11);
  set_bias(model, rng);
  const Scenario s = random_scenario(model, rng, 3);
  const gat::FusedTokens tokens = model.fuse(s.text, s.valid, s.buffer);
  const std::vector<geo::Vec2> locs = s.buffer.locations();
  const Matrix dist = gat::tile_history_distances(geo::pairwise_distance_matrix(std::span<const geo::Vec2>(locs)));
  const std::vector<Var> bias = model.gat_layers()[0].token_bias(tokens, dist);
  REQUIRE(bias.size() == 2);
  const Matrix& b0 = bias[0].value();
  CHECK(b0.topRows(s.valid).isZero(0.0));
  CHECK(b0.leftCols(s.valid).isZero(0.0));
  CHECK(b0 == b0.transpose());
  const double w = model.gat_layers()[0].w_e.value()(0, 0), c = model.gat_layers()[0].b_e.value()(0, 0);
  CHECK(b0(s.valid, s.valid + 4) == doctest::Approx(w * (locs[0] - locs[1]).norm() + c));
  CHECK_THROWS_AS(model.gat_layers()[0].token_bias(tokens, Matrix::Zero(2, 2)), ShapeError);
}

TEST_CASE("bias gradients wrt w_e and b_e match central differences") {
  const Matrix e{{0.0, 3.0, 5.0}, {3.0, 0.0, 4.0}, {5.0, 4.0, 0.0}};
  const Var w(Matrix{{0.1}}, true), b(Matrix{{-0.3}}, true);
  std::mt19937_64 rng(12);
  const Matrix probe = testing::random_matrix(rng, 3, 3);
  const auto f = [&] { return nx::sum(nx::mul(nx::exp(gat::build_bias(e, w, b)), Var::constant(probe))); };
  CHECK(nx::finite_diff_check(f, std::vector<Var>{w, b}).max_rel_error < 1e-7);
}

TEST_CASE("memory buffer enforces its capacity") {
  gat::MemoryBuffer buf(2);
  const Var z = Var::constant(Matrix::Zero(1, 4));
  buf.append(z, z, {0, 0});
  buf.append(z, z, {1, 0});
  CHECK_THROWS_AS(buf.append(z, z, {2, 0}), CapacityError);
  CHECK(buf[1].step == 1);
}

TEST_CASE("prediction heads produce bounded outputs of the documented shapes") {
  gat::TgGatModel model(testing::tiny_config(kVocab), 13);
  std::mt19937_64 rng(14);
  const Scenario s = random_scenario(model, rng, 3);
  const gat::ForwardOutput out = model.forward(s.text, s.valid, s.buffer, s.grid);
  const gat::ActionPrediction act = model.predict_action(out.direction_token);
  CHECK(act.displacement.cols() == 3);
  CHECK(act.displacement.value().cwiseAbs().maxCoeff() <= model.config().max_step_m);
  CHECK(act.stop_prob.item() > 0.0);
  CHECK(act.stop_prob.item() < 1.0);
  const gat::GroundingPrediction gr = model.predict_grounding(out.image_token);
  CHECK(gr.box.cols() == 4);
  CHECK(gr.box.value().minCoeff() > 0.0);
  CHECK(gr.box.value().maxCoeff() < 1.0);
  const gat::AttentionMapPrediction hap = model.predict_human_attention(out.image_token, out.grid_features);
  CHECK(hap.probs.rows() == 8);
  CHECK(hap.probs.cols() == 8);
  CHECK_THROWS_AS(model.predict_human_attention(out.image_token, Var::constant(Matrix::Zero(10, 16))), ShapeError);
}

TEST_CASE("forward rejects an empty buffer and models are reproducible from the seed") {
  gat::TgGatModel a(testing::tiny_config(kVocab), 15), b(testing::tiny_config(kVocab), 15);
  gat::MemoryBuffer empty(4);
  const Var text = Var::constant(Matrix::Zero(3, 16));
  CHECK_THROWS_AS(a.forward(text, 3, empty, Var::constant(Matrix::Zero(64, 16))), UsageError);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params().all()[i].value.value() == b.params().all()[i].value.value());
  }
}
