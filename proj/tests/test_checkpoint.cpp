#include <doctest.h>

#include <filesystem>

#include "tggat/checkpoint.hpp"
#include "tggat/trainer.hpp"

using namespace tggat;
using train::TrainConfig;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_config() {
  TrainConfig c = train::desk_profile();
  c.model.d_model = 16;
  c.model.heads = 2;
  c.model.text_layers = 1;
  c.model.gat_layers = 1;
  c.model.ffn_mult = 2;
  c.batch_size = 2;
  return c;
}

const data::Dataset& shared_dataset() {
  static const data::Dataset ds = data::generate_dataset(2, 6, 31, false, false);
  return ds;
}

std::string scratch(const std::string& name) {
  return (fs::temp_directory_path() / ("tggat_ckpt_" + name)).string();
}

// Per-step losses of every episode, which exercise the full forward path.
std::vector<double> forward_trace(const gat::TgGatModel& model, const TrainConfig& cfg) {
  const data::Dataset& ds = shared_dataset();
  std::vector<double> out;
  nx::NoGradGuard guard;
  for (const env::Episode& ep : ds.episodes) {
    const train::EpisodeLoss l =
        train::teacher_force_episode({model, ds.world_of(ep), ep, ds.vocab, ds.meta.env, cfg.weights, nullptr});
    for (const train::StepLoss& s : l.steps) out.insert(out.end(), {s.nav, s.hap, s.gr});
  }
  return out;
}

}  // namespace

TEST_CASE("save then load reproduces forward outputs bit-exactly") {
  train::Trainer t(tiny_train_config(), shared_dataset(), nullptr);
  t.iterate();
  t.iterate();
  const std::string path = scratch("roundtrip.ckpt");
  ckpt::save(ckpt::capture(t, shared_dataset().vocab), path);
  const ckpt::Checkpoint back = ckpt::load(path);
  CHECK(back.iteration == 2);
  CHECK(back.optimizer_steps == 2);
  CHECK(back.vocab.size() == shared_dataset().vocab.size());
  const auto model = ckpt::load_model(back);
  CHECK(train::parameter_hash(model->params()) == train::parameter_hash(t.model().params()));
  CHECK(forward_trace(*model, t.config()) == forward_trace(t.model(), t.config()));
  fs::remove(path);
}

TEST_CASE("resuming from a checkpoint continues exactly like an uninterrupted run") {
  train::Trainer straight(tiny_train_config(), shared_dataset(), nullptr);
  for (int i = 0; i < 4; ++i) straight.iterate();

  train::Trainer first(tiny_train_config(), shared_dataset(), nullptr);
  first.iterate();
  first.iterate();
  const std::string path = scratch("resume.ckpt");
  ckpt::save(ckpt::capture(first, shared_dataset().vocab), path);

  train::Trainer resumed(tiny_train_config(), shared_dataset(), nullptr);
  ckpt::restore_trainer(ckpt::load(path), resumed);
  CHECK(resumed.iteration() == 2);
  resumed.iterate();
  resumed.iterate();
  CHECK(resumed.iteration() == 4);
  CHECK(train::parameter_hash(resumed.model().params()) == train::parameter_hash(straight.model().params()));
  fs::remove(path);
}

TEST_CASE("corrupt and incompatible checkpoints are rejected") {
  const std::string path = scratch("bad.ckpt");
  data::write_file(path, "NOTACHECKPOINT");
  CHECK_THROWS_AS(ckpt::load(path), IoError);
  CHECK_THROWS_AS(ckpt::load(scratch("missing.ckpt")), IoError);

  train::Trainer t(tiny_train_config(), shared_dataset(), nullptr);
  ckpt::save(ckpt::capture(t, shared_dataset().vocab), path);
  std::string bytes = data::read_file(path);
  data::write_file(path, bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(ckpt::load(path), IoError);
  data::write_file(path, bytes);

  TrainConfig wider = tiny_train_config();
  wider.model.d_model = 32;
  train::Trainer other(wider, shared_dataset(), nullptr);
  CHECK_THROWS_AS(ckpt::restore_parameters(ckpt::load(path), other.model().params()), CompatibilityError);
  fs::remove(path);
}
