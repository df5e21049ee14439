#include <doctest.h>

#include <filesystem>

#include "tggat/dataset.hpp"

using namespace tggat;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tggat_dataset_" + name);
  fs::remove_all(p);
  return p;
}

std::string episode_text(const env::Episode& ep) { return data::canonical_dump(data::episode_to_json(ep)); }

}  // namespace

TEST_CASE("episodes cycle through worlds and generation is deterministic") {
  const data::Dataset a = data::generate_dataset(3, 7, 5, false, false);
  const data::Dataset b = data::generate_dataset(3, 7, 5, false, false);
  REQUIRE(a.episodes.size() == 7);
  CHECK(a.worlds.size() == 3);
  for (std::size_t j = 0; j < a.episodes.size(); ++j) {
    CHECK(a.episodes[j].world_index == static_cast<int>(j % 3));
    CHECK(episode_text(a.episodes[j]) == episode_text(b.episodes[j]));
  }
  const data::Dataset c = data::generate_dataset(3, 7, 6, false, false);
  CHECK(episode_text(a.episodes[0]) != episode_text(c.episodes[0]));
  CHECK_THROWS_AS(data::generate_dataset(0, 3, 1, false, false), UsageError);
}

TEST_CASE("paraphrase multiplies the episode count by six") {
  const data::Dataset ds = data::generate_dataset(2, 4, 1, true, false);
  REQUIRE(ds.episodes.size() == 24);
  CHECK(ds.meta.n_base_episodes == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    const env::Episode& base = ds.episodes[6 * j];
    CHECK(base.variant == 0);
    for (int v = 1; v <= 5; ++v) {
      const env::Episode& p = ds.episodes[6 * j + static_cast<std::size_t>(v)];
      CHECK(p.variant == v);
      CHECK(p.seed == base.seed);
      CHECK(p.current.instruction != base.current.instruction);
      CHECK(p.trajectory.size() == base.trajectory.size());
    }
  }
}

TEST_CASE("datasets round-trip through disk byte for byte") {
  const data::Dataset ds = data::generate_dataset(2, 5, 3, true, true);
  const fs::path d1 = scratch("a"), d2 = scratch("b");
  const std::vector<std::string> files = data::write_dataset(ds, d1.string());
  const data::Dataset back = data::read_dataset(d1.string());
  CHECK(back.meta.augment);
  CHECK(back.vocab == ds.vocab);
  CHECK(back.worlds == ds.worlds);
  REQUIRE(back.episodes.size() == ds.episodes.size());
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) CHECK(episode_text(back.episodes[i]) == episode_text(ds.episodes[i]));

  data::write_dataset(back, d2.string());
  for (const std::string& f : files) CHECK(data::read_file((d1 / f).string()) == data::read_file((d2 / f).string()));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("reading a missing or malformed dataset is an I/O error") {
  CHECK_THROWS_AS(data::read_dataset("/nonexistent/dataset"), IoError);
  const data::Dataset ds = data::generate_dataset(1, 2, 3, false, false);
  const fs::path d = scratch("bad");
  data::write_dataset(ds, d.string());
  data::write_file((d / "episodes.jsonl").string(), "{not json\n");
  CHECK_THROWS_AS(data::read_dataset(d.string()), IoError);
  fs::remove_all(d);
}

TEST_CASE("subset keeps the chosen episodes and every world") {
  const data::Dataset ds = data::generate_dataset(3, 6, 2, false, false);
  const std::vector<std::size_t> pick = {4, 1};
  const data::Dataset sub = data::subset(ds, pick);
  REQUIRE(sub.episodes.size() == 2);
  CHECK(episode_text(sub.episodes[0]) == episode_text(ds.episodes[4]));
  CHECK(sub.worlds == ds.worlds);
  CHECK(&sub.world_of(sub.episodes[1]) != nullptr);
}
