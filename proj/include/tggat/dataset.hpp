#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tggat/encoders.hpp"
#include "tggat/env.hpp"

// On-disk episode datasets: meta.json, vocab.txt, worlds/world_<k>.json and
// episodes.jsonl (one episode object per line).
namespace tggat::data {

struct DatasetMeta {
  std::uint64_t seed = 0;
  int n_worlds = 0;
  int n_base_episodes = 0;
  bool paraphrase = false;
  bool augment = false;  // enables image augmentation when training on this set
  env::WorldConfig world;
  env::EnvConfig env;
};

struct Dataset {
  DatasetMeta meta;
  enc::Vocabulary vocab;
  std::vector<env::World> worlds;
  std::vector<env::Episode> episodes;

  const env::World& world_of(const env::Episode& ep) const { return worlds.at(static_cast<std::size_t>(ep.world_index)); }
};

// Episode j lives in world j mod n_worlds. With paraphrase, every episode is
// followed by its five paraphrased copies. Throws UsageError for n_worlds < 1.
Dataset generate_dataset(int n_worlds, int n_episodes, std::uint64_t seed, bool paraphrase, bool augment,
                         const env::WorldConfig& world_cfg = {}, const env::EnvConfig& env_cfg = {});

// Returns the written file paths relative to `dir`, in write order.
std::vector<std::string> write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// Copy holding only the selected episodes (worlds are shared by index).
Dataset subset(const Dataset& ds, std::span<const std::size_t> episode_indices);

nlohmann::json world_to_json(const env::World& w);
env::World world_from_json(const nlohmann::json& j);
nlohmann::json episode_to_json(const env::Episode& ep);
env::Episode episode_from_json(const nlohmann::json& j, const env::EnvConfig& cfg);
nlohmann::json meta_to_json(const DatasetMeta& m);
DatasetMeta meta_from_json(const nlohmann::json& j);

// Compact single-line JSON with sorted keys and shortest round-trip doubles.
std::string canonical_dump(const nlohmann::json& j);

std::string read_file(const std::string& path);
// Throws IoError on failure.
void write_file(const std::string& path, const std::string& contents);

}  // namespace tggat::data
