#include "tggat/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tggat/config.hpp"
#include "tggat/seeding.hpp"

namespace tggat::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kEpisodeStream = 0x65706973ULL;

std::string world_ref(int k) { return "worlds/world_" + std::to_string(k) + ".json"; }

json corners_json(const std::array<geo::Vec2, 4>& corners) {
  json out = json::array();
  for (const geo::Vec2& p : corners) out.push_back({p.x(), p.y()});
  return out;
}

geo::ViewArea area_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw IoError("episode: view area needs four corners");
  geo::ViewArea a;
  for (std::size_t i = 0; i < 4; ++i) a.corners[i] = geo::Vec2(j[i].at(0).get<double>(), j[i].at(1).get<double>());
  return a;
}

}  // namespace

std::string canonical_dump(const json& j) { return j.dump(); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << contents;
  if (!out) throw IoError("write failed for " + path);
}

Dataset generate_dataset(int n_worlds, int n_episodes, std::uint64_t seed, bool paraphrase, bool augment,
                         const env::WorldConfig& world_cfg, const env::EnvConfig& env_cfg) {
  if (n_worlds < 1) throw UsageError("generate_dataset: need at least one world");
  if (n_episodes < 0) throw UsageError("generate_dataset: episode count must be non-negative");
  Dataset ds;
  ds.meta = DatasetMeta{seed, n_worlds, n_episodes, paraphrase, augment, world_cfg, env_cfg};
  ds.vocab = env::build_vocabulary();
  std::vector<std::uint64_t> world_seeds;
  for (int k = 0; k < n_worlds; ++k) {
    world_seeds.push_back(mix_seed(seed, static_cast<std::uint64_t>(k)));
    ds.worlds.push_back(env::generate_world(world_seeds.back(), world_cfg));
  }
  for (int j = 0; j < n_episodes; ++j) {
    const int k = j % n_worlds;
    env::Episode ep = env::generate_episode(ds.worlds[static_cast<std::size_t>(k)],
                                            mix_seed(seed ^ kEpisodeStream, static_cast<std::uint64_t>(j)), env_cfg);
    ep.world_index = k;
    ep.world_seed = world_seeds[static_cast<std::size_t>(k)];
    const std::string original = ep.current.instruction;
    ds.episodes.push_back(ep);
    if (!paraphrase) continue;
    const std::vector<std::string> variants = env::paraphrase_instruction(original);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      env::Episode copy = ep;
      copy.current.instruction = variants[v];
      copy.variant = static_cast<int>(v) + 1;
      ds.episodes.push_back(std::move(copy));
    }
  }
  return ds;
}

json world_to_json(const env::World& w) {
  json cells = json::array();
  for (const env::Cell& c : w.cells) cells.push_back({c.landmark_class, c.color});
  json landmarks = json::array();
  for (const env::Landmark& l : w.landmarks) {
    landmarks.push_back({{"row", l.row},
                         {"col", l.col},
                         {"rows", l.rows},
                         {"cols", l.cols},
                         {"class", l.landmark_class},
                         {"color", l.color}});
  }
  return json{{"h", w.h}, {"w", w.w}, {"scale_m", w.scale_m}, {"cells", cells}, {"landmarks", landmarks}};
}

env::World world_from_json(const json& j) {
  env::World w;
  w.h = j.at("h");
  w.w = j.at("w");
  w.scale_m = j.at("scale_m");
  const json& cells = j.at("cells");
  if (cells.size() != static_cast<std::size_t>(w.h * w.w)) throw IoError("world: cell count does not match h * w");
  for (const json& c : cells) w.cells.push_back(env::Cell{c.at(0).get<int>(), c.at(1).get<int>()});
  for (const json& l : j.at("landmarks")) {
    w.landmarks.push_back(env::Landmark{l.at("row"), l.at("col"), l.at("rows"), l.at("cols"), l.at("class"),
                                        l.at("color")});
  }
  return w;
}

json episode_to_json(const env::Episode& ep) {
  json dialog = json::array();
  for (const env::Utterance& u : env::flatten_dialog(ep)) {
    dialog.push_back({{"role", u.is_question ? "que" : "ins"}, {"text", u.text}});
  }
  json trajectory = json::array();
  for (const geo::ViewArea& a : ep.trajectory.areas) trajectory.push_back(corners_json(a.corners));
  json states = json::array();
  for (const geo::DroneState& s : ep.trajectory.states) {
    states.push_back({s.position.x, s.position.y, s.position.z, s.heading.radians()});
  }
  json grounding = json::array();
  for (const loss::GroundingTarget& g : ep.grounding) {
    grounding.push_back({{"c", g.c}, {"box", {g.box.x, g.box.y, g.box.w, g.box.h}}});
  }
  json attention = json::array();
  for (const nx::Matrix& m : ep.attention) {
    json rows = json::array();
    for (nx::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (nx::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c) > 0.5 ? 1 : 0);
      rows.push_back(std::move(row));
    }
    attention.push_back(std::move(rows));
  }
  return json{{"seed", ep.seed},
              {"world_ref", world_ref(ep.world_index)},
              {"world_index", ep.world_index},
              {"world_seed", ep.world_seed},
              {"target_landmark", ep.target_landmark},
              {"cardinal", ep.cardinal},
              {"variant", ep.variant},
              {"dialog", dialog},
              {"trajectory", trajectory},
              {"states", states},
              {"target", corners_json(ep.target.corners)},
              {"grounding", grounding},
              {"attention", attention}};
}

env::Episode episode_from_json(const json& j, const env::EnvConfig& cfg) {
  env::Episode ep;
  ep.seed = j.at("seed");
  ep.world_index = j.at("world_index");
  ep.world_seed = j.at("world_seed");
  ep.target_landmark = j.at("target_landmark");
  ep.cardinal = j.at("cardinal");
  ep.variant = j.at("variant");
  std::vector<env::Utterance> utterances;
  for (const json& u : j.at("dialog")) {
    const std::string role = u.at("role");
    if (role != "que" && role != "ins") throw IoError("episode: dialog role must be que or ins");
    utterances.push_back(env::Utterance{role == "que", u.at("text")});
  }
  try {
    env::assign_dialog(ep, utterances);
  } catch (const UsageError& e) {
    throw IoError(std::string("episode: ") + e.what());
  }
  for (const json& a : j.at("trajectory")) ep.trajectory.areas.push_back(area_from_json(a));
  for (const json& s : j.at("states")) {
    ep.trajectory.states.push_back(geo::DroneState{
        geo::Position{s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()},
        geo::Heading(s.at(3).get<double>())});
  }
  if (ep.trajectory.areas.empty() || ep.trajectory.areas.size() != ep.trajectory.states.size()) {
    throw IoError("episode: trajectory and states must be non-empty and of equal length");
  }
  ep.target = area_from_json(j.at("target"));
  for (const json& g : j.at("grounding")) {
    const json& b = g.at("box");
    ep.grounding.push_back(loss::GroundingTarget{g.at("c"), loss::Box{b.at(0), b.at(1), b.at(2), b.at(3)}});
  }
  for (const json& m : j.at("attention")) {
    nx::Matrix mask = nx::Matrix::Zero(cfg.grid, cfg.grid);
    if (m.size() != static_cast<std::size_t>(cfg.grid)) throw IoError("episode: attention mask has wrong size");
    for (int r = 0; r < cfg.grid; ++r) {
      for (int c = 0; c < cfg.grid; ++c) mask(r, c) = m.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
    ep.attention.push_back(std::move(mask));
  }
  return ep;
}

json meta_to_json(const DatasetMeta& m) {
  return json{{"seed", m.seed},
              {"n_worlds", m.n_worlds},
              {"n_base_episodes", m.n_base_episodes},
              {"paraphrase", m.paraphrase},
              {"augment", m.augment},
              {"world", train::to_json(m.world)},
              {"env", train::to_json(m.env)}};
}

DatasetMeta meta_from_json(const json& j) {
  DatasetMeta m;
  m.seed = j.at("seed");
  m.n_worlds = j.at("n_worlds");
  m.n_base_episodes = j.at("n_base_episodes");
  m.paraphrase = j.at("paraphrase");
  m.augment = j.at("augment");
  m.world = train::world_config_from_json(j.at("world"));
  m.env = train::env_from_json(j.at("env"));
  return m;
}

std::vector<std::string> write_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "worlds", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  std::vector<std::string> written;
  auto emit = [&](const std::string& rel, const std::string& contents) {
    write_file((fs::path(dir) / rel).string(), contents);
    written.push_back(rel);
  };
  emit("meta.json", meta_to_json(ds.meta).dump(2) + "\n");
  std::string vocab;
  for (const std::string& t : ds.vocab.tokens()) vocab += t + "\n";
  emit("vocab.txt", vocab);
  for (std::size_t k = 0; k < ds.worlds.size(); ++k) {
    emit(world_ref(static_cast<int>(k)), canonical_dump(world_to_json(ds.worlds[k])) + "\n");
  }
  std::string lines;
  for (const env::Episode& ep : ds.episodes) lines += canonical_dump(episode_to_json(ep)) + "\n";
  emit("episodes.jsonl", lines);
  return written;
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  Dataset ds;
  try {
    ds.meta = meta_from_json(json::parse(read_file((root / "meta.json").string())));
    ds.vocab = enc::Vocabulary::load((root / "vocab.txt").string());
    for (int k = 0; k < ds.meta.n_worlds; ++k) {
      ds.worlds.push_back(world_from_json(json::parse(read_file((root / world_ref(k)).string()))));
    }
    std::istringstream lines(read_file((root / "episodes.jsonl").string()));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      env::Episode ep = episode_from_json(json::parse(line), ds.meta.env);
      if (ep.world_index < 0 || ep.world_index >= ds.meta.n_worlds) throw IoError("episode refers to a missing world");
      ds.episodes.push_back(std::move(ep));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed dataset in " + dir + ": " + e.what());
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> episode_indices) {
  Dataset out;
  out.meta = ds.meta;
  out.vocab = ds.vocab;
  out.worlds = ds.worlds;
  for (std::size_t i : episode_indices) out.episodes.push_back(ds.episodes.at(i));
  return out;
}

}  // namespace tggat::data
