#include "tggat/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace tggat::env {
namespace {

using Rng = std::mt19937_64;

constexpr std::array<std::string_view, 6> kInstructionTemplates = {
    "head {d} and your destination is the {c} {k}",
    "go {d} and your goal is the {c} {k}",
    "fly {d} , the destination is the {c} {k}",
    "move {d} until you reach the {c} {k}",
    "travel {d} and stop at the {c} {k}",
    "navigate {d} , your target is the {c} {k}",
};

constexpr std::array<std::string_view, 4> kQuestions = {
    "where should i go",
    "which way should i fly",
    "is the destination near",
    "what should i do now",
};

constexpr std::array<std::string_view, 2> kOpeners = {
    "hi drone , take off and look around",
    "hello , start flying",
};

constexpr std::array<std::string_view, 2> kFillers = {
    "keep going {d}",
    "pass over the {c} {k}",
};

std::string fill(std::string_view pattern, std::string_view dir, std::string_view color, std::string_view cls) {
  std::string out(pattern);
  auto replace = [&out](std::string_view key, std::string_view value) {
    for (std::size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace("{d}", dir);
  replace("{c}", color);
  replace("{k}", cls);
  return out;
}

template <typename T>
const T& pick(Rng& rng, std::span<const T> items) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

bool bernoulli(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

geo::Polygon<double> unit_square(double x0, double y0, double x1, double y1) {
  return {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
}

}  // namespace

Vec2 cardinal_vector(int k) {
  const double s = std::sqrt(0.5);
  static const std::array<Vec2, 8> table = {Vec2(1, 0),  Vec2(s, s),   Vec2(0, 1),  Vec2(-s, s),
                                            Vec2(-1, 0), Vec2(-s, -s), Vec2(0, -1), Vec2(s, -s)};
  return table[static_cast<std::size_t>(((k % 8) + 8) % 8)];
}

// --- World ----------------------------------------------------------------------

Cell World::sample(const Vec2& p) const {
  const double fc = std::floor(p.x() / scale_m);
  const double fr = std::floor(p.y() / scale_m);
  if (fc < 0.0 || fr < 0.0 || fc >= w || fr >= h) return Cell{};
  return at(static_cast<int>(fr), static_cast<int>(fc));
}

std::array<Vec2, 4> World::landmark_corners(std::size_t i) const {
  const Landmark& l = landmarks.at(i);
  const double x0 = l.col * scale_m, x1 = (l.col + l.cols) * scale_m;
  const double y0 = l.row * scale_m, y1 = (l.row + l.rows) * scale_m;
  return {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
}

Vec2 World::landmark_center(std::size_t i) const {
  const Landmark& l = landmarks.at(i);
  return {(l.col + 0.5 * l.cols) * scale_m, (l.row + 0.5 * l.rows) * scale_m};
}

World generate_world(std::uint64_t seed, const WorldConfig& cfg) {
  if (cfg.h < 16 || cfg.w < 16) throw GenerationError("generate_world: world must be at least 16x16 cells");
  const int palette = static_cast<int>(kClassNames.size() * kColorNames.size());
  if (cfg.min_landmarks < 2 || cfg.max_landmarks < cfg.min_landmarks || cfg.max_landmarks > palette) {
    throw GenerationError("generate_world: landmark count range is invalid");
  }
  Rng rng(seed);
  World world;
  world.h = cfg.h;
  world.w = cfg.w;
  world.scale_m = cfg.scale_m;
  world.cells.assign(static_cast<std::size_t>(cfg.h * cfg.w), Cell{});

  std::vector<std::pair<int, int>> combos;
  for (int c = 1; c <= static_cast<int>(kClassNames.size()); ++c) {
    for (int k = 1; k <= static_cast<int>(kColorNames.size()); ++k) combos.emplace_back(c, k);
  }
  std::shuffle(combos.begin(), combos.end(), rng);

  const int n = std::uniform_int_distribution<int>(cfg.min_landmarks, cfg.max_landmarks)(rng);
  std::uniform_int_distribution<int> extent(1, 2);
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      Landmark l;
      l.rows = extent(rng);
      l.cols = extent(rng);
      l.row = std::uniform_int_distribution<int>(1, cfg.h - l.rows - 1)(rng);
      l.col = std::uniform_int_distribution<int>(1, cfg.w - l.cols - 1)(rng);
      l.landmark_class = combos[static_cast<std::size_t>(i)].first;
      l.color = combos[static_cast<std::size_t>(i)].second;
      bool free = true;
      for (int r = l.row; r < l.row + l.rows && free; ++r) {
        for (int c = l.col; c < l.col + l.cols && free; ++c) free = world.at(r, c).landmark_class == 0;
      }
      if (!free) continue;
      for (int r = l.row; r < l.row + l.rows; ++r) {
        for (int c = l.col; c < l.col + l.cols; ++c) world.at(r, c) = Cell{l.landmark_class, l.color};
      }
      world.landmarks.push_back(l);
      placed = true;
    }
    if (!placed) throw GenerationError("generate_world: could not place landmark " + std::to_string(i));
  }
  return world;
}

// --- Rendering -------------------------------------------------------------------

RenderResult render_observation(const World& world, const geo::DroneState& state, int target_landmark,
                                const EnvConfig& cfg) {
  const geo::ViewArea footprint = geo::view_area_from_state(state, cfg.fov);
  const geo::Polygon<double> bounds = unit_square(0.0, 0.0, world.width_m(), world.height_m());
  if (geo::intersection_area<double>(footprint.corners, bounds) <= 0.0) {
    throw RenderError("render_observation: view footprint lies outside the world");
  }

  const int g = cfg.grid;
  const double side = 2.0 * state.position.z * std::tan(0.5 * cfg.fov);
  const double th = state.heading.radians();
  const Vec2 right(std::cos(th), std::sin(th));
  const Vec2 up(-std::sin(th), std::cos(th));
  const Vec2 center = state.position.planar();

  RenderResult out;
  out.observation.grid = g;
  out.observation.channels = kChannels;
  out.observation.cells = Matrix::Zero(static_cast<nx::Index>(g) * g, kChannels);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const double u = (c + 0.5) / g;
      const double v = (r + 0.5) / g;
      const Vec2 p = center + (u - 0.5) * side * right + (0.5 - v) * side * up;
      const Cell cell = world.sample(p);
      if (cell.landmark_class > 0) out.observation.at(r, c, cell.landmark_class - 1) = 1.0;
      if (cell.color > 0) out.observation.at(r, c, static_cast<int>(kClassNames.size()) + cell.color - 1) = 1.0;
    }
  }

  out.attention = Matrix::Zero(g, g);
  out.target = loss::GroundingTarget{0, loss::Box{0.0, 0.0, 0.0, 0.0}};
  if (target_landmark < 0) return out;

  // Target rectangle in observation coordinates (u right, v down), clipped to the frame.
  geo::Polygon<double> poly;
  for (const Vec2& p : world.landmark_corners(static_cast<std::size_t>(target_landmark))) {
    const Vec2 d = p - center;
    poly.emplace_back(d.dot(right) / side + 0.5, 0.5 - d.dot(up) / side);
  }
  if (geo::signed_area<double>(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  const geo::Polygon<double> frame = unit_square(0.0, 0.0, 1.0, 1.0);
  const geo::Polygon<double> clipped = geo::clip_convex<double>(poly, frame);
  const double area = std::max(0.0, geo::signed_area<double>(clipped));
  constexpr double kMinVisibleArea = 1e-12;
  if (area <= kMinVisibleArea) return out;

  double u0 = 1.0, u1 = 0.0, v0 = 1.0, v1 = 0.0;
  for (const Vec2& p : clipped) {
    u0 = std::min(u0, p.x());
    u1 = std::max(u1, p.x());
    v0 = std::min(v0, p.y());
    v1 = std::max(v1, p.y());
  }
  out.target = loss::GroundingTarget{1, loss::Box{0.5 * (u0 + u1), 0.5 * (v0 + v1), u1 - u0, v1 - v0}};
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const double cu0 = double(c) / g, cu1 = double(c + 1) / g, cv0 = double(r) / g, cv1 = double(r + 1) / g;
      if (cu1 <= u0 || cu0 >= u1 || cv1 <= v0 || cv0 >= v1) continue;
      if (geo::intersection_area<double>(clipped, unit_square(cu0, cv0, cu1, cv1)) > 0.0) out.attention(r, c) = 1.0;
    }
  }
  return out;
}

// --- Augmentation ------------------------------------------------------------------

enc::ObservationGrid augment_observation(const enc::ObservationGrid& obs, const AugConfig& cfg,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (!(unit(rng) < cfg.p)) return obs;

  enum Op { kBlur, kNoise, kContrast, kDropout };
  std::vector<Op> available = {kNoise, kContrast, kDropout};
  if (cfg.blur_enabled) available.insert(available.begin(), kBlur);
  std::vector<Op> chosen;
  for (Op op : available) {
    if (unit(rng) < 0.5) chosen.push_back(op);
  }
  if (chosen.empty()) chosen.push_back(pick<Op>(rng, available));

  enc::ObservationGrid out = obs;
  const int g = obs.grid;
  for (Op op : chosen) {
    switch (op) {
      case kBlur: {
        const Matrix src = out.cells;
        for (int r = 0; r < g; ++r) {
          for (int c = 0; c < g; ++c) {
            for (int ch = 0; ch < obs.channels; ++ch) {
              double acc = 0.0;
              for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                  const int rr = std::clamp(r + dr, 0, g - 1);
                  const int cc = std::clamp(c + dc, 0, g - 1);
                  acc += src(rr * g + cc, ch);
                }
              }
              out.at(r, c, ch) = acc / 9.0;
            }
          }
        }
        break;
      }
      case kNoise: {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (nx::Index i = 0; i < out.cells.size(); ++i) out.cells.data()[i] += noise(rng);
        break;
      }
      case kContrast: {
        const double alpha = std::uniform_real_distribution<double>(cfg.contrast_min, cfg.contrast_max)(rng);
        out.cells *= alpha;
        break;
      }
      case kDropout: {
        for (nx::Index cell = 0; cell < out.cells.rows(); ++cell) {
          if (unit(rng) < cfg.dropout_rate) out.cells.row(cell).setZero();
        }
        break;
      }
    }
  }
  out.cells = out.cells.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

// --- Dialog grammar ------------------------------------------------------------------

std::string base_instruction(int cardinal, int color, int landmark_class) {
  return fill(kInstructionTemplates[0], kCardinals[static_cast<std::size_t>(cardinal)],
              kColorNames[static_cast<std::size_t>(color - 1)],
              kClassNames[static_cast<std::size_t>(landmark_class - 1)]);
}

std::vector<std::string> paraphrase_instruction(const std::string& instruction) {
  const std::vector<std::string> words = enc::split_words(instruction);
  auto find_first = [&words](auto table) -> std::optional<std::string_view> {
    for (const std::string& w : words) {
      for (std::string_view t : table) {
        if (w == t) return t;
      }
    }
    return std::nullopt;
  };
  const auto dir = find_first(kCardinals);
  const auto color = find_first(kColorNames);
  const auto cls = find_first(kClassNames);
  if (!dir || !color || !cls) {
    throw ParaphraseError("paraphrase_instruction: no direction/color/class slots in '" + instruction + "'");
  }
  std::vector<std::string> out;
  for (std::string_view t : kInstructionTemplates) {
    std::string candidate = fill(t, *dir, *color, *cls);
    if (candidate != instruction && out.size() < 5) out.push_back(std::move(candidate));
  }
  return out;
}

std::vector<std::string> grammar_words() {
  std::set<std::string> words;
  auto add_all = [&words](const std::string& text) {
    for (std::string& w : enc::split_words(text)) words.insert(std::move(w));
  };
  std::vector<std::string_view> patterns(kInstructionTemplates.begin(), kInstructionTemplates.end());
  patterns.insert(patterns.end(), kQuestions.begin(), kQuestions.end());
  patterns.insert(patterns.end(), kOpeners.begin(), kOpeners.end());
  patterns.insert(patterns.end(), kFillers.begin(), kFillers.end());
  for (std::string_view p : patterns) add_all(fill(p, "", "", ""));
  for (std::string_view d : kCardinals) words.emplace(d);
  for (std::string_view c : kColorNames) words.emplace(c);
  for (std::string_view k : kClassNames) words.emplace(k);
  return {words.begin(), words.end()};
}

enc::Vocabulary build_vocabulary() {
  const std::vector<std::string> words = grammar_words();
  return enc::Vocabulary(words);
}

std::vector<Utterance> flatten_dialog(const Episode& ep) {
  std::vector<Utterance> out;
  auto push_round = [&out](const enc::DialogRound& r) {
    if (r.question) out.push_back({true, *r.question});
    out.push_back({false, r.instruction});
  };
  for (const enc::DialogRound& r : ep.history) push_round(r);
  push_round(ep.current);
  return out;
}

void assign_dialog(Episode& ep, const std::vector<Utterance>& utterances) {
  std::vector<enc::DialogRound> rounds;
  std::optional<std::string> pending;
  for (const Utterance& u : utterances) {
    if (u.is_question) {
      if (pending) throw UsageError("assign_dialog: two questions in a row");
      pending = u.text;
    } else {
      rounds.push_back(enc::DialogRound{pending, u.text});
      pending.reset();
    }
  }
  if (pending || rounds.empty()) throw UsageError("assign_dialog: dialog must end with an instruction");
  ep.current = rounds.back();
  rounds.pop_back();
  ep.history = std::move(rounds);
}

// --- Dynamics and oracle ---------------------------------------------------------------

geo::DroneState apply_action(const geo::DroneState& state, const geo::Action& action, const EnvConfig& cfg) {
  geo::DroneState next = state;
  next.position.x += action.dx;
  next.position.y += action.dy;
  next.position.z = std::clamp(state.position.z + action.dz, cfg.z_min, cfg.z_max);
  if (action.planar_norm() > cfg.heading_eps) next.heading = geo::Heading(std::atan2(action.dy, action.dx));
  return next;
}

geo::Action oracle_action(const geo::DroneState& state, const geo::Trajectory& gt, const EnvConfig& cfg) {
  if (gt.states.empty()) throw UsageError("oracle_action: empty ground-truth trajectory");
  geo::Action act;
  const geo::ViewArea here = geo::view_area_from_state(state, cfg.fov);
  if (geo::is_success(here, gt.target())) {
    act.stop = true;
    return act;
  }

  // Arc-length position of the state's projection onto the waypoint polyline.
  const Vec2 p = state.position.planar();
  const std::size_t n = gt.states.size();
  std::vector<double> arc(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    arc[i] = arc[i - 1] + (gt.states[i].position.planar() - gt.states[i - 1].position.planar()).norm();
  }
  double best_dist = (p - gt.states[0].position.planar()).norm();
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 a = gt.states[i].position.planar();
    const Vec2 seg = gt.states[i + 1].position.planar() - a;
    const double len2 = seg.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(seg) / len2, 0.0, 1.0) : 0.0;
    const double dist = (a + t * seg - p).norm();
    if (dist < best_dist) {
      best_dist = dist;
      s = arc[i] + t * std::sqrt(len2);
    }
  }
  std::size_t aim = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const bool within = (gt.states[i].position.planar() - p).norm() <= cfg.waypoint_radius_m;
    if (arc[i] > s + cfg.waypoint_radius_m && !within) {
      aim = i;
      break;
    }
  }
  const geo::Position& goal = gt.states[aim].position;
  double dx = goal.x - state.position.x;
  double dy = goal.y - state.position.y;
  double dz = goal.z - state.position.z;
  const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (norm > cfg.max_step_m) {
    const double k = cfg.max_step_m / norm;
    dx *= k;
    dy *= k;
    dz *= k;
  }
  act.dx = dx;
  act.dy = dy;
  act.dz = dz;
  return act;
}

// --- Episodes -----------------------------------------------------------------------

Episode generate_episode(const World& world, std::uint64_t seed, const EnvConfig& cfg) {
  if (world.landmarks.size() < 2) throw GenerationError("generate_episode: world needs at least two landmarks");
  Rng rng(seed);
  constexpr int kAttempts = 200;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const auto li = std::uniform_int_distribution<std::size_t>(0, world.landmarks.size() - 1)(rng);
    const int k = std::uniform_int_distribution<int>(0, 7)(rng);
    const int moves = std::uniform_int_distribution<int>(cfg.min_moves, cfg.max_moves)(rng);
    const double first = std::uniform_real_distribution<double>(cfg.min_first_step_frac, 1.0)(rng) * cfg.max_step_m;
    const double target_z =
        cfg.vary_altitude ? std::uniform_real_distribution<double>(0.8, 1.2)(rng) * cfg.altitude_m : cfg.altitude_m;
    const Vec2 goal = world.landmark_center(li);
    const Vec2 dir = cardinal_vector(k);
    const double distance = (moves - 1) * cfg.max_step_m + first;
    const Vec2 start = goal - distance * dir;
    if (!world.contains(start) || moves + 1 > cfg.max_steps) continue;

    Episode ep;
    ep.seed = seed;
    ep.target_landmark = static_cast<int>(li);
    ep.cardinal = k;
    const geo::Heading heading(k * std::numbers::pi / 4.0);
    for (int j = 0; j <= moves; ++j) {
      const Vec2 wp = j == 0 ? start : Vec2(goal - (moves - j) * cfg.max_step_m * dir);
      const double z = cfg.altitude_m + (target_z - cfg.altitude_m) * j / moves;
      const geo::DroneState st{geo::Position{wp.x(), wp.y(), z}, heading};
      ep.trajectory.states.push_back(st);
      ep.trajectory.areas.push_back(geo::view_area_from_state(st, cfg.fov));
    }
    ep.target = ep.trajectory.areas.back();

    // Following the oracle from the start must succeed within max_steps.
    geo::DroneState s = ep.trajectory.states.front();
    bool reached = false;
    for (int t = 0; t < cfg.max_steps; ++t) {
      const geo::Action a = oracle_action(s, ep.trajectory, cfg);
      if (a.stop) {
        reached = true;
        break;
      }
      if (t + 1 == cfg.max_steps) break;
      s = apply_action(s, a, cfg);
    }
    if (!reached || !geo::is_success(geo::view_area_from_state(s, cfg.fov), ep.target)) continue;

    const Landmark& target = world.landmarks[li];
    const std::string instruction = base_instruction(k, target.color, target.landmark_class);
    const std::string question(pick<std::string_view>(rng, kQuestions));
    if (bernoulli(rng, cfg.history_prob) && cfg.max_history_rounds > 0) {
      const int rounds = std::uniform_int_distribution<int>(1, cfg.max_history_rounds)(rng);
      ep.history.push_back(enc::DialogRound{std::nullopt, std::string(pick<std::string_view>(rng, kOpeners))});
      for (int r = 1; r < rounds; ++r) {
        const Landmark& other = world.landmarks[std::uniform_int_distribution<std::size_t>(0, world.landmarks.size() - 1)(rng)];
        const std::string_view filler = pick<std::string_view>(rng, kFillers);
        const int other_dir = std::uniform_int_distribution<int>(0, 7)(rng);
        ep.history.push_back(enc::DialogRound{
            std::string(pick<std::string_view>(rng, kQuestions)),
            fill(filler, kCardinals[static_cast<std::size_t>(other_dir)],
                 kColorNames[static_cast<std::size_t>(other.color - 1)],
                 kClassNames[static_cast<std::size_t>(other.landmark_class - 1)])});
      }
      ep.current = enc::DialogRound{question, instruction};
    } else {
      ep.current = enc::DialogRound{std::nullopt, instruction};
    }

    for (const geo::DroneState& st : ep.trajectory.states) {
      RenderResult rr = render_observation(world, st, ep.target_landmark, cfg);
      ep.grounding.push_back(rr.target);
      ep.attention.push_back(std::move(rr.attention));
    }
    return ep;
  }
  throw GenerationError("generate_episode: no feasible start found for seed " + std::to_string(seed));
}

}  // namespace tggat::env
