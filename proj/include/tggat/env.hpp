#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tggat/encoders.hpp"
#include "tggat/geo.hpp"
#include "tggat/losses.hpp"

// Procedural aerial worlds, episodes with dialogs and labels, rendering of
// bird's-eye observations, and the hybrid (image + instruction) augmenter.
namespace tggat::env {

using geo::Vec2;
using nx::Matrix;

inline constexpr std::array<std::string_view, 4> kClassNames = {"building", "pool", "field", "tower"};
inline constexpr std::array<std::string_view, 4> kColorNames = {"red", "green", "blue", "white"};
// Index k points at angle k * pi / 4 (east = 0, counter-clockwise).
inline constexpr std::array<std::string_view, 8> kCardinals = {"east", "northeast", "north", "northwest",
                                                               "west", "southwest", "south", "southeast"};

// Exact unit vector for cardinal index k.
Vec2 cardinal_vector(int k);

inline constexpr int kChannels = static_cast<int>(kClassNames.size() + kColorNames.size());

struct Cell {
  int landmark_class = 0;  // 0 = empty, else 1-based index into kClassNames
  int color = 0;           // 0 = none, else 1-based index into kColorNames
  bool operator==(const Cell&) const = default;
};

// Axis-aligned block of cells. Rows run south to north, columns west to east.
struct Landmark {
  int row = 0;
  int col = 0;
  int rows = 1;
  int cols = 1;
  int landmark_class = 1;
  int color = 1;

  bool operator==(const Landmark&) const = default;
};

struct World {
  int h = 0;
  int w = 0;
  double scale_m = 12.5;  // meters per cell
  std::vector<Cell> cells;  // row-major, row 0 at y = 0
  std::vector<Landmark> landmarks;

  const Cell& at(int row, int col) const { return cells[static_cast<std::size_t>(row * w + col)]; }
  Cell& at(int row, int col) { return cells[static_cast<std::size_t>(row * w + col)]; }
  double width_m() const { return w * scale_m; }
  double height_m() const { return h * scale_m; }
  bool contains(const Vec2& p) const { return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width_m() && p.y() <= height_m(); }
  // Sample at a world point; empty outside the map.
  Cell sample(const Vec2& p) const;
  // CCW world-frame rectangle of landmark i.
  std::array<Vec2, 4> landmark_corners(std::size_t i) const;
  Vec2 landmark_center(std::size_t i) const;

  bool operator==(const World&) const = default;
};

struct WorldConfig {
  int h = 40;
  int w = 40;
  double scale_m = 12.5;
  int min_landmarks = 6;
  int max_landmarks = 10;
  int max_retries = 1000;
};

struct EnvConfig {
  double altitude_m = 50.0;
  double fov = 1.5707963267948966;  // pi / 2
  int grid = 8;
  double max_step_m = 50.0;
  int min_moves = 2;
  int max_moves = 4;
  double min_first_step_frac = 0.3;
  double waypoint_radius_m = 1.0;
  double z_min = 20.0;
  double z_max = 100.0;
  double heading_eps = 1e-6;
  double history_prob = 0.5;
  int max_history_rounds = 2;
  int max_steps = 10;
  bool vary_altitude = false;
};

struct AugConfig {
  double p = 0.4;
  double noise_sigma = 0.1;
  bool blur_enabled = true;
  double contrast_min = 0.7;
  double contrast_max = 1.3;
  double dropout_rate = 0.1;

  bool operator==(const AugConfig&) const = default;
};

struct Episode {
  std::uint64_t seed = 0;
  std::uint64_t world_seed = 0;
  int world_index = 0;
  int target_landmark = 0;
  int cardinal = 0;
  int variant = 0;  // 0 = original instruction, 1..5 = paraphrases
  std::vector<enc::DialogRound> history;  // oldest first
  enc::DialogRound current;
  geo::Trajectory trajectory;
  geo::ViewArea target;
  std::vector<loss::GroundingTarget> grounding;  // per trajectory step
  std::vector<Matrix> attention;                 // per step, G x G in {0, 1}
};

struct RenderResult {
  enc::ObservationGrid observation;
  loss::GroundingTarget target;
  Matrix attention;  // G x G
};

World generate_world(std::uint64_t seed, const WorldConfig& cfg = {});

// Throws GenerationError if no valid episode is found within the retry budget.
Episode generate_episode(const World& world, std::uint64_t seed, const EnvConfig& cfg = {});

// Nearest-cell resampling of the view footprint into a G x G grid whose +u
// axis (columns) follows the heading. Row 0 is on the left of the heading.
// Throws RenderError if the footprint misses the world entirely.
RenderResult render_observation(const World& world, const geo::DroneState& state, int target_landmark,
                                const EnvConfig& cfg);

// With probability p, applies a non-empty random subset of box blur, Gaussian
// noise, contrast scaling and cell dropout. Deterministic in seed.
enc::ObservationGrid augment_observation(const enc::ObservationGrid& obs, const AugConfig& cfg,
                                         std::uint64_t seed);

// Five distinct rewrites keeping the cardinal, color and class words.
std::vector<std::string> paraphrase_instruction(const std::string& instruction);

std::string base_instruction(int cardinal, int color, int landmark_class);

geo::Action oracle_action(const geo::DroneState& state, const geo::Trajectory& gt, const EnvConfig& cfg);

geo::DroneState apply_action(const geo::DroneState& state, const geo::Action& action, const EnvConfig& cfg);

// Every word the dialog grammar and paraphraser can emit, in a stable order.
std::vector<std::string> grammar_words();
enc::Vocabulary build_vocabulary();

// Utterances in chronological order, flattened from history + current round.
struct Utterance {
  bool is_question = false;
  std::string text;
};
std::vector<Utterance> flatten_dialog(const Episode& ep);
// Inverse of flatten_dialog: the trailing round is the current one.
void assign_dialog(Episode& ep, const std::vector<Utterance>& utterances);

}  // namespace tggat::env
