#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tggat/numerics.hpp"

// The tggat command set. Every cmd_* returns a process exit code and writes
// exactly one run manifest next to its outputs.
namespace tggat::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitIo = 2,
  kExitNumeric = 3,
  kExitCompatibility = 4,
  kExitGradcheck = 5,
  kExitUsage = 64,
};

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> hashes;  // output path -> FNV-1a 64 hex
  double duration_s = 0.0;

  nlohmann::json to_json() const;
};

// FNV-1a 64 of the file's bytes as 16 hex digits.
std::string hash_file(const std::string& path);

struct GenOptions {
  int worlds = 0;
  int episodes = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool paraphrase = false;
  bool augment = false;
};

struct TrainOptions {
  std::string config;  // empty = desk defaults
  std::string data;
  std::string out;
  std::string val;     // empty = hold out the last tenth of the worlds
  std::string resume;  // checkpoint to continue from
  bool verbose = false;
};

enum class EvalPolicy { Model, Oracle, Random };

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  EvalPolicy policy = EvalPolicy::Model;
  std::uint64_t seed = 0;  // random policy only
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::string out;
  std::string corrupt;  // test hook: component whose gradient gets a spurious offset
};

struct ReportOptions {
  std::vector<std::string> runs;
  std::string out;
};

int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& opt, std::ostream& out, std::ostream& err);

struct GradcheckEntry {
  std::string component;
  nx::FiniteDiffResult result;
  std::string worst_param;
};

inline constexpr double kGradcheckTolerance = 1e-4;

// Components: MHCA, GAT, action, grounding, attention, L_l1, L_giou, L_bce,
// L_gr, L_nav, L_hap, L_sum.
std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed, const std::string& corrupt = "");

// Percentages for SR/SPL and meters for GP, one decimal, as printed by eval and report.
std::string format_metric(double value);

// Parses argv and dispatches; parse errors return kExitUsage.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tggat::cli
