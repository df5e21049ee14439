#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "tggat/checkpoint.hpp"
#include "tggat/commands.hpp"
#include "tggat/dataset.hpp"

using namespace tggat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result tggat_run(std::vector<std::string> args) {
  args.insert(args.begin(), "tggat");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "tggat_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::size_t line_count(const fs::path& p) {
  std::istringstream in(data::read_file(p.string()));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

const char* kTinyConfig =
    "d_model = 16\nheads = 2\ntext_layers = 1\ngat_layers = 1\nffn_mult = 2\n"
    "batch_size = 2\nmax_iterations = 4\neval_interval = 2\neval_episodes = 4\n";

}  // namespace

TEST_CASE("gen writes six records per base episode with --paraphrase, deterministically") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  const Result r = tggat_run({"gen", "--worlds", "2", "--episodes", "10", "--seed", "4", "--out", a.string(), "--paraphrase"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(line_count(a / "episodes.jsonl") == 60);
  CHECK(fs::exists(a / "manifest.json"));
  REQUIRE(tggat_run({"gen", "--worlds", "2", "--episodes", "10", "--seed", "4", "--out", b.string(), "--paraphrase"}).code == 0);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    const fs::path twin = b / fs::relative(entry.path(), a);
    CHECK(data::read_file(entry.path().string()) == data::read_file(twin.string()));
  }
  const json ma = json::parse(data::read_file((a / "manifest.json").string()));
  const json mb = json::parse(data::read_file((b / "manifest.json").string()));
  CHECK(ma.at("hashes").size() == mb.at("hashes").size());
  CHECK(ma.at("command") == "gen");

  const json first = json::parse(data::read_file((a / "episodes.jsonl").string()).substr(0, data::read_file((a / "episodes.jsonl").string()).find('\n')));
  for (const char* key : {"seed", "world_ref", "dialog", "trajectory", "target", "grounding", "attention"}) {
    CHECK(first.contains(key));
  }
}

TEST_CASE("gen validates its arguments and reports I/O failures") {
  CHECK(tggat_run({"gen", "--worlds", "0", "--episodes", "3", "--out", scratch("z").string()}).code == cli::kExitUsage);
  CHECK(tggat_run({"gen", "--worlds", "1", "--episodes", "3", "--out", "/proc/tggat/forbidden"}).code == cli::kExitIo);
  CHECK(tggat_run({"gen", "--episodes", "3"}).code == cli::kExitUsage);
  CHECK(tggat_run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(tggat_run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("train, eval and report end to end") {
  const fs::path data_dir = scratch("e2e_data"), run = scratch("e2e_run"), cfg = scratch("e2e.cfg");
  REQUIRE(tggat_run({"gen", "--worlds", "4", "--episodes", "16", "--seed", "2", "--out", data_dir.string()}).code == 0);
  data::write_file(cfg.string(), kTinyConfig);

  Result tr = tggat_run({"train", "--config", cfg.string(), "--data", data_dir.string(), "--out", run.string()});
  REQUIRE(tr.code == cli::kExitOk);
  for (const char* f : {"best.ckpt", "last.ckpt", "metrics.jsonl", "manifest.json"}) CHECK(fs::exists(run / f));
  CHECK(line_count(run / "metrics.jsonl") == 2);
  const ckpt::Checkpoint last = ckpt::load((run / "last.ckpt").string());
  CHECK(last.iteration == 4);
  CHECK(last.config.weights == loss::LossWeights{});

  SUBCASE("resume continues the iteration count") {
    data::write_file(cfg.string(), std::string(kTinyConfig) + "max_iterations = 6\n");
    tr = tggat_run({"train", "--config", cfg.string(), "--data", data_dir.string(), "--out", run.string(), "--resume",
                    (run / "last.ckpt").string()});
    REQUIRE(tr.code == cli::kExitOk);
    CHECK(ckpt::load((run / "last.ckpt").string()).iteration == 6);
    CHECK(line_count(run / "metrics.jsonl") == 3);
  }

  SUBCASE("eval prints SPL, SR, GP and report reproduces the numbers") {
    const fs::path model_eval = run / "eval.json";
    const Result ev = tggat_run({"eval", "--checkpoint", (run / "best.ckpt").string(), "--data", data_dir.string(),
                                 "--out", model_eval.string()});
    REQUIRE(ev.code == cli::kExitOk);
    CHECK(ev.out.find("SPL") < ev.out.find("SR"));
    CHECK(ev.out.find("SR") < ev.out.find("GP"));
    CHECK(fs::exists(model_eval.string() + ".manifest.json"));
    const json rec = json::parse(data::read_file(model_eval.string()));

    const fs::path oracle_dir = scratch("e2e_oracle");
    fs::create_directories(oracle_dir);
    const Result orc = tggat_run({"eval", "--oracle", "--data", data_dir.string(), "--out", (oracle_dir / "eval.json").string()});
    REQUIRE(orc.code == cli::kExitOk);
    const json orec = json::parse(data::read_file((oracle_dir / "eval.json").string()));
    CHECK(orec.at("SR") == "100.0");
    CHECK(orec.at("SPL") == "100.0");

    const fs::path csv = scratch("report.csv");
    const Result rp = tggat_run({"report", "--runs", run.string(), oracle_dir.string(), run.string(), "--out", csv.string()});
    REQUIRE(rp.code == cli::kExitOk);
    std::istringstream lines(data::read_file(csv.string()));
    std::vector<std::string> rows;
    for (std::string l; std::getline(lines, l);) rows.push_back(l);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "run,SPL,SR,GP");
    CHECK(rows[1] == run.string() + "," + rec.at("SPL").get<std::string>() + "," + rec.at("SR").get<std::string>() + "," +
                         rec.at("GP").get<std::string>());
    CHECK(rows[2] == oracle_dir.string() + ",100.0,100.0," + orec.at("GP").get<std::string>());
    CHECK(rows[1] == rows[3]);
  }

  SUBCASE("a checkpoint that does not match the data is a compatibility error") {
    const fs::path other = scratch("e2e_other");
    REQUIRE(tggat_run({"gen", "--worlds", "1", "--episodes", "2", "--seed", "3", "--out", other.string()}).code == 0);
    data::write_file((other / "vocab.txt").string(), data::read_file((other / "vocab.txt").string()) + "zebra\n");
    CHECK(tggat_run({"eval", "--checkpoint", (run / "best.ckpt").string(), "--data", other.string(), "--out",
                     (other / "eval.json").string()})
              .code == cli::kExitCompatibility);
  }

  SUBCASE("a non-finite loss exits with the numeric code and leaves a diagnostic dump") {
    ckpt::Checkpoint bad = ckpt::load((run / "last.ckpt").string());
    for (ckpt::Record& rec : bad.params) {
      if (rec.name == "head.action.fc1.bias") rec.value(0, 0) = std::nan("");
    }
    ckpt::save(bad, (run / "nan.ckpt").string());
    data::write_file(cfg.string(), std::string(kTinyConfig) + "max_iterations = 6\n");
    const fs::path out = scratch("e2e_nan");
    tr = tggat_run({"train", "--config", cfg.string(), "--data", data_dir.string(), "--out", out.string(), "--resume",
                    (run / "nan.ckpt").string()});
    CHECK(tr.code == cli::kExitNumeric);
    CHECK(fs::exists(out / "diagnostic.json"));
  }
}

TEST_CASE("eval and report input errors") {
  const fs::path d = scratch("empty_data");
  REQUIRE(tggat_run({"gen", "--worlds", "1", "--episodes", "2", "--out", d.string()}).code == 0);
  data::write_file((d / "episodes.jsonl").string(), "");
  CHECK(tggat_run({"eval", "--oracle", "--data", d.string(), "--out", (d / "e.json").string()}).code == cli::kExitUsage);
  CHECK(tggat_run({"eval", "--data", d.string(), "--out", (d / "e.json").string()}).code == cli::kExitUsage);
  CHECK(tggat_run({"eval", "--oracle", "--data", "/nonexistent", "--out", (d / "e.json").string()}).code == cli::kExitIo);
  CHECK(tggat_run({"report", "--runs", "/nonexistent/run", "--out", (d / "r.csv").string()}).code == cli::kExitIo);
}

TEST_CASE("gradcheck passes on a fresh model and fails on a corrupted gradient") {
  const Result ok = tggat_run({"gradcheck", "--seed", "3"});
  CHECK(ok.code == cli::kExitOk);
  for (const char* name : {"MHCA", "GAT", "action", "grounding", "attention", "L_l1", "L_giou", "L_bce", "L_gr", "L_nav",
                           "L_hap", "L_sum"}) {
    CHECK(ok.out.find(std::string(name) + " ") != std::string::npos);
  }
  const Result bad = tggat_run({"gradcheck", "--seed", "3", "--corrupt", "L_sum"});
  CHECK(bad.code == cli::kExitGradcheck);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("the installed binary returns the documented exit codes") {
  const std::string bin = TGGAT_CLI_PATH;
  const auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status(bin + " --help") == 0);
  CHECK(status(bin + " gen --worlds 0 --episodes 1 --out " + scratch("bin").string()) == 64);
  CHECK(status(bin + " report --runs /nonexistent --out " + scratch("bin.csv").string()) == 2);
}
