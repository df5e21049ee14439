#include "tggat/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tggat/checkpoint.hpp"
#include "tggat/dataset.hpp"
#include "tggat/seeding.hpp"
#include "tggat/trainer.hpp"

namespace tggat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_manifest(RunManifest& m, const std::string& path, const Stopwatch& clock) {
  for (const std::string& o : m.outputs) m.hashes[o] = hash_file(o);
  m.duration_s = clock.seconds();
  data::write_file(path, m.to_json().dump(2) + "\n");
}

// Runs `body`, mapping exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const VocabularyError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const CompatibilityError& e) {
    err << "incompatible input: " << e.what() << "\n";
    return kExitCompatibility;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Metric columns in reporting order: SPL, SR (percent), GP (meters).
std::array<std::string, 3> metric_cells(const geo::MetricReport& m) {
  return {format_metric(100.0 * m.spl), format_metric(100.0 * m.sr), format_metric(m.gp)};
}

void print_table(std::ostream& out, const std::string& first_header, const std::vector<std::string>& labels,
                 const std::vector<std::array<std::string, 3>>& rows) {
  std::size_t w = first_header.size();
  for (const std::string& l : labels) w = std::max(w, l.size());
  out << pad(first_header, w + 2) << pad("SPL", 8) << pad("SR", 8) << "GP\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << pad(labels[i], w + 2) << pad(rows[i][0], 8) << pad(rows[i][1], 8) << rows[i][2] << "\n";
  }
}

void check_model_matches_data(const ckpt::Checkpoint& ck, const data::Dataset& ds) {
  const enc::Vocabulary vocab = enc::Vocabulary::from_lines(ck.vocab);
  if (!(vocab == ds.vocab)) throw CompatibilityError("checkpoint vocabulary differs from the dataset vocabulary");
  const gat::ModelConfig expected = train::model_config_for(ck.config, ds.vocab, ds.meta.env);
  const gat::ModelConfig& m = ck.config.model;
  if (m.grid != expected.grid || m.channels != expected.channels || m.max_steps < expected.max_steps ||
      m.max_step_m != expected.max_step_m) {
    throw CompatibilityError("checkpoint was trained for a different observation grid or action scale");
  }
}

// Default validation split: episodes of the last tenth of the worlds.
std::pair<data::Dataset, data::Dataset> split_by_world(const data::Dataset& ds) {
  const int n = ds.meta.n_worlds;
  const int held = n >= 2 ? std::max(1, n / 10) : 0;
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    (ds.episodes[i].world_index >= n - held ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) std::swap(train_idx, val_idx);
  return {data::subset(ds, train_idx), data::subset(ds, val_idx)};
}

}  // namespace

// --- manifest ---------------------------------------------------------------------

json RunManifest::to_json() const {
  return json{{"command", command}, {"config", config},     {"seeds", seeds},          {"inputs", inputs},
              {"outputs", outputs}, {"hashes", hashes},     {"duration_s", duration_s}};
}

std::string hash_file(const std::string& path) {
  const std::string bytes = data::read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", value);
  return buf;
}

// --- gen --------------------------------------------------------------------------------

int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Stopwatch clock;
    if (opt.worlds < 1) throw UsageError("--worlds must be at least 1");
    if (opt.episodes < 1) throw UsageError("--episodes must be at least 1");
    if (opt.out.empty()) throw UsageError("--out is required");
    const data::Dataset ds = data::generate_dataset(opt.worlds, opt.episodes, opt.seed, opt.paraphrase, opt.augment);
    RunManifest m;
    m.command = "gen";
    m.config = {{"worlds", opt.worlds},
                {"episodes", opt.episodes},
                {"paraphrase", opt.paraphrase},
                {"augment", opt.augment},
                {"world", train::to_json(ds.meta.world)},
                {"env", train::to_json(ds.meta.env)}};
    m.seeds = {{"seed", opt.seed}};
    for (const std::string& rel : data::write_dataset(ds, opt.out)) m.outputs.push_back(join(opt.out, rel));
    write_manifest(m, join(opt.out, "manifest.json"), clock);
    out << "wrote " << ds.worlds.size() << " worlds and " << ds.episodes.size() << " episodes to " << opt.out << "\n";
    return int(kExitOk);
  });
}

// --- train ---------------------------------------------------------------------------------

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Stopwatch clock;
    if (opt.data.empty() || opt.out.empty()) throw UsageError("--data and --out are required");
    const train::TrainConfig cfg = opt.config.empty() ? train::desk_profile() : train::load_config(opt.config);
    const data::Dataset all = data::read_dataset(opt.data);
    if (all.episodes.empty()) throw UsageError("training dataset has no episodes");

    data::Dataset train_set, val_set;
    if (opt.val.empty()) {
      std::tie(train_set, val_set) = split_by_world(all);
    } else {
      train_set = all;
      val_set = data::read_dataset(opt.val);
      if (!(val_set.vocab == train_set.vocab)) throw CompatibilityError("validation vocabulary differs");
    }
    const bool has_val = !val_set.episodes.empty();

    std::error_code ec;
    fs::create_directories(opt.out, ec);
    if (ec) throw IoError("cannot create " + opt.out + ": " + ec.message());

    train::Trainer trainer(cfg, train_set, has_val ? &val_set : nullptr);
    if (!opt.resume.empty()) {
      const ckpt::Checkpoint ck = ckpt::load(opt.resume);
      if (!(enc::Vocabulary::from_lines(ck.vocab) == train_set.vocab)) {
        throw CompatibilityError("resume checkpoint vocabulary differs from the dataset");
      }
      ckpt::restore_trainer(ck, trainer);
    }

    const std::string best_path = join(opt.out, "best.ckpt");
    const std::string last_path = join(opt.out, "last.ckpt");
    const std::string metrics_path = join(opt.out, "metrics.jsonl");
    std::ofstream metrics(metrics_path, opt.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot write " + metrics_path);

    bool wrote_best = false;
    train::IterationStats last_stats;
    try {
      trainer.run(
          [&](const train::IterationStats& s) {
            last_stats = s;
            if (opt.verbose && (s.iteration % 50 == 0 || s.iteration == 1)) {
              out << "iter " << s.iteration << (s.teacher ? " teacher" : " student") << " loss " << s.loss << "\n";
            }
          },
          [&](const train::EvalRecord& rec, bool improved) {
            metrics << train::to_json(rec).dump() << "\n";
            metrics.flush();
            out << "eval @" << rec.iteration << "  SPL " << format_metric(100.0 * rec.metrics.spl) << "  SR "
                << format_metric(100.0 * rec.metrics.sr) << "  GP " << format_metric(rec.metrics.gp) << "\n";
            if (improved) {
              ckpt::save(ckpt::capture(trainer, train_set.vocab), best_path);
              wrote_best = true;
            }
          });
    } catch (const NumericError& e) {
      const json dump{{"error", e.what()},
                      {"iteration", trainer.iteration()},
                      {"last_loss", last_stats.loss},
                      {"last_grad_norm", last_stats.grad_norm},
                      {"config", train::to_json(trainer.config())}};
      data::write_file(join(opt.out, "diagnostic.json"), dump.dump(2) + "\n");
      ckpt::save(ckpt::capture(trainer, train_set.vocab), join(opt.out, "diagnostic.ckpt"));
      throw;
    }
    metrics.close();

    const ckpt::Checkpoint last = ckpt::capture(trainer, train_set.vocab);
    ckpt::save(last, last_path);
    if (!wrote_best) ckpt::save(last, best_path);

    RunManifest m;
    m.command = "train";
    m.config = train::to_json(trainer.config());
    m.seeds = {{"seed", trainer.config().seed}};
    m.inputs = {opt.data};
    if (!opt.config.empty()) m.inputs.push_back(opt.config);
    if (!opt.val.empty()) m.inputs.push_back(opt.val);
    if (!opt.resume.empty()) m.inputs.push_back(opt.resume);
    m.outputs = {best_path, last_path, metrics_path};
    write_manifest(m, join(opt.out, "manifest.json"), clock);
    out << "trained to iteration " << trainer.iteration() << "; checkpoints in " << opt.out << "\n";
    return int(kExitOk);
  });
}

// --- eval -----------------------------------------------------------------------------------

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Stopwatch clock;
    if (opt.data.empty() || opt.out.empty()) throw UsageError("--data and --out are required");
    if (opt.policy == EvalPolicy::Model && opt.checkpoint.empty()) {
      throw UsageError("--checkpoint is required unless --oracle or --random is given");
    }
    const data::Dataset ds = data::read_dataset(opt.data);
    if (ds.episodes.empty()) throw UsageError("evaluation dataset has no episodes");

    geo::MetricReport report;
    std::string policy_name;
    json config = json::object();
    if (opt.policy == EvalPolicy::Model) {
      const ckpt::Checkpoint ck = ckpt::load(opt.checkpoint);
      check_model_matches_data(ck, ds);
      const auto model = ckpt::load_model(ck);
      train::ModelPolicy policy(*model, ds.vocab, ds.meta.env);
      report = train::evaluate(policy, ds);
      policy_name = "model";
      config = train::to_json(ck.config);
    } else if (opt.policy == EvalPolicy::Oracle) {
      train::OraclePolicy policy(ds.meta.env);
      report = train::evaluate(policy, ds);
      policy_name = "oracle";
    } else {
      train::RandomPolicy policy(ds.meta.env, opt.seed);
      report = train::evaluate(policy, ds);
      policy_name = "random";
    }

    print_table(out, "policy", {policy_name}, {metric_cells(report)});
    const json record{{"policy", policy_name},
                      {"checkpoint", opt.checkpoint},
                      {"data", opt.data},
                      {"n_episodes", report.n_episodes},
                      {"metrics", train::to_json(report)},
                      {"SPL", format_metric(100.0 * report.spl)},
                      {"SR", format_metric(100.0 * report.sr)},
                      {"GP", format_metric(report.gp)}};
    data::write_file(opt.out, record.dump(2) + "\n");

    RunManifest m;
    m.command = "eval";
    m.config = {{"policy", policy_name}, {"model", config}, {"env", train::to_json(ds.meta.env)}};
    m.seeds = {{"seed", opt.seed}, {"dataset_seed", ds.meta.seed}};
    m.inputs = {opt.data};
    if (!opt.checkpoint.empty()) m.inputs.push_back(opt.checkpoint);
    m.outputs = {opt.out};
    write_manifest(m, opt.out + ".manifest.json", clock);
    return int(kExitOk);
  });
}

// --- gradcheck ---------------------------------------------------------------------------

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  using nx::Var;
  env::EnvConfig ecfg;
  ecfg.grid = 4;
  ecfg.min_moves = 1;
  ecfg.max_moves = 1;
  const env::World world = env::generate_world(seed);
  const env::Episode ep = env::generate_episode(world, mix_seed(seed, 1), ecfg);
  const enc::Vocabulary vocab = env::build_vocabulary();

  gat::ModelConfig mc;
  mc.d_model = 8;
  mc.heads = 2;
  mc.text_layers = 1;
  mc.mhca_layers = 1;
  mc.gat_layers = 1;
  mc.ffn_mult = 2;
  mc.vocab_size = static_cast<nx::Index>(vocab.size());
  mc.grid = ecfg.grid;
  mc.channels = env::kChannels;
  mc.max_steps = ecfg.max_steps;
  mc.max_step_m = ecfg.max_step_m;
  gat::TgGatModel model(mc, seed);

  // Nonzero distance bias so the GAT check covers the w_e / b_e path.
  const auto& layer0 = model.gat_layers().front();
  Var(layer0.w_e).mutable_value() << 0.02, -0.015;
  Var(layer0.b_e).mutable_value() << 0.3, -0.2;

  const enc::TokenSequence tokens = train::episode_tokens(ep, vocab, mc.max_text_len);
  std::vector<env::RenderResult> renders;
  for (const geo::DroneState& s : ep.trajectory.states) renders.push_back(env::render_observation(world, s, ep.target_landmark, ecfg));
  const loss::LossWeights weights;

  struct Pass {
    Var text, pooled_first, features;
    gat::FusedTokens fused;
    nx::Matrix distances;
    gat::ForwardOutput fwd;
  };
  auto full_pass = [&] {
    Pass p;
    p.text = model.encode_text(tokens);
    gat::MemoryBuffer buffer(mc.max_steps);
    for (std::size_t t = 0; t < renders.size(); ++t) {
      p.features = model.featurize(renders[t].observation);
      const Var pooled = model.pool(nx::slice_rows(p.text, 0, 1), p.features);
      if (t == 0) p.pooled_first = pooled;
      buffer.append(pooled, model.encode_direction(ep.trajectory.states[t].heading),
                    ep.trajectory.states[t].position.planar());
    }
    p.fused = model.fuse(p.text, tokens.valid, buffer);
    const std::vector<geo::Vec2> locs = buffer.locations();
    p.distances = gat::tile_history_distances(geo::pairwise_distance_matrix(std::span<const geo::Vec2>(locs)));
    p.fwd = model.forward(p.text, tokens.valid, buffer, p.features);
    return p;
  };

  nx::Rng rng(mix_seed(seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_matrix = [&](nx::Index r, nx::Index c) {
    nx::Matrix m(r, c);
    for (nx::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  // Random unit-variance readout scaled so f stays O(1) regardless of size.
  auto project = [](const Var& v, const nx::Matrix& r) {
    return nx::scale(nx::sum(nx::mul(v, Var::constant(r))), 1.0 / std::sqrt(static_cast<double>(r.size())));
  };

  const std::size_t last = renders.size() - 1;
  const loss::GroundingTarget final_target = renders[last].target;
  const geo::Action oracle = env::oracle_action(ep.trajectory.states[last], ep.trajectory, ecfg);
  const nx::Matrix r_pool = random_matrix(1, mc.d_model);
  const nx::Index n_tokens = tokens.valid + 2 * static_cast<nx::Index>(renders.size());
  const nx::Matrix r_gat = random_matrix(n_tokens, mc.d_model);
  const nx::Matrix r_disp = random_matrix(1, 3);
  const nx::Matrix r_box = random_matrix(1, 4);
  const nx::Matrix r_map = random_matrix(mc.grid, mc.grid);
  const double r_scalar = normal(rng);

  struct Component {
    std::string name;
    std::vector<std::string> prefixes;
    std::function<Var()> f;
  };
  const std::vector<Component> components = {
      {"MHCA", {"mhca."}, [&] { return project(full_pass().pooled_first, r_pool); }},
      {"GAT",
       {"gat.layer0."},
       [&] {
         const Pass p = full_pass();
         return project(model.gat_layers().front()(p.fused, p.distances).embeddings, r_gat);
       }},
      {"action",
       {"head.action."},
       [&] {
         const gat::ActionPrediction a = model.predict_action(full_pass().fwd.direction_token);
         return nx::scale(project(a.displacement, r_disp), 1.0 / mc.max_step_m) + nx::scale(a.stop_prob, r_scalar);
       }},
      {"grounding",
       {"head.grounding."},
       [&] {
         const gat::GroundingPrediction g = model.predict_grounding(full_pass().fwd.image_token);
         return project(g.box, r_box) + nx::scale(g.confidence, r_scalar);
       }},
      {"attention",
       {"head.attention."},
       [&] {
         const Pass p = full_pass();
         return project(model.predict_human_attention(p.fwd.image_token, p.fwd.grid_features).probs, r_map);
       }},
      {"L_l1",
       {"head.grounding."},
       [&] { return loss::smooth_l1(model.predict_grounding(full_pass().fwd.image_token).box, final_target.box); }},
      {"L_giou",
       {"head.grounding."},
       [&] { return loss::giou_loss(model.predict_grounding(full_pass().fwd.image_token).box, final_target.box); }},
      {"L_bce",
       {"head.grounding."},
       [&] {
         return loss::bce(model.predict_grounding(full_pass().fwd.image_token).confidence,
                          static_cast<double>(final_target.c));
       }},
      {"L_gr",
       {"head.grounding.", "gat.final_ln."},
       [&] {
         return loss::grounding_loss(model.predict_grounding(full_pass().fwd.image_token), final_target, weights).total;
       }},
      {"L_nav",
       {"head.action.", "direction."},
       [&] { return loss::nav_loss(model.predict_action(full_pass().fwd.direction_token), oracle, mc.max_step_m); }},
      {"L_hap",
       {"head.attention.", "observation."},
       [&] {
         const Pass p = full_pass();
         return loss::hap_loss(model.predict_human_attention(p.fwd.image_token, p.fwd.grid_features),
                               renders[last].attention);
       }},
      {"L_sum",
       {""},
       [&] {
         const train::EpisodeContext ctx{model, world, ep, vocab, ecfg, weights, nullptr};
         return train::teacher_force_episode(ctx).total;
       }},
  };

  std::vector<GradcheckEntry> out;
  for (const Component& c : components) {
    std::vector<Var> params;
    std::vector<std::string> names;
    for (const nx::Parameter& p : model.params().all()) {
      for (const std::string& prefix : c.prefixes) {
        if (p.name.rfind(prefix, 0) == 0) {
          params.push_back(p.value);
          names.push_back(p.name);
          break;
        }
      }
    }
    if (params.empty()) throw UsageError("gradcheck: no parameters for component " + c.name);
    std::function<Var()> f = c.f;
    if (c.name == corrupt) {
      // Same value, gradient offset by 0.1 on the first parameter.
      const Var p0 = params.front();
      f = [base = c.f, p0] { return base() + nx::scale(nx::sum(nx::sub(p0, nx::detach(p0))), 0.1); };
    }
    model.params().zero_grad();
    const nx::FiniteDiffResult r = nx::finite_diff_check(f, params, 1e-5);
    out.push_back(GradcheckEntry{c.name, r, names[r.worst_param] + "[" + std::to_string(r.worst_entry) + "]"});
  }
  return out;
}

int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Stopwatch clock;
    const std::vector<GradcheckEntry> entries = run_gradcheck(opt.seed, opt.corrupt);
    if (!opt.corrupt.empty()) {
      const bool known = std::any_of(entries.begin(), entries.end(),
                                     [&](const GradcheckEntry& e) { return e.component == opt.corrupt; });
      if (!known) throw UsageError("--corrupt names an unknown component: " + opt.corrupt);
    }
    bool ok = true;
    json report = json::array();
    for (const GradcheckEntry& e : entries) {
      const bool pass = e.result.max_rel_error < kGradcheckTolerance;
      ok = ok && pass;
      out << pad(e.component, 11) << "max rel error " << sci(e.result.max_rel_error) << "  worst " << e.worst_param
          << "  " << (pass ? "PASS" : "FAIL") << "\n";
      report.push_back({{"component", e.component},
                        {"max_rel_error", e.result.max_rel_error},
                        {"worst_param", e.worst_param},
                        {"analytic", e.result.analytic},
                        {"numeric", e.result.numeric},
                        {"pass", pass}});
      if (!pass) err << "gradient mismatch in " << e.component << " at " << e.worst_param << "\n";
    }

    RunManifest m;
    m.command = "gradcheck";
    m.config = {{"eps", 1e-5}, {"tolerance", kGradcheckTolerance}, {"corrupt", opt.corrupt}};
    m.seeds = {{"seed", opt.seed}};
    if (!opt.out.empty()) {
      data::write_file(opt.out, json{{"components", report}, {"pass", ok}}.dump(2) + "\n");
      m.outputs = {opt.out};
      write_manifest(m, opt.out + ".manifest.json", clock);
    } else {
      m.duration_s = clock.seconds();
      err << m.to_json().dump() << "\n";
    }
    return ok ? int(kExitOk) : int(kExitGradcheck);
  });
}

// --- report --------------------------------------------------------------------------------

int cmd_report(const ReportOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Stopwatch clock;
    if (opt.runs.empty() || opt.out.empty()) throw UsageError("--runs and --out are required");
    std::vector<std::array<std::string, 3>> rows;
    RunManifest m;
    m.command = "report";
    for (const std::string& dir : opt.runs) {
      const fs::path eval_path = fs::path(dir) / "eval.json";
      const fs::path metrics_path = fs::path(dir) / "metrics.jsonl";
      geo::MetricReport metrics;
      try {
        if (fs::exists(eval_path)) {
          const json j = json::parse(data::read_file(eval_path.string()));
          metrics.sr = j.at("metrics").at("sr");
          metrics.spl = j.at("metrics").at("spl");
          metrics.gp = j.at("metrics").at("gp");
          m.inputs.push_back(eval_path.string());
        } else if (fs::exists(metrics_path)) {
          std::istringstream lines(data::read_file(metrics_path.string()));
          std::string line, lastline;
          while (std::getline(lines, line)) {
            if (!line.empty()) lastline = line;
          }
          if (lastline.empty()) throw IoError(metrics_path.string() + " holds no records");
          metrics = train::eval_record_from_json(json::parse(lastline)).metrics;
          m.inputs.push_back(metrics_path.string());
        } else {
          throw IoError("no eval.json or metrics.jsonl in " + dir);
        }
      } catch (const json::exception& e) {
        throw IoError("malformed metrics in " + dir + ": " + e.what());
      }
      rows.push_back(metric_cells(metrics));
    }

    print_table(out, "run", opt.runs, rows);
    std::string csv = "run,SPL,SR,GP\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      csv += opt.runs[i] + "," + rows[i][0] + "," + rows[i][1] + "," + rows[i][2] + "\n";
    }
    data::write_file(opt.out, csv);
    m.outputs = {opt.out};
    write_manifest(m, opt.out + ".manifest.json", clock);
    return int(kExitOk);
  });
}

// --- argument parsing -------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dialog-guided aerial navigation: data generation, training and evaluation", "tggat"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate worlds and episodes");
  g->add_option("--worlds", gen.worlds, "Number of worlds")->required();
  g->add_option("--episodes", gen.episodes, "Number of base episodes")->required();
  g->add_option("--seed", gen.seed, "Generation seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_flag("--paraphrase", gen.paraphrase, "Add five paraphrased copies of every episode");
  g->add_flag("--augment", gen.augment, "Mark the dataset for image augmentation during training");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "Config file (key = value)");
  t->add_option("--data", tr.data, "Training dataset directory")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--val", tr.val, "Validation dataset directory");
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");
  t->add_flag("--verbose", tr.verbose, "Print training loss periodically");

  EvalOptions ev;
  bool oracle = false, random = false;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or a reference policy");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Output JSON record")->required();
  auto* oracle_flag = e->add_flag("--oracle", oracle, "Follow the oracle instead of a model");
  auto* random_flag = e->add_flag("--random", random, "Act uniformly at random");
  oracle_flag->excludes(random_flag);
  e->add_option("--seed", ev.seed, "Seed for --random");

  GradcheckOptions gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  c->add_option("--seed", gc.seed, "Seed");
  c->add_option("--out", gc.out, "Output JSON report");
  c->add_option("--corrupt", gc.corrupt, "Inject a gradient error into one component (test hook)");

  ReportOptions rp;
  auto* r = app.add_subcommand("report", "Tabulate evaluation results of several runs");
  r->add_option("--runs", rp.runs, "Run directories")->required()->expected(1, -1);
  r->add_option("--out", rp.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? int(kExitOk) : int(kExitUsage);
  }

  if (g->parsed()) return cmd_gen(gen, out, err);
  if (t->parsed()) return cmd_train(tr, out, err);
  if (e->parsed()) {
    ev.policy = oracle ? EvalPolicy::Oracle : random ? EvalPolicy::Random : EvalPolicy::Model;
    return cmd_eval(ev, out, err);
  }
  if (c->parsed()) return cmd_gradcheck(gc, out, err);
  return cmd_report(rp, out, err);
}

}  // namespace tggat::cli
