#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tggat/config.hpp"
#include "tggat/dataset.hpp"
#include "tggat/env.hpp"
#include "tggat/losses.hpp"
#include "tggat/model.hpp"

namespace tggat::train {

using env::apply_action;
using nx::Matrix;
using nx::Var;

// Model config matching a dataset's vocabulary and environment.
gat::ModelConfig model_config_for(const TrainConfig& cfg, const enc::Vocabulary& vocab, const env::EnvConfig& env);

// Token ids with the [PAD] tail dropped; padding rows never reach the fused sequence.
enc::TokenSequence episode_tokens(const env::Episode& ep, const enc::Vocabulary& vocab, nx::Index max_len);

struct StepLoss {
  double nav = 0.0;
  double hap = 0.0;
  double gr = 0.0;
  double total = 0.0;
  bool oracle_stop = false;
};

struct EpisodeLoss {
  Var total;  // mean of per-step L_sum
  std::vector<StepLoss> steps;
  bool truncated = false;  // ground truth longer than the model's step budget
};

// Optional image augmentation applied to every rendered observation of an episode.
struct Augmentation {
  env::AugConfig cfg;
  std::uint64_t seed = 0;
};

struct EpisodeContext {
  const gat::TgGatModel& model;
  const env::World& world;
  const env::Episode& episode;
  const enc::Vocabulary& vocab;
  const env::EnvConfig& env;
  const loss::LossWeights& weights;
  const Augmentation* augmentation = nullptr;
};

EpisodeLoss teacher_force_episode(const EpisodeContext& ctx);

struct StudentResult {
  EpisodeLoss loss;
  geo::Trajectory rollout;
  bool aborted = false;  // left the world
};
StudentResult student_force_episode(const EpisodeContext& ctx);

// --- evaluation -----------------------------------------------------------------

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin(const env::World& world, const env::Episode& ep) = 0;
  virtual geo::Action act(const geo::DroneState& state) = 0;
};

// Greedy model rollout on unaugmented observations without gradient recording.
class ModelPolicy : public Policy {
 public:
  ModelPolicy(const gat::TgGatModel& model, const enc::Vocabulary& vocab, const env::EnvConfig& env);
  void begin(const env::World& world, const env::Episode& ep) override;
  geo::Action act(const geo::DroneState& state) override;

 private:
  const gat::TgGatModel& model_;
  const enc::Vocabulary& vocab_;
  const env::EnvConfig& env_;
  const env::World* world_ = nullptr;
  int target_ = -1;
  Var text_;
  nx::Index text_valid_ = 0;
  std::unique_ptr<gat::MemoryBuffer> buffer_;
};

class OraclePolicy : public Policy {
 public:
  explicit OraclePolicy(const env::EnvConfig& env) : env_(env) {}
  void begin(const env::World&, const env::Episode& ep) override { gt_ = &ep.trajectory; }
  geo::Action act(const geo::DroneState& state) override { return env::oracle_action(state, *gt_, env_); }

 private:
  const env::EnvConfig& env_;
  const geo::Trajectory* gt_ = nullptr;
};

// Uniform planar heading, magnitude uniform in [0, max_step], stops with
// probability stop_prob at each step. Seeded per episode.
class RandomPolicy : public Policy {
 public:
  RandomPolicy(const env::EnvConfig& env, std::uint64_t seed, double stop_prob = 0.15)
      : env_(env), seed_(seed), stop_prob_(stop_prob) {}
  void begin(const env::World&, const env::Episode& ep) override;
  geo::Action act(const geo::DroneState& state) override;

 private:
  const env::EnvConfig& env_;
  std::uint64_t seed_;
  double stop_prob_;
  std::mt19937_64 rng_;
};

// Runs the policy from the episode's start state until it stops, the step
// budget (states including the start) is exhausted, or it leaves the world.
geo::EpisodeOutcome rollout(Policy& policy, const env::World& world, const env::Episode& ep,
                            const env::EnvConfig& env);

geo::MetricReport evaluate(Policy& policy, const data::Dataset& ds, std::size_t max_episodes = SIZE_MAX);

// --- optimization -----------------------------------------------------------------

// Adam with decoupled weight decay over every trainable parameter of a store.
class AdamW {
 public:
  AdamW(nx::ParameterStore& store, double lr, double weight_decay, double beta1, double beta2, double eps);

  // Returns the global gradient norm before clipping. A zero gradient skips the
  // update entirely, weight decay included.
  double step(double clip_norm);

  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  std::unordered_map<std::string, Matrix>& first_moments() { return m_; }
  std::unordered_map<std::string, Matrix>& second_moments() { return v_; }
  const std::unordered_map<std::string, Matrix>& first_moments() const { return m_; }
  const std::unordered_map<std::string, Matrix>& second_moments() const { return v_; }

 private:
  nx::ParameterStore& store_;
  double lr_, wd_, b1_, b2_, eps_;
  long long t_ = 0;
  std::unordered_map<std::string, Matrix> m_, v_;
};

struct IterationStats {
  int iteration = 0;  // 1-based index of the iteration just completed
  bool teacher = true;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct EvalRecord {
  int iteration = 0;
  double loss = 0.0;
  geo::MetricReport metrics;
};

class Trainer {
 public:
  // `val` may be null; then no evaluation or best-checkpoint tracking happens.
  Trainer(TrainConfig cfg, const data::Dataset& train_set, const data::Dataset* val_set);

  IterationStats iterate();
  EvalRecord evaluate_now(double last_loss);

  // Runs until max_iterations, evaluating every eval_interval. `on_eval` runs
  // after each evaluation with whether it improved the best SPL.
  void run(const std::function<void(const IterationStats&)>& on_iteration,
           const std::function<void(const EvalRecord&, bool improved)>& on_eval);

  int iteration() const { return iteration_; }
  void set_iteration(int it) { iteration_ = it; }
  const TrainConfig& config() const { return cfg_; }
  gat::TgGatModel& model() { return *model_; }
  const gat::TgGatModel& model() const { return *model_; }
  AdamW& optimizer() { return *opt_; }
  const AdamW& optimizer() const { return *opt_; }
  std::vector<EvalRecord>& history() { return history_; }
  const std::vector<EvalRecord>& history() const { return history_; }

 private:
  TrainConfig cfg_;
  const data::Dataset& train_;
  const data::Dataset* val_;
  std::unique_ptr<gat::TgGatModel> model_;
  std::unique_ptr<AdamW> opt_;
  int iteration_ = 0;
  std::vector<EvalRecord> history_;
};

nlohmann::json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const geo::MetricReport& m);

// Order-sensitive FNV-1a hash over parameter names and raw values.
std::uint64_t parameter_hash(const nx::ParameterStore& store);

}  // namespace tggat::train
