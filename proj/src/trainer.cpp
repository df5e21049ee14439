#include "tggat/trainer.hpp"

#include <cmath>
#include <numbers>

#include "tggat/seeding.hpp"

namespace tggat::train {
namespace {

struct StepOutputs {
  gat::ActionPrediction action;
  gat::GroundingPrediction grounding;
  gat::AttentionMapPrediction attention;
  env::RenderResult render;
};

// Renders the state, appends it to the memory and runs every head.
StepOutputs run_step(const gat::TgGatModel& model, const Var& text, nx::Index text_valid, gat::MemoryBuffer& buffer,
                     const env::World& world, const geo::DroneState& state, int target, const env::EnvConfig& env,
                     const Augmentation* aug) {
  StepOutputs out;
  out.render = env::render_observation(world, state, target, env);
  const enc::ObservationGrid obs =
      aug ? env::augment_observation(out.render.observation, aug->cfg, aug->seed) : out.render.observation;
  const Var features = model.featurize(obs);
  const Var pooled = model.pool(nx::slice_rows(text, 0, 1), features);
  buffer.append(pooled, model.encode_direction(state.heading), state.position.planar());
  const gat::ForwardOutput fwd = model.forward(text, text_valid, buffer, features);
  out.action = model.predict_action(fwd.direction_token);
  out.grounding = model.predict_grounding(fwd.image_token);
  out.attention = model.predict_human_attention(fwd.image_token, fwd.grid_features);
  return out;
}

struct Supervision {
  geo::Action oracle;
  loss::GroundingTarget grounding;
  const Matrix* mask;
};

Var step_loss(const StepOutputs& s, const Supervision& sup, const EpisodeContext& ctx, StepLoss& record) {
  const Var nav = loss::nav_loss(s.action, sup.oracle, ctx.env.max_step_m);
  const Var hap = loss::hap_loss(s.attention, *sup.mask);
  const Var gr = loss::grounding_loss(s.grounding, sup.grounding, ctx.weights).total;
  const Var total = loss::total_loss(nav, hap, gr, ctx.weights);
  record = StepLoss{nav.item(), hap.item(), gr.item(), total.item(), sup.oracle.stop};
  return total;
}

Var mean_of(const std::vector<Var>& terms) {
  Var sum = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) sum = nx::add(sum, terms[i]);
  return nx::scale(sum, 1.0 / static_cast<double>(terms.size()));
}

int step_budget(const EpisodeContext& ctx) { return std::min(ctx.env.max_steps, ctx.model.config().max_steps); }

}  // namespace

gat::ModelConfig model_config_for(const TrainConfig& cfg, const enc::Vocabulary& vocab, const env::EnvConfig& env) {
  gat::ModelConfig m = cfg.model;
  m.vocab_size = static_cast<nx::Index>(vocab.size());
  m.grid = env.grid;
  m.channels = env::kChannels;
  m.max_steps = env.max_steps;
  m.max_step_m = env.max_step_m;
  return m;
}

enc::TokenSequence episode_tokens(const env::Episode& ep, const enc::Vocabulary& vocab, nx::Index max_len) {
  enc::TokenSequence seq = enc::tokenize(ep.current, ep.history, vocab, max_len);
  seq.ids.resize(static_cast<std::size_t>(seq.valid));
  return seq;
}

EpisodeLoss teacher_force_episode(const EpisodeContext& ctx) {
  const env::Episode& ep = ctx.episode;
  const enc::TokenSequence tokens = episode_tokens(ep, ctx.vocab, ctx.model.config().max_text_len);
  const Var text = ctx.model.encode_text(tokens);
  gat::MemoryBuffer buffer(ctx.model.config().max_steps);

  EpisodeLoss out;
  const auto n = static_cast<std::size_t>(std::min<int>(static_cast<int>(ep.trajectory.states.size()), step_budget(ctx)));
  out.truncated = n < ep.trajectory.states.size();
  const bool stored_labels = ep.grounding.size() == ep.trajectory.size() && ep.attention.size() == ep.trajectory.size();
  std::vector<Var> terms;
  for (std::size_t t = 0; t < n; ++t) {
    const geo::DroneState& state = ep.trajectory.states[t];
    const StepOutputs s =
        run_step(ctx.model, text, tokens.valid, buffer, ctx.world, state, ep.target_landmark, ctx.env, ctx.augmentation);
    Supervision sup{env::oracle_action(state, ep.trajectory, ctx.env),
                    stored_labels ? ep.grounding[t] : s.render.target,
                    stored_labels ? &ep.attention[t] : &s.render.attention};
    out.steps.emplace_back();
    terms.push_back(step_loss(s, sup, ctx, out.steps.back()));
  }
  out.total = mean_of(terms);
  return out;
}

StudentResult student_force_episode(const EpisodeContext& ctx) {
  const env::Episode& ep = ctx.episode;
  const enc::TokenSequence tokens = episode_tokens(ep, ctx.vocab, ctx.model.config().max_text_len);
  const Var text = ctx.model.encode_text(tokens);
  gat::MemoryBuffer buffer(ctx.model.config().max_steps);

  StudentResult out;
  geo::DroneState state = ep.trajectory.states.front();
  out.rollout.states.push_back(state);
  out.rollout.areas.push_back(geo::view_area_from_state(state, ctx.env.fov));
  std::vector<Var> terms;
  const int budget = step_budget(ctx);
  for (int t = 0; t < budget; ++t) {
    const StepOutputs s =
        run_step(ctx.model, text, tokens.valid, buffer, ctx.world, state, ep.target_landmark, ctx.env, ctx.augmentation);
    const Supervision sup{env::oracle_action(state, ep.trajectory, ctx.env), s.render.target, &s.render.attention};
    out.loss.steps.emplace_back();
    terms.push_back(step_loss(s, sup, ctx, out.loss.steps.back()));

    const geo::Action act = s.action.to_action();
    if (act.stop || t + 1 == budget) break;
    state = apply_action(state, act, ctx.env);
    out.rollout.states.push_back(state);
    out.rollout.areas.push_back(geo::view_area_from_state(state, ctx.env.fov));
    if (!ctx.world.contains(state.position.planar())) {
      out.aborted = true;
      break;
    }
  }
  out.loss.total = mean_of(terms);
  return out;
}

// --- policies and evaluation ---------------------------------------------------------

ModelPolicy::ModelPolicy(const gat::TgGatModel& model, const enc::Vocabulary& vocab, const env::EnvConfig& env)
    : model_(model), vocab_(vocab), env_(env) {}

void ModelPolicy::begin(const env::World& world, const env::Episode& ep) {
  nx::NoGradGuard no_grad;
  world_ = &world;
  target_ = ep.target_landmark;
  const enc::TokenSequence tokens = episode_tokens(ep, vocab_, model_.config().max_text_len);
  text_ = model_.encode_text(tokens);
  text_valid_ = tokens.valid;
  buffer_ = std::make_unique<gat::MemoryBuffer>(model_.config().max_steps);
}

geo::Action ModelPolicy::act(const geo::DroneState& state) {
  nx::NoGradGuard no_grad;
  const env::RenderResult render = env::render_observation(*world_, state, target_, env_);
  const Var features = model_.featurize(render.observation);
  const Var pooled = model_.pool(nx::slice_rows(text_, 0, 1), features);
  buffer_->append(pooled, model_.encode_direction(state.heading), state.position.planar());
  const gat::ForwardOutput fwd = model_.forward(text_, text_valid_, *buffer_, features);
  return model_.predict_action(fwd.direction_token).to_action();
}

void RandomPolicy::begin(const env::World&, const env::Episode& ep) {
  rng_.seed(mix_seed(seed_, ep.seed + static_cast<std::uint64_t>(ep.variant)));
}

geo::Action RandomPolicy::act(const geo::DroneState&) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  geo::Action a;
  if (unit(rng_) < stop_prob_) {
    a.stop = true;
    return a;
  }
  const double angle = 2.0 * std::numbers::pi * unit(rng_);
  const double magnitude = env_.max_step_m * unit(rng_);
  a.dx = magnitude * std::cos(angle);
  a.dy = magnitude * std::sin(angle);
  return a;
}

geo::EpisodeOutcome rollout(Policy& policy, const env::World& world, const env::Episode& ep,
                            const env::EnvConfig& env) {
  geo::EpisodeOutcome out;
  out.ground_truth = ep.trajectory;
  policy.begin(world, ep);
  geo::DroneState state = ep.trajectory.states.front();
  out.predicted.states.push_back(state);
  out.predicted.areas.push_back(geo::view_area_from_state(state, env.fov));
  for (int t = 0; t < env.max_steps; ++t) {
    const geo::Action a = policy.act(state);
    if (a.stop || t + 1 == env.max_steps) break;
    state = apply_action(state, a, env);
    out.predicted.states.push_back(state);
    out.predicted.areas.push_back(geo::view_area_from_state(state, env.fov));
    if (!world.contains(state.position.planar())) {
      out.aborted = true;
      break;
    }
  }
  return out;
}

geo::MetricReport evaluate(Policy& policy, const data::Dataset& ds, std::size_t max_episodes) {
  const std::size_t n = std::min(max_episodes, ds.episodes.size());
  if (n == 0) throw UsageError("evaluate: no episodes");
  std::vector<geo::EpisodeOutcome> outcomes;
  outcomes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const env::Episode& ep = ds.episodes[i];
    outcomes.push_back(rollout(policy, ds.world_of(ep), ep, ds.meta.env));
  }
  return geo::compute_metrics(outcomes);
}

// --- AdamW -----------------------------------------------------------------------------

AdamW::AdamW(nx::ParameterStore& store, double lr, double weight_decay, double beta1, double beta2, double eps)
    : store_(store), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const nx::Parameter& p : store_.all()) {
    if (!p.trainable) continue;
    m_[p.name] = Matrix::Zero(p.value.rows(), p.value.cols());
    v_[p.name] = Matrix::Zero(p.value.rows(), p.value.cols());
  }
}

double AdamW::step(double clip_norm) {
  double sq = 0.0;
  for (const nx::Parameter& p : store_.all()) {
    if (p.trainable) sq += p.value.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("AdamW: non-finite gradient norm");
  if (norm == 0.0) return 0.0;
  const double clip = clip_norm > 0.0 && norm > clip_norm ? clip_norm / norm : 1.0;

  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (nx::Parameter& p : store_.all()) {
    if (!p.trainable) continue;
    const Matrix g = clip * p.value.grad();
    Matrix& m = m_.at(p.name);
    Matrix& v = v_.at(p.name);
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
    Matrix& w = p.value.mutable_value();
    const Matrix update = (m / c1).array() / ((v / c2).array().sqrt() + eps_);
    w -= lr_ * (update + wd_ * w);
  }
  return norm;
}

// --- Trainer -----------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, const data::Dataset& train_set, const data::Dataset* val_set)
    : cfg_(std::move(cfg)), train_(train_set), val_(val_set) {
  validate(cfg_);
  if (train_.episodes.empty()) throw UsageError("Trainer: training set is empty");
  cfg_.env = train_.meta.env;
  cfg_.model = model_config_for(cfg_, train_.vocab, cfg_.env);
  model_ = std::make_unique<gat::TgGatModel>(cfg_.model, cfg_.seed);
  opt_ = std::make_unique<AdamW>(model_->params(), cfg_.learning_rate, cfg_.weight_decay, cfg_.beta1, cfg_.beta2,
                                 cfg_.adam_eps);
}

IterationStats Trainer::iterate() {
  const int it = iteration_;
  IterationStats stats;
  stats.iteration = it + 1;
  stats.teacher = cfg_.forcing == Forcing::Teacher ||
                  (cfg_.forcing == Forcing::Alternate && (it / cfg_.alternation_period) % 2 == 0);

  const std::uint64_t it_seed = mix_seed(cfg_.seed, static_cast<std::uint64_t>(it));
  nx::Rng rng(it_seed);
  std::uniform_int_distribution<std::size_t> pick(0, train_.episodes.size() - 1);
  model_->params().zero_grad();
  double loss_sum = 0.0;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const env::Episode& ep = train_.episodes[pick(rng)];
    Augmentation aug{cfg_.aug, mix_seed(it_seed, static_cast<std::uint64_t>(b) + 1)};
    const EpisodeContext ctx{*model_,   train_.world_of(ep), ep, train_.vocab, cfg_.env, cfg_.weights,
                             train_.meta.augment ? &aug : nullptr};
    const Var episode_loss = stats.teacher ? teacher_force_episode(ctx).total : student_force_episode(ctx).loss.total;
    const double value = episode_loss.item();
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(it + 1) + " on episode seed " +
                         std::to_string(ep.seed));
    }
    loss_sum += value;
    nx::backward(nx::scale(episode_loss, 1.0 / cfg_.batch_size));
  }
  stats.loss = loss_sum / cfg_.batch_size;
  stats.grad_norm = opt_->step(cfg_.grad_clip);
  iteration_ = it + 1;
  return stats;
}

EvalRecord Trainer::evaluate_now(double last_loss) {
  if (!val_) throw UsageError("Trainer: no validation set");
  ModelPolicy policy(*model_, val_->vocab, val_->meta.env);
  EvalRecord rec;
  rec.iteration = iteration_;
  rec.loss = last_loss;
  rec.metrics = evaluate(policy, *val_, static_cast<std::size_t>(cfg_.eval_episodes));
  return rec;
}

void Trainer::run(const std::function<void(const IterationStats&)>& on_iteration,
                  const std::function<void(const EvalRecord&, bool improved)>& on_eval) {
  while (iteration_ < cfg_.max_iterations) {
    const IterationStats stats = iterate();
    if (on_iteration) on_iteration(stats);
    if (val_ && (iteration_ % cfg_.eval_interval == 0 || iteration_ == cfg_.max_iterations)) {
      const EvalRecord rec = evaluate_now(stats.loss);
      // Ties go to the later checkpoint.
      bool improved = true;
      for (const EvalRecord& r : history_) improved = improved && rec.metrics.spl >= r.metrics.spl;
      history_.push_back(rec);
      if (on_eval) on_eval(rec, improved);
    }
  }
}

// --- serialization helpers -------------------------------------------------------------

nlohmann::json to_json(const geo::MetricReport& m) {
  return {{"sr", m.sr}, {"spl", m.spl}, {"gp", m.gp}, {"n_episodes", m.n_episodes}};
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j = to_json(r.metrics);
  j["iteration"] = r.iteration;
  j["loss"] = r.loss;
  return j;
}

EvalRecord eval_record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.iteration = j.at("iteration");
  r.loss = j.at("loss");
  r.metrics.sr = j.at("sr");
  r.metrics.spl = j.at("spl");
  r.metrics.gp = j.at("gp");
  r.metrics.n_episodes = j.at("n_episodes");
  return r;
}

std::uint64_t parameter_hash(const nx::ParameterStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const nx::Parameter& p : store.all()) {
    feed(p.name.data(), p.name.size());
    const Matrix& v = p.value.value();
    feed(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  return h;
}

}  // namespace tggat::train
