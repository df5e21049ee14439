#include "tggat/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tggat::train {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw UsageError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config: '" + key + "' expects true or false, got '" + v + "'");
}

Forcing parse_forcing(const std::string& v) {
  if (v == "alternate") return Forcing::Alternate;
  if (v == "teacher") return Forcing::Teacher;
  if (v == "student") return Forcing::Student;
  throw UsageError("config: forcing must be alternate, teacher or student");
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto d = [&t](const char* name, auto member) {
      t[name] = [member](TrainConfig& c, const std::string& k, const std::string& v) { member(c) = parse_double(k, v); };
    };
    auto i = [&t](const char* name, auto member) {
      t[name] = [member](TrainConfig& c, const std::string& k, const std::string& v) {
        using T = std::remove_reference_t<decltype(member(c))>;
        member(c) = parse_int<T>(k, v);
      };
    };
    d("learning_rate", [](TrainConfig& c) -> double& { return c.learning_rate; });
    d("weight_decay", [](TrainConfig& c) -> double& { return c.weight_decay; });
    d("beta1", [](TrainConfig& c) -> double& { return c.beta1; });
    d("beta2", [](TrainConfig& c) -> double& { return c.beta2; });
    d("adam_eps", [](TrainConfig& c) -> double& { return c.adam_eps; });
    d("grad_clip", [](TrainConfig& c) -> double& { return c.grad_clip; });
    d("kappa1", [](TrainConfig& c) -> double& { return c.weights.kappa1; });
    d("kappa2", [](TrainConfig& c) -> double& { return c.weights.kappa2; });
    d("kappa3", [](TrainConfig& c) -> double& { return c.weights.kappa3; });
    d("lambda1", [](TrainConfig& c) -> double& { return c.weights.lambda1; });
    d("lambda2", [](TrainConfig& c) -> double& { return c.weights.lambda2; });
    d("lambda3", [](TrainConfig& c) -> double& { return c.weights.lambda3; });
    d("aug_p", [](TrainConfig& c) -> double& { return c.aug.p; });
    d("aug_noise_sigma", [](TrainConfig& c) -> double& { return c.aug.noise_sigma; });
    d("aug_contrast_min", [](TrainConfig& c) -> double& { return c.aug.contrast_min; });
    d("aug_contrast_max", [](TrainConfig& c) -> double& { return c.aug.contrast_max; });
    d("aug_dropout_rate", [](TrainConfig& c) -> double& { return c.aug.dropout_rate; });
    i("d_model", [](TrainConfig& c) -> nx::Index& { return c.model.d_model; });
    i("heads", [](TrainConfig& c) -> int& { return c.model.heads; });
    i("text_layers", [](TrainConfig& c) -> int& { return c.model.text_layers; });
    i("mhca_layers", [](TrainConfig& c) -> int& { return c.model.mhca_layers; });
    i("gat_layers", [](TrainConfig& c) -> int& { return c.model.gat_layers; });
    i("ffn_mult", [](TrainConfig& c) -> nx::Index& { return c.model.ffn_mult; });
    i("max_text_len", [](TrainConfig& c) -> nx::Index& { return c.model.max_text_len; });
    i("batch_size", [](TrainConfig& c) -> int& { return c.batch_size; });
    i("max_iterations", [](TrainConfig& c) -> int& { return c.max_iterations; });
    i("alternation_period", [](TrainConfig& c) -> int& { return c.alternation_period; });
    i("eval_interval", [](TrainConfig& c) -> int& { return c.eval_interval; });
    i("eval_episodes", [](TrainConfig& c) -> int& { return c.eval_episodes; });
    i("seed", [](TrainConfig& c) -> std::uint64_t& { return c.seed; });
    t["aug_blur"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.aug.blur_enabled = parse_bool(k, v);
    };
    t["forcing"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.forcing = parse_forcing(v); };
    return t;
  }();
  return table;
}

}  // namespace

TrainConfig desk_profile() { return TrainConfig{}; }

TrainConfig paper_profile() {
  TrainConfig c;
  c.profile = "paper";
  c.model.d_model = 768;
  c.model.heads = 12;
  c.model.text_layers = 9;
  c.model.mhca_layers = 1;
  c.model.gat_layers = 2;
  c.learning_rate = 1e-5;
  c.batch_size = 4;
  c.max_iterations = 200000;
  c.eval_interval = 5000;
  c.aug.p = 0.4;
  return c;
}

TrainConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string profile = "desk";
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw UsageError("config line " + std::to_string(line_no) + ": empty key or value");
    }
    if (key == "profile") {
      profile = value;
    } else {
      entries.emplace_back(std::move(key), std::move(value));
    }
  }

  TrainConfig cfg;
  if (profile == "desk") {
    cfg = desk_profile();
  } else if (profile == "paper") {
    cfg = paper_profile();
  } else {
    throw UsageError("config: unknown profile '" + profile + "'");
  }
  for (const auto& [key, value] : entries) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw UsageError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("config: ") + what);
  };
  require(c.learning_rate > 0.0, "learning_rate must be positive");
  require(c.weight_decay >= 0.0, "weight_decay must be non-negative");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0, "betas must lie in [0, 1)");
  require(c.adam_eps > 0.0, "adam_eps must be positive");
  require(c.batch_size > 0, "batch_size must be positive");
  require(c.max_iterations >= 0, "max_iterations must be non-negative");
  require(c.alternation_period > 0, "alternation_period must be positive");
  require(c.eval_interval > 0, "eval_interval must be positive");
  require(c.eval_episodes > 0, "eval_episodes must be positive");
  require(c.model.d_model > 0 && c.model.heads > 0 && c.model.d_model % c.model.heads == 0,
          "d_model must be a positive multiple of heads");
  require(c.model.text_layers >= 0 && c.model.mhca_layers >= 1 && c.model.gat_layers >= 1, "invalid layer counts");
  require(c.model.ffn_mult > 0 && c.model.max_text_len >= 2, "invalid ffn_mult or max_text_len");
  require(c.weights.kappa1 >= 0.0 && c.weights.kappa2 >= 0.0 && c.weights.kappa3 >= 0.0, "kappas must be >= 0");
  require(c.weights.lambda1 >= 0.0 && c.weights.lambda2 >= 0.0 && c.weights.lambda3 >= 0.0, "lambdas must be >= 0");
  require(c.aug.p >= 0.0 && c.aug.p <= 1.0, "aug_p must lie in [0, 1]");
  require(c.aug.noise_sigma >= 0.0, "aug_noise_sigma must be non-negative");
  require(c.aug.contrast_min > 0.0 && c.aug.contrast_min <= c.aug.contrast_max, "invalid contrast range");
  require(c.aug.dropout_rate >= 0.0 && c.aug.dropout_rate <= 1.0, "aug_dropout_rate must lie in [0, 1]");
}

std::string forcing_name(Forcing f) {
  switch (f) {
    case Forcing::Alternate: return "alternate";
    case Forcing::Teacher: return "teacher";
    case Forcing::Student: return "student";
  }
  return "alternate";
}

json to_json(const env::EnvConfig& c) {
  return json{{"altitude_m", c.altitude_m},
              {"fov", c.fov},
              {"grid", c.grid},
              {"max_step_m", c.max_step_m},
              {"min_moves", c.min_moves},
              {"max_moves", c.max_moves},
              {"min_first_step_frac", c.min_first_step_frac},
              {"waypoint_radius_m", c.waypoint_radius_m},
              {"z_min", c.z_min},
              {"z_max", c.z_max},
              {"heading_eps", c.heading_eps},
              {"history_prob", c.history_prob},
              {"max_history_rounds", c.max_history_rounds},
              {"max_steps", c.max_steps},
              {"vary_altitude", c.vary_altitude}};
}

env::EnvConfig env_from_json(const json& j) {
  env::EnvConfig c;
  c.altitude_m = j.at("altitude_m");
  c.fov = j.at("fov");
  c.grid = j.at("grid");
  c.max_step_m = j.at("max_step_m");
  c.min_moves = j.at("min_moves");
  c.max_moves = j.at("max_moves");
  c.min_first_step_frac = j.at("min_first_step_frac");
  c.waypoint_radius_m = j.at("waypoint_radius_m");
  c.z_min = j.at("z_min");
  c.z_max = j.at("z_max");
  c.heading_eps = j.at("heading_eps");
  c.history_prob = j.at("history_prob");
  c.max_history_rounds = j.at("max_history_rounds");
  c.max_steps = j.at("max_steps");
  c.vary_altitude = j.at("vary_altitude");
  return c;
}

json to_json(const env::WorldConfig& c) {
  return json{{"h", c.h},
              {"w", c.w},
              {"scale_m", c.scale_m},
              {"min_landmarks", c.min_landmarks},
              {"max_landmarks", c.max_landmarks},
              {"max_retries", c.max_retries}};
}

env::WorldConfig world_config_from_json(const json& j) {
  env::WorldConfig c;
  c.h = j.at("h");
  c.w = j.at("w");
  c.scale_m = j.at("scale_m");
  c.min_landmarks = j.at("min_landmarks");
  c.max_landmarks = j.at("max_landmarks");
  c.max_retries = j.at("max_retries");
  return c;
}

json to_json(const TrainConfig& c) {
  const gat::ModelConfig& m = c.model;
  return json{
      {"profile", c.profile},
      {"model",
       {{"d_model", m.d_model},
        {"heads", m.heads},
        {"text_layers", m.text_layers},
        {"mhca_layers", m.mhca_layers},
        {"gat_layers", m.gat_layers},
        {"ffn_mult", m.ffn_mult},
        {"vocab_size", m.vocab_size},
        {"max_text_len", m.max_text_len},
        {"grid", m.grid},
        {"channels", m.channels},
        {"max_steps", m.max_steps},
        {"max_step_m", m.max_step_m}}},
      {"weights",
       {{"kappa1", c.weights.kappa1},
        {"kappa2", c.weights.kappa2},
        {"kappa3", c.weights.kappa3},
        {"lambda1", c.weights.lambda1},
        {"lambda2", c.weights.lambda2},
        {"lambda3", c.weights.lambda3}}},
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"grad_clip", c.grad_clip},
      {"batch_size", c.batch_size},
      {"max_iterations", c.max_iterations},
      {"alternation_period", c.alternation_period},
      {"eval_interval", c.eval_interval},
      {"eval_episodes", c.eval_episodes},
      {"forcing", forcing_name(c.forcing)},
      {"aug",
       {{"p", c.aug.p},
        {"noise_sigma", c.aug.noise_sigma},
        {"blur_enabled", c.aug.blur_enabled},
        {"contrast_min", c.aug.contrast_min},
        {"contrast_max", c.aug.contrast_max},
        {"dropout_rate", c.aug.dropout_rate}}},
      {"env", to_json(c.env)},
      {"seed", c.seed},
  };
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.profile = j.at("profile");
  const json& m = j.at("model");
  c.model.d_model = m.at("d_model");
  c.model.heads = m.at("heads");
  c.model.text_layers = m.at("text_layers");
  c.model.mhca_layers = m.at("mhca_layers");
  c.model.gat_layers = m.at("gat_layers");
  c.model.ffn_mult = m.at("ffn_mult");
  c.model.vocab_size = m.at("vocab_size");
  c.model.max_text_len = m.at("max_text_len");
  c.model.grid = m.at("grid");
  c.model.channels = m.at("channels");
  c.model.max_steps = m.at("max_steps");
  c.model.max_step_m = m.at("max_step_m");
  const json& w = j.at("weights");
  c.weights.kappa1 = w.at("kappa1");
  c.weights.kappa2 = w.at("kappa2");
  c.weights.kappa3 = w.at("kappa3");
  c.weights.lambda1 = w.at("lambda1");
  c.weights.lambda2 = w.at("lambda2");
  c.weights.lambda3 = w.at("lambda3");
  c.learning_rate = j.at("learning_rate");
  c.weight_decay = j.at("weight_decay");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.adam_eps = j.at("adam_eps");
  c.grad_clip = j.at("grad_clip");
  c.batch_size = j.at("batch_size");
  c.max_iterations = j.at("max_iterations");
  c.alternation_period = j.at("alternation_period");
  c.eval_interval = j.at("eval_interval");
  c.eval_episodes = j.at("eval_episodes");
  c.forcing = parse_forcing(j.at("forcing").get<std::string>());
  const json& a = j.at("aug");
  c.aug.p = a.at("p");
  c.aug.noise_sigma = a.at("noise_sigma");
  c.aug.blur_enabled = a.at("blur_enabled");
  c.aug.contrast_min = a.at("contrast_min");
  c.aug.contrast_max = a.at("contrast_max");
  c.aug.dropout_rate = a.at("dropout_rate");
  c.env = env_from_json(j.at("env"));
  c.seed = j.at("seed");
  return c;
}

}  // namespace tggat::train
