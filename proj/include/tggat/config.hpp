#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "tggat/env.hpp"
#include "tggat/losses.hpp"
#include "tggat/model.hpp"

namespace tggat::train {

enum class Forcing { Alternate, Teacher, Student };

struct TrainConfig {
  std::string profile = "desk";
  gat::ModelConfig model;
  loss::LossWeights weights;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global norm; <= 0 disables
  int batch_size = 4;
  int max_iterations = 5000;
  int alternation_period = 1;
  int eval_interval = 500;
  int eval_episodes = 200;  // cap on validation episodes per evaluation
  Forcing forcing = Forcing::Alternate;
  env::AugConfig aug;
  env::EnvConfig env;  // taken from the dataset at train time
  std::uint64_t seed = 0;
};

TrainConfig desk_profile();
TrainConfig paper_profile();

// Flat "key = value" text, '#' starts a comment. A "profile" key selects the
// base profile before any other key is applied. Unknown keys and malformed
// values throw UsageError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

// Throws UsageError when a field is out of range.
void validate(const TrainConfig& cfg);

std::string forcing_name(Forcing f);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const env::EnvConfig& cfg);
env::EnvConfig env_from_json(const nlohmann::json& j);
nlohmann::json to_json(const env::WorldConfig& cfg);
env::WorldConfig world_config_from_json(const nlohmann::json& j);

}  // namespace tggat::train
