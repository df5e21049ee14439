#pragma once

#include <string>
#include <vector>

#include "tggat/trainer.hpp"

// Binary checkpoint: "TGGAT1", u64 header length, canonical JSON header
// (config, vocabulary, iteration, metric history, optimizer step count), then
// parameter records and the two optimizer moment sets. A record is
// u32 name length, name bytes, u32 rank, u64 dims[rank], little-endian f64 values.
namespace tggat::ckpt {

inline constexpr char kMagic[] = "TGGAT1";

struct Record {
  std::string name;
  nx::Matrix value;
};

struct Checkpoint {
  train::TrainConfig config;
  std::vector<std::string> vocab;
  int iteration = 0;
  long long optimizer_steps = 0;
  std::vector<train::EvalRecord> history;
  std::vector<Record> params;
  std::vector<Record> first_moments;
  std::vector<Record> second_moments;
};

Checkpoint capture(const train::Trainer& trainer, const enc::Vocabulary& vocab);
void save(const Checkpoint& ck, const std::string& path);
// Throws IoError for unreadable or malformed files.
Checkpoint load(const std::string& path);

// Copies parameter values into the store. Throws CompatibilityError when
// names or shapes differ.
void restore_parameters(const Checkpoint& ck, nx::ParameterStore& store);
void restore_trainer(const Checkpoint& ck, train::Trainer& trainer);

// Model with the checkpoint's architecture and weights.
std::unique_ptr<gat::TgGatModel> load_model(const Checkpoint& ck);

}  // namespace tggat::ckpt
