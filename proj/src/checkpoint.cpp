#include "tggat/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace tggat::ckpt {
namespace {

using nlohmann::json;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint64_t u64() { return uint(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::uint64_t uint(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw IoError("checkpoint: truncated file");
  }

  std::string data_;
  std::size_t pos_ = 0;
};

void put_records(std::string& out, const std::vector<Record>& records) {
  put_u64(out, records.size());
  for (const Record& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, 2);
    put_u64(out, static_cast<std::uint64_t>(r.value.rows()));
    put_u64(out, static_cast<std::uint64_t>(r.value.cols()));
    for (nx::Index i = 0; i < r.value.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(r.value.data()[i]));
  }
}

std::vector<Record> get_records(Reader& in) {
  const std::uint64_t count = in.u64();
  std::vector<Record> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    Record r;
    r.name = in.bytes(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank < 1 || rank > 2) throw IoError("checkpoint: unsupported rank for " + r.name);
    const std::uint64_t rows = in.u64();
    const std::uint64_t cols = rank == 2 ? in.u64() : 1;
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw IoError("checkpoint: implausible shape for " + r.name);
    r.value.resize(static_cast<nx::Index>(rows), static_cast<nx::Index>(cols));
    for (nx::Index i = 0; i < r.value.size(); ++i) r.value.data()[i] = std::bit_cast<double>(in.u64());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Record> moment_records(const nx::ParameterStore& store,
                                   const std::unordered_map<std::string, nx::Matrix>& moments) {
  std::vector<Record> out;
  for (const nx::Parameter& p : store.all()) {
    const auto it = moments.find(p.name);
    if (it != moments.end()) out.push_back(Record{p.name, it->second});
  }
  return out;
}

}  // namespace

Checkpoint capture(const train::Trainer& trainer, const enc::Vocabulary& vocab) {
  Checkpoint ck;
  ck.config = trainer.config();
  ck.vocab.assign(vocab.tokens().begin(), vocab.tokens().end());
  ck.iteration = trainer.iteration();
  ck.optimizer_steps = trainer.optimizer().steps();
  ck.history = trainer.history();
  const nx::ParameterStore& store = trainer.model().params();
  for (const nx::Parameter& p : store.all()) ck.params.push_back(Record{p.name, p.value.value()});
  ck.first_moments = moment_records(store, trainer.optimizer().first_moments());
  ck.second_moments = moment_records(store, trainer.optimizer().second_moments());
  return ck;
}

void save(const Checkpoint& ck, const std::string& path) {
  json history = json::array();
  for (const train::EvalRecord& r : ck.history) history.push_back(train::to_json(r));
  const json header{{"config", train::to_json(ck.config)},
                    {"vocab", ck.vocab},
                    {"iteration", ck.iteration},
                    {"optimizer_steps", ck.optimizer_steps},
                    {"metric_history", history}};
  const std::string text = header.dump();

  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  put_records(out, ck.params);
  put_records(out, ck.first_moments);
  put_records(out, ck.second_moments);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for checkpoint " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  Reader in(buf.str());
  if (in.bytes(sizeof(kMagic) - 1) != kMagic) throw IoError(path + " is not a checkpoint");

  Checkpoint ck;
  try {
    const json header = json::parse(in.bytes(in.u64()));
    ck.config = train::config_from_json(header.at("config"));
    ck.vocab = header.at("vocab").get<std::vector<std::string>>();
    ck.iteration = header.at("iteration");
    ck.optimizer_steps = header.at("optimizer_steps");
    for (const json& r : header.at("metric_history")) ck.history.push_back(train::eval_record_from_json(r));
  } catch (const json::exception& e) {
    throw IoError("checkpoint header is malformed: " + std::string(e.what()));
  } catch (const UsageError& e) {
    throw IoError("checkpoint header is malformed: " + std::string(e.what()));
  }
  ck.params = get_records(in);
  ck.first_moments = get_records(in);
  ck.second_moments = get_records(in);
  if (!in.done()) throw IoError("checkpoint: trailing bytes");
  return ck;
}

void restore_parameters(const Checkpoint& ck, nx::ParameterStore& store) {
  if (ck.params.size() != store.size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(ck.params.size()) + " parameters, model has " +
                             std::to_string(store.size()));
  }
  for (const Record& r : ck.params) {
    if (!store.contains(r.name)) throw CompatibilityError("checkpoint parameter " + r.name + " is not in the model");
    nx::Var v = store.value(r.name);
    if (v.rows() != r.value.rows() || v.cols() != r.value.cols()) {
      throw CompatibilityError("shape mismatch for parameter " + r.name);
    }
    v.mutable_value() = r.value;
  }
}

void restore_trainer(const Checkpoint& ck, train::Trainer& trainer) {
  restore_parameters(ck, trainer.model().params());
  auto restore_moments = [](const std::vector<Record>& records, std::unordered_map<std::string, nx::Matrix>& dst) {
    for (const Record& r : records) {
      auto it = dst.find(r.name);
      if (it == dst.end() || it->second.rows() != r.value.rows() || it->second.cols() != r.value.cols()) {
        throw CompatibilityError("optimizer state does not match parameter " + r.name);
      }
      it->second = r.value;
    }
  };
  restore_moments(ck.first_moments, trainer.optimizer().first_moments());
  restore_moments(ck.second_moments, trainer.optimizer().second_moments());
  trainer.optimizer().set_steps(ck.optimizer_steps);
  trainer.set_iteration(ck.iteration);
  trainer.history() = ck.history;
}

std::unique_ptr<gat::TgGatModel> load_model(const Checkpoint& ck) {
  auto model = std::make_unique<gat::TgGatModel>(ck.config.model, ck.config.seed);
  restore_parameters(ck, model->params());
  return model;
}

}  // namespace tggat::ckpt
