// SPDX-License-Identifier: Apache-2.0
#include "snelsd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace snelsd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io writes raw little-endian words");

namespace {

constexpr char kMagic[8] = {'S', 'N', 'E', 'L', 'S', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

json config_json(const RunConfig& cfg) {
  return json{{"task", task_name(cfg.task)},
              {"encoder", encoder_name(cfg.encoder)},
              {"joint_with", joint_name(cfg.joint_with)},
              {"d_embed", cfg.d_embed},
              {"d_enc", cfg.d_enc},
              {"d_comp", cfg.d_comp},
              {"mlp_hidden", cfg.mlp_hidden},
              {"optimizer", cfg.optimizer},
              {"lr", cfg.lr},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"rho", cfg.rho},
              {"eps", cfg.eps},
              {"dropout", cfg.dropout},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"seed", cfg.seed},
              {"lowercase", cfg.lowercase},
              {"phrase_level", cfg.phrase_level},
              {"train_path", cfg.train_path},
              {"dev_path", cfg.dev_path},
              {"embeddings_path", cfg.embeddings_path},
              {"out_dir", cfg.out_dir}};
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  cfg.task = task_from_name(j.at("task").get<std::string>());
  cfg.encoder = encoder_from_name(j.at("encoder").get<std::string>());
  cfg.joint_with = joint_from_name(j.at("joint_with").get<std::string>());
  cfg.d_embed = j.at("d_embed").get<int>();
  cfg.d_enc = j.at("d_enc").get<int>();
  cfg.d_comp = j.at("d_comp").get<int>();
  cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
  cfg.optimizer = j.at("optimizer").get<std::string>();
  cfg.lr = j.at("lr").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.rho = j.at("rho").get<double>();
  cfg.eps = j.at("eps").get<double>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<unsigned>();
  cfg.lowercase = j.at("lowercase").get<bool>();
  cfg.phrase_level = j.at("phrase_level").get<bool>();
  cfg.train_path = j.at("train_path").get<std::string>();
  cfg.dev_path = j.at("dev_path").get<std::string>();
  cfg.embeddings_path = j.at("embeddings_path").get<std::string>();
  cfg.out_dir = j.at("out_dir").get<std::string>();
  return cfg;
}

struct Writer {
  std::ofstream out;

  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw DataError("cannot write " + path);
  }
  void bytes(const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream in;
  std::string path;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("cannot open " + p);
  }
  void bytes(void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
      throw DataError("truncated checkpoint " + path);
    }
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    bytes(&v, 8);
    return v;
  }
  std::string str(std::uint32_t cap = 1u << 24) {
    const std::uint32_t n = u32();
    if (n > cap) throw DataError("oversized string in checkpoint " + path);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

void append_opt_arrays(Checkpoint& ck, TaskModel& model, const char* tag_a, const char* tag_b,
                       const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  std::vector<Parameter*> params = model.parameters();
  if (a.empty() && b.empty()) return;
  if (a.size() != params.size() || b.size() != params.size()) {
    throw ContractError("optimizer arrays do not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const int n = static_cast<int>(a[i].size());
    ck.tensors.push_back({std::string("opt.") + tag_a + "." + params[i]->name, {n}, a[i]});
    ck.tensors.push_back({std::string("opt.") + tag_b + "." + params[i]->name,
                          {static_cast<int>(b[i].size())}, b[i]});
  }
}

}  // namespace

Checkpoint make_checkpoint(TaskModel& model, const AdamState* adam, const AdadeltaState* adadelta,
                           int epoch, std::vector<EpochRecord> history) {
  if (adam != nullptr && adadelta != nullptr) {
    throw ContractError("a checkpoint holds one optimizer state, not two");
  }
  Checkpoint ck;
  ck.config = model.config();
  ck.vocab_tokens = model.vocab().tokens();
  ck.epoch = epoch;
  ck.history = std::move(history);
  for (Parameter* p : model.parameters()) {
    ck.tensors.push_back({p->name, p->shape, p->value});
  }
  if (adam != nullptr) {
    ck.opt_step = adam->step;
    append_opt_arrays(ck, model, "m", "v", adam->m, adam->v);
  }
  if (adadelta != nullptr) {
    append_opt_arrays(ck, model, "gsq", "usq", adadelta->grad_sq, adadelta->update_sq);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json header{{"config", config_json(ck.config)},
              {"epoch", ck.epoch},
              {"opt_step", ck.opt_step},
              {"history", json::array()}};
  for (const EpochRecord& rec : ck.history) {
    header["history"].push_back({{"epoch", rec.epoch},
                                 {"train_loss", rec.train_loss},
                                 {"train_acc", rec.train_acc},
                                 {"dev_acc", rec.dev_acc}});
  }
  const std::string head = header.dump();

  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(head.size());
    w.bytes(head.data(), head.size());
    w.u32(static_cast<std::uint32_t>(ck.vocab_tokens.size()));
    for (const std::string& tok : ck.vocab_tokens) w.str(tok);
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (const NamedTensor& t : ck.tensors) {
      w.str(t.name);
      w.u32(static_cast<std::uint32_t>(t.shape.size()));
      for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
      w.bytes(t.values.data(), t.values.size() * sizeof(double));
    }
    w.out.flush();
    if (!w.out) {
      w.out.close();
      std::remove(tmp.c_str());
      throw DataError("cannot write " + path);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot write " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[8] = {};
  r.bytes(magic, sizeof magic);
  if (std::string(magic, 8) != std::string(kMagic, 8)) {
    throw DataError(path + " is not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t head_len = r.u64();
  if (head_len > (1u << 26)) throw DataError("oversized header in checkpoint " + path);
  std::string head(head_len, '\0');
  r.bytes(head.data(), head.size());

  Checkpoint ck;
  try {
    const json header = json::parse(head);
    ck.config = config_from_json(header.at("config"));
    ck.epoch = header.at("epoch").get<int>();
    ck.opt_step = header.at("opt_step").get<long>();
    for (const json& rec : header.at("history")) {
      ck.history.push_back({rec.at("epoch").get<int>(), rec.at("train_loss").get<double>(),
                            rec.at("train_acc").get<double>(), rec.at("dev_acc").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError("bad checkpoint header in " + path + ": " + e.what());
  }

  const std::uint32_t vocab_count = r.u32();
  ck.vocab_tokens.reserve(vocab_count);
  for (std::uint32_t i = 0; i < vocab_count; ++i) ck.vocab_tokens.push_back(r.str());

  const std::uint32_t tensor_count = r.u32();
  ck.tensors.reserve(tensor_count);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 2) throw DataError("tensor rank " + std::to_string(rank) + " in checkpoint");
    long total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim > (1u << 28)) throw DataError("oversized tensor in checkpoint " + path);
      t.shape.push_back(static_cast<int>(dim));
      total *= dim;
    }
    t.values.resize(static_cast<std::size_t>(total));
    r.bytes(t.values.data(), t.values.size() * sizeof(double));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

TaskModel restore_model(const Checkpoint& ck) {
  TaskModel model(ck.config, Vocab(ck.vocab_tokens));
  std::vector<Parameter*> params = model.parameters();
  if (ck.tensors.size() < params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model needs " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& t = ck.tensors[i];
    if (t.name != params[i]->name || t.shape != params[i]->shape) {
      throw DataError("checkpoint tensor \"" + t.name + "\" does not match parameter \"" +
                      params[i]->name + "\"");
    }
    params[i]->value = t.values;
  }
  return model;
}

namespace {

// Optimizer arrays stored after the model tensors, two per parameter.
void fill_opt_arrays(const Checkpoint& ck, const char* tag_a, const char* tag_b,
                     std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& b) {
  a.clear();
  b.clear();
  const std::string want_a = std::string("opt.") + tag_a + ".";
  const std::string want_b = std::string("opt.") + tag_b + ".";
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    const NamedTensor& t = ck.tensors[i];
    if (t.name.rfind(want_a, 0) == 0) a.push_back(t.values);
    if (t.name.rfind(want_b, 0) == 0) b.push_back(t.values);
  }
  if (a.size() != b.size()) throw DataError("uneven optimizer arrays in checkpoint");
}

}  // namespace

void fill_adam(const Checkpoint& ck, AdamState& state) {
  if (ck.config.optimizer != "adam") {
    throw CapabilityError("checkpoint holds " + ck.config.optimizer + " state, not adam");
  }
  state.lr = ck.config.lr;
  state.beta1 = ck.config.beta1;
  state.beta2 = ck.config.beta2;
  state.eps = ck.config.eps;
  state.step = ck.opt_step;
  fill_opt_arrays(ck, "m", "v", state.m, state.v);
}

void fill_adadelta(const Checkpoint& ck, AdadeltaState& state) {
  if (ck.config.optimizer != "adadelta") {
    throw CapabilityError("checkpoint holds " + ck.config.optimizer + " state, not adadelta");
  }
  state.rho = ck.config.rho;
  state.eps = ck.config.eps;
  fill_opt_arrays(ck, "gsq", "usq", state.grad_sq, state.update_sq);
}

}  // namespace snelsd
