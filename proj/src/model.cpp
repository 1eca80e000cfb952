// SPDX-License-Identifier: Apache-2.0
#include "snelsd/model.hpp"

#include <span>

namespace snelsd {

namespace {

struct NameRow {
  const char* name;
  int value;
};

int from_name(const std::string& name, std::span<const NameRow> rows, const char* what) {
  for (const NameRow& row : rows) {
    if (name == row.name) return row.value;
  }
  throw ConfigError(std::string("unknown ") + what + " \"" + name + "\"");
}

constexpr NameRow kTaskNames[] = {{"nli", 0}, {"sa", 1}};
constexpr NameRow kEncoderNames[] = {{"lstm1", 0}, {"blstm1", 1}, {"lstm2", 2},
                                     {"blstm2", 3}, {"tree", 4},  {"snelsd", 5}};
constexpr NameRow kJointNames[] = {{"none", 0}, {"word-embedding", 1}, {"blstm1", 2}};

}  // namespace

const char* task_name(TaskKind task) { return kTaskNames[static_cast<int>(task)].name; }

TaskKind task_from_name(const std::string& name) {
  return static_cast<TaskKind>(from_name(name, kTaskNames, "task"));
}

const char* encoder_name(EncoderKind encoder) {
  return kEncoderNames[static_cast<int>(encoder)].name;
}

EncoderKind encoder_from_name(const std::string& name) {
  return static_cast<EncoderKind>(from_name(name, kEncoderNames, "encoder"));
}

const char* joint_name(JointWith joint) { return kJointNames[static_cast<int>(joint)].name; }

JointWith joint_from_name(const std::string& name) {
  return static_cast<JointWith>(from_name(name, kJointNames, "joint encoding"));
}

RunConfig RunConfig::defaults(TaskKind task) {
  RunConfig cfg;
  cfg.task = task;
  if (task == TaskKind::Sa) {
    cfg.optimizer = "adadelta";
    cfg.eps = 1e-6;
    cfg.dropout = 0.0;
    cfg.batch_size = 16;
  }
  return cfg;
}

void validate(const RunConfig& cfg) {
  if (cfg.d_embed < 1 || cfg.d_enc < 1) throw ConfigError("dims must be positive");
  if (cfg.task == TaskKind::Nli && cfg.d_comp < 1) {
    throw ConfigError("composition units must be positive");
  }
  if (cfg.mlp_hidden < 0) throw ConfigError("mlp hidden width must be nonnegative");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.optimizer != "adam" && cfg.optimizer != "adadelta") {
    throw ConfigError("unknown optimizer \"" + cfg.optimizer + "\"");
  }
  if (cfg.optimizer == "adam" && cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw ConfigError("adam momenta must lie in [0, 1)");
  }
  if (cfg.rho < 0.0 || cfg.rho >= 1.0) throw ConfigError("rho must lie in [0, 1)");
  if (cfg.eps <= 0.0) throw ConfigError("eps must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (cfg.task == TaskKind::Nli && cfg.encoder == EncoderKind::Tree) {
    throw ConfigError("the tree encoder needs tree-formatted input; inference pairs have none");
  }
  if (cfg.joint_with != JointWith::None && cfg.encoder != EncoderKind::Snelsd &&
      cfg.encoder != EncoderKind::Lstm2) {
    throw ConfigError("joint encoding is available only for the snelsd and lstm2 encoders");
  }
}

int argmax_class(const Tensor& probs) {
  if (!probs.defined() || probs.size() < 1) throw ContractError("argmax of an empty tensor");
  int best = 0;
  for (long i = 1; i < probs.size(); ++i) {
    if (probs.value(i) > probs.value(best)) best = static_cast<int>(i);
  }
  return best;
}

namespace {

// Encoder params engaged by kind; returns the output width of the primary
// encoder alone.
int primary_width(const RunConfig& cfg) {
  switch (cfg.encoder) {
    case EncoderKind::Blstm1:
    case EncoderKind::Blstm2:
      return 2 * cfg.d_enc;
    default:
      return cfg.d_enc;
  }
}

int aux_width(const RunConfig& cfg) {
  switch (cfg.joint_with) {
    case JointWith::None:
      return 0;
    case JointWith::WordEmbedding:
      return cfg.d_embed;
    case JointWith::Blstm1:
      return 2 * cfg.d_enc;
  }
  return 0;
}

}  // namespace

TaskModel::TaskModel(const RunConfig& config, Vocab vocab)
    : cfg_(config), vocab_(std::move(vocab)), emb_("embedding", {vocab_.size(), cfg_.d_embed}) {
  validate(cfg_);
  switch (cfg_.encoder) {
    case EncoderKind::Lstm1:
      chain_.emplace("enc", cfg_.d_embed, cfg_.d_enc, 1, false);
      break;
    case EncoderKind::Blstm1:
      chain_.emplace("enc", cfg_.d_embed, cfg_.d_enc, 1, true);
      break;
    case EncoderKind::Lstm2:
      chain_.emplace("enc", cfg_.d_embed, cfg_.d_enc, 2, false);
      break;
    case EncoderKind::Blstm2:
      chain_.emplace("enc", cfg_.d_embed, cfg_.d_enc, 2, true);
      break;
    case EncoderKind::Tree:
      tree_.emplace("enc", cfg_.d_embed, cfg_.d_enc);
      break;
    case EncoderKind::Snelsd:
      detect_.emplace("enc.detect", cfg_.d_embed, cfg_.d_enc);
      describe_.emplace("enc.describe", cfg_.d_enc, cfg_.d_enc);
      break;
  }
  if (cfg_.joint_with == JointWith::Blstm1) {
    aux_chain_.emplace("aux", cfg_.d_embed, cfg_.d_enc, 1, true);
  }
  if (cfg_.task == TaskKind::Nli) {
    NliHeadConfig head;
    head.d_enc = encoder_width();
    head.d_comp = cfg_.d_comp;
    head.mlp_hidden = cfg_.mlp_hidden;
    nli_head_.emplace("head", head);
  } else {
    SaHeadConfig head;
    head.d_enc = encoder_width();
    head.mlp_hidden = cfg_.mlp_hidden;
    sa_head_.emplace("head", head);
  }
}

int TaskModel::encoder_width() const { return primary_width(cfg_) + aux_width(cfg_); }

void TaskModel::init(Rng& rng) {
  for (int id = 1; id < vocab_.size(); ++id) {
    for (int j = 0; j < cfg_.d_embed; ++j) {
      emb_.value[static_cast<std::size_t>(id) * cfg_.d_embed + j] = rng.gaussian(0.0, 0.1);
    }
  }
  if (chain_) chain_->init(rng);
  if (tree_) tree_->init(rng);
  if (detect_) detect_->init(rng);
  if (describe_) describe_->init(rng);
  if (aux_chain_) aux_chain_->init(rng);
  if (nli_head_) nli_head_->init(rng);
  if (sa_head_) sa_head_->init(rng);
}

std::vector<Parameter*> TaskModel::parameters() {
  std::vector<Parameter*> out{&emb_};
  auto append = [&out](std::vector<Parameter*> more) {
    out.insert(out.end(), more.begin(), more.end());
  };
  if (chain_) append(chain_->parameters());
  if (tree_) append(tree_->parameters());
  if (detect_) append(detect_->parameters());
  if (describe_) append(describe_->parameters());
  if (aux_chain_) append(aux_chain_->parameters());
  if (nli_head_) append(nli_head_->parameters());
  if (sa_head_) append(sa_head_->parameters());
  return out;
}

std::vector<EncoderOutput> TaskModel::encode(Tape& tape, const SequenceBatch& batch,
                                             const EncodeOptions& opt) {
  if (cfg_.encoder == EncoderKind::Tree) {
    throw ContractError("the tree encoder encodes parse trees, not padded batches");
  }
  std::vector<EncoderOutput> primary =
      chain_ ? encode_chain(tape, batch, emb_, *chain_, opt)
             : encode_snelsd(tape, batch, emb_, *detect_, *describe_, opt);
  if (cfg_.joint_with == JointWith::None) return primary;
  std::vector<EncoderOutput> aux = aux_chain_
                                       ? encode_chain(tape, batch, emb_, *aux_chain_, opt)
                                       : embed_sequence(tape, batch, emb_, opt);
  std::vector<EncoderOutput> out;
  out.reserve(primary.size());
  for (std::size_t i = 0; i < primary.size(); ++i) {
    out.push_back(encode_joint(primary[i], aux[i]));
  }
  return out;
}

EncoderOutput TaskModel::encode_parse(Tape& tape, const ParseTree& tree,
                                      const EncodeOptions& opt) {
  if (cfg_.encoder != EncoderKind::Tree) {
    throw ContractError("encode_parse needs the tree encoder");
  }
  return encode_tree(tape, tree, emb_, *tree_, TreeMode::RootOnly, opt);
}

std::vector<Tensor> TaskModel::forward(Tape& tape, const NliBatch& batch,
                                       const EncodeOptions& eopt, const HeadOptions& hopt) {
  if (cfg_.task != TaskKind::Nli) throw ContractError("model is not configured for inference");
  std::vector<EncoderOutput> premise = encode(tape, batch.premise, eopt);
  std::vector<EncoderOutput> hypothesis = encode(tape, batch.hypothesis, eopt);
  std::vector<Tensor> probs;
  probs.reserve(premise.size());
  for (std::size_t i = 0; i < premise.size(); ++i) {
    probs.push_back(nli_forward(premise[i], hypothesis[i], *nli_head_, nullptr, nullptr, hopt));
  }
  return probs;
}

std::vector<Tensor> TaskModel::forward(Tape& tape, const SaBatch& batch,
                                       const std::vector<ParseTree>& trees,
                                       const EncodeOptions& eopt, const HeadOptions& hopt) {
  if (cfg_.task != TaskKind::Sa) throw ContractError("model is not configured for sentiment");
  std::vector<Tensor> probs;
  if (cfg_.encoder == EncoderKind::Tree) {
    probs.reserve(batch.index.size());
    for (int idx : batch.index) {
      if (idx < 0 || idx >= static_cast<int>(trees.size())) {
        throw ContractError("batch refers to tree " + std::to_string(idx) + " of " +
                            std::to_string(trees.size()));
      }
      EncoderOutput enc = encode_parse(tape, trees[static_cast<std::size_t>(idx)], eopt);
      probs.push_back(sa_forward(enc, *sa_head_, hopt));
    }
    return probs;
  }
  std::vector<EncoderOutput> encoded = encode(tape, batch.sentences, eopt);
  probs.reserve(encoded.size());
  for (const EncoderOutput& enc : encoded) {
    probs.push_back(sa_forward(enc, *sa_head_, hopt));
  }
  return probs;
}

}  // namespace snelsd
