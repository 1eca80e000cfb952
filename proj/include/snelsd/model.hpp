// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snelsd/data.hpp"
#include "snelsd/heads.hpp"

// Run configuration and the assembled task model: embedding table, one of
// the six encoders, an optional auxiliary encoding joined per position, and
// the task head. The model owns every trainable parameter; forward passes
// run on a caller-supplied tape.

namespace snelsd {

enum class TaskKind { Nli, Sa };
enum class EncoderKind { Lstm1, Blstm1, Lstm2, Blstm2, Tree, Snelsd };
enum class JointWith { None, WordEmbedding, Blstm1 };

// Enum <-> flag-value names ("nli", "blstm2", "word-embedding", ...).
// Unknown names throw ConfigError.
const char* task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);
const char* encoder_name(EncoderKind encoder);
EncoderKind encoder_from_name(const std::string& name);
const char* joint_name(JointWith joint);
JointWith joint_from_name(const std::string& name);

struct RunConfig {
  TaskKind task = TaskKind::Nli;
  EncoderKind encoder = EncoderKind::Snelsd;
  JointWith joint_with = JointWith::None;

  int d_embed = 300;
  int d_enc = 300;     // encoder hidden units per direction (and chunking width)
  int d_comp = 300;    // inference composition units per direction
  int mlp_hidden = 0;  // 0: head default

  std::string optimizer = "adam";  // "adam" | "adadelta"
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.95;
  double eps = 1e-8;
  double dropout = 0.5;
  int batch_size = 128;
  int epochs = 10;
  unsigned seed = 0;
  bool lowercase = false;
  bool phrase_level = false;  // sentiment: train on every labeled subtree

  std::string train_path, dev_path, embeddings_path, out_dir;

  // Task-appropriate training setup: inference uses Adam(4e-4, 0.9, 0.999),
  // batch 128, dropout 0.5; sentiment uses Adadelta(rho 0.95, eps 1e-6),
  // batch 16, no dropout.
  static RunConfig defaults(TaskKind task);
};

// Rejects contradictory configurations before any training work: the tree
// encoder with the inference task (pair corpora carry no parses), a joint
// encoding on anything but snelsd or lstm2, non-positive dims, unknown
// optimizer names, out-of-range rates.
void validate(const RunConfig& config);

// Class index with the highest probability; ties break to the lowest index.
int argmax_class(const Tensor& probs);

class TaskModel {
 public:
  // Validates the config and sizes every parameter. Values are zero until
  // init (or a checkpoint restore).
  TaskModel(const RunConfig& config, Vocab vocab);

  void init(Rng& rng);
  // Stable order: embedding, encoder, auxiliary encoder, head.
  std::vector<Parameter*> parameters();

  const RunConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  Parameter& embeddings() { return emb_; }
  // Width of one encoded state row, joint concatenation included.
  int encoder_width() const;
  int num_classes() const { return cfg_.task == TaskKind::Nli ? kNliClasses : kSaClasses; }
  // True when encodings carry a chunk trace (detection layer present).
  bool traces_chunks() const { return cfg_.encoder == EncoderKind::Snelsd; }

  // Per-sentence encodings of a padded batch; the joint combination is
  // applied. The tree encoder rejects this entry point.
  std::vector<EncoderOutput> encode(Tape& tape, const SequenceBatch& batch,
                                    const EncodeOptions& opt = {});
  // Tree encoding (root state); leaves must be indexed against vocab().
  EncoderOutput encode_parse(Tape& tape, const ParseTree& tree, const EncodeOptions& opt = {});

  // Class probabilities, one tensor per example.
  std::vector<Tensor> forward(Tape& tape, const NliBatch& batch, const EncodeOptions& eopt = {},
                              const HeadOptions& hopt = {});
  // trees backs the tree encoder via batch.index; other encoders read only
  // batch.sentences.
  std::vector<Tensor> forward(Tape& tape, const SaBatch& batch,
                              const std::vector<ParseTree>& trees, const EncodeOptions& eopt = {},
                              const HeadOptions& hopt = {});

 private:
  RunConfig cfg_;
  Vocab vocab_;
  Parameter emb_;
  std::optional<ChainParams> chain_;
  std::optional<TreeLstmParams> tree_;
  std::optional<DetectParams> detect_;
  std::optional<DescribeParams> describe_;
  std::optional<ChainParams> aux_chain_;  // joint_with == Blstm1
  std::optional<NliHeadParams> nli_head_;
  std::optional<SaHeadParams> sa_head_;
};

}  // namespace snelsd
