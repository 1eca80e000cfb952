// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "snelsd/checkpoint.hpp"

// Training and evaluation loops. Runs are deterministic for a given config:
// epoch e shuffles with seed config.seed + e, and one dropout stream seeded
// from config.seed is consumed in batch order.

namespace snelsd {

// Gold-by-predicted counts over a k-class task.
struct EvalResult {
  int classes = 0;
  long correct = 0;
  long total = 0;
  std::vector<long> confusion;  // classes x classes, row = gold, column = predicted

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
  long at(int gold, int predicted) const {
    return confusion[static_cast<std::size_t>(gold) * classes + predicted];
  }
};

// Full-corpus eval-mode pass (no dropout), batched with the config batch
// size. Labels outside the class range throw DataError.
EvalResult evaluate(TaskModel& model, const std::vector<NliExample>& examples);
// Indexes the trees against the model vocabulary when the tree encoder
// needs them, hence the mutable reference.
EvalResult evaluate(TaskModel& model, std::vector<ParseTree>& trees);

struct TrainOutcome {
  std::vector<EpochRecord> history;
  double best_dev_acc = -1.0;
  int best_epoch = 0;
  std::string checkpoint_path;  // empty when the config names no out_dir
};

// Owns the model, corpora, and optimizer state for one training run. The
// constructor builds the vocabulary from the training corpus, sizes and
// initializes the model from config.seed, and loads pre-trained embeddings
// when the config names a file.
class Trainer {
 public:
  Trainer(const RunConfig& config, std::vector<NliExample> train, std::vector<NliExample> dev);
  Trainer(const RunConfig& config, std::vector<ParseTree> train, std::vector<ParseTree> dev);

  TaskModel& model() { return *model_; }

  // Runs config.epochs epochs. Each epoch appends an EpochRecord to the
  // outcome and, when a sink is given, one flushed JSON line. The best-dev
  // model is saved to <out_dir>/best.ckpt as soon as it improves.
  TrainOutcome run(std::ostream* metrics = nullptr);

 private:
  void setup();
  double batch_pass(const NliBatch& batch, long& correct);
  double batch_pass(const SaBatch& batch, long& correct);
  void optimizer_step();

  RunConfig cfg_;
  std::vector<NliExample> nli_train_, nli_dev_;
  std::vector<ParseTree> sa_train_, sa_dev_;
  std::optional<TaskModel> model_;
  std::optional<AdamState> adam_;
  std::optional<AdadeltaState> ada_;
  Rng drop_rng_;
};

}  // namespace snelsd
