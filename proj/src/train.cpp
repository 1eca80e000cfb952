// SPDX-License-Identifier: Apache-2.0
#include "snelsd/train.hpp"

#include <filesystem>
#include <ostream>

#include <json.hpp>

namespace snelsd {

namespace {

void tally(EvalResult& res, int gold, int predicted) {
  if (gold < 0 || gold >= res.classes) {
    throw DataError("label " + std::to_string(gold) + " outside the " +
                    std::to_string(res.classes) + "-class task");
  }
  res.confusion[static_cast<std::size_t>(gold) * res.classes + predicted] += 1;
  res.correct += gold == predicted;
  res.total += 1;
}

EvalResult fresh_result(int classes) {
  EvalResult res;
  res.classes = classes;
  res.confusion.assign(static_cast<std::size_t>(classes) * classes, 0);
  return res;
}

}  // namespace

EvalResult evaluate(TaskModel& model, const std::vector<NliExample>& examples) {
  EvalResult res = fresh_result(model.num_classes());
  auto batches = batchify_nli(examples, model.vocab(), model.config().batch_size, 0, false);
  for (const NliBatch& batch : batches) {
    Tape tape;
    std::vector<Tensor> probs = model.forward(tape, batch);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      tally(res, batch.labels[i], argmax_class(probs[i]));
    }
  }
  return res;
}

EvalResult evaluate(TaskModel& model, std::vector<ParseTree>& trees) {
  EvalResult res = fresh_result(model.num_classes());
  if (model.config().encoder == EncoderKind::Tree) {
    for (ParseTree& tree : trees) index_tree(tree, model.vocab());
  }
  auto batches = batchify_sa(trees, model.vocab(), model.config().batch_size, 0, false);
  for (const SaBatch& batch : batches) {
    Tape tape;
    std::vector<Tensor> probs = model.forward(tape, batch, trees);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      tally(res, batch.labels[i], argmax_class(probs[i]));
    }
  }
  return res;
}

Trainer::Trainer(const RunConfig& config, std::vector<NliExample> train,
                 std::vector<NliExample> dev)
    : cfg_(config),
      nli_train_(std::move(train)),
      nli_dev_(std::move(dev)),
      drop_rng_(config.seed + 101) {
  if (cfg_.task != TaskKind::Nli) {
    throw ConfigError("config task is " + std::string(task_name(cfg_.task)) +
                      " but inference corpora were given");
  }
  if (nli_train_.empty()) throw DataError("training corpus is empty");
  model_.emplace(cfg_, build_vocab(nli_train_));
  setup();
}

Trainer::Trainer(const RunConfig& config, std::vector<ParseTree> train,
                 std::vector<ParseTree> dev)
    : cfg_(config),
      sa_train_(std::move(train)),
      sa_dev_(std::move(dev)),
      drop_rng_(config.seed + 101) {
  if (cfg_.task != TaskKind::Sa) {
    throw ConfigError("config task is " + std::string(task_name(cfg_.task)) +
                      " but sentiment corpora were given");
  }
  if (sa_train_.empty()) throw DataError("training corpus is empty");
  model_.emplace(cfg_, build_vocab(sa_train_));
  setup();
}

void Trainer::setup() {
  Rng rng(cfg_.seed);
  model_->init(rng);
  if (!cfg_.embeddings_path.empty()) {
    model_->embeddings() =
        load_embeddings(cfg_.embeddings_path, model_->vocab(), cfg_.d_embed, cfg_.seed);
  }
  if (cfg_.encoder == EncoderKind::Tree) {
    for (ParseTree& tree : sa_train_) index_tree(tree, model_->vocab());
    for (ParseTree& tree : sa_dev_) index_tree(tree, model_->vocab());
  }
  if (cfg_.optimizer == "adam") {
    adam_.emplace();
    adam_->lr = cfg_.lr;
    adam_->beta1 = cfg_.beta1;
    adam_->beta2 = cfg_.beta2;
    adam_->eps = cfg_.eps;
  } else {
    ada_.emplace();
    ada_->rho = cfg_.rho;
    ada_->eps = cfg_.eps;
  }
}

void Trainer::optimizer_step() {
  std::vector<Parameter*> params = model_->parameters();
  if (adam_) {
    adam_step(params, *adam_);
  } else {
    adadelta_step(params, *ada_);
  }
}

namespace {

// Mean cross-entropy over the batch; fills predictions along the way.
template <typename Forward>
double supervised_pass(TaskModel& model, const std::vector<int>& labels, Forward&& forward,
                       long& correct) {
  for (Parameter* p : model.parameters()) p->zero_grad();
  Tape tape;
  std::vector<Tensor> probs = forward(tape);
  Tensor loss = cross_entropy(probs[0], labels[0]);
  correct += argmax_class(probs[0]) == labels[0];
  for (std::size_t i = 1; i < probs.size(); ++i) {
    loss = add(loss, cross_entropy(probs[i], labels[i]));
    correct += argmax_class(probs[i]) == labels[i];
  }
  const double total = loss.item();
  tape.backward(scale(loss, 1.0 / static_cast<double>(probs.size())));
  return total;
}

}  // namespace

double Trainer::batch_pass(const NliBatch& batch, long& correct) {
  EncodeOptions eopt{cfg_.dropout, DropoutMode::Train, &drop_rng_};
  HeadOptions hopt{cfg_.dropout, DropoutMode::Train, &drop_rng_};
  const double total = supervised_pass(
      *model_, batch.labels,
      [&](Tape& tape) { return model_->forward(tape, batch, eopt, hopt); }, correct);
  optimizer_step();
  return total;
}

double Trainer::batch_pass(const SaBatch& batch, long& correct) {
  EncodeOptions eopt{cfg_.dropout, DropoutMode::Train, &drop_rng_};
  HeadOptions hopt{cfg_.dropout, DropoutMode::Train, &drop_rng_};
  const double total = supervised_pass(
      *model_, batch.labels,
      [&](Tape& tape) { return model_->forward(tape, batch, sa_train_, eopt, hopt); }, correct);
  optimizer_step();
  return total;
}

TrainOutcome Trainer::run(std::ostream* metrics) {
  TrainOutcome out;
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    out.checkpoint_path = (std::filesystem::path(cfg_.out_dir) / "best.ckpt").string();
  }
  const bool is_nli = cfg_.task == TaskKind::Nli;
  const long train_size =
      is_nli ? static_cast<long>(nli_train_.size()) : static_cast<long>(sa_train_.size());

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    double loss_sum = 0.0;
    long correct = 0;
    if (is_nli) {
      for (const NliBatch& batch :
           batchify_nli(nli_train_, model_->vocab(), cfg_.batch_size, cfg_.seed + epoch, true)) {
        loss_sum += batch_pass(batch, correct);
      }
    } else {
      for (const SaBatch& batch :
           batchify_sa(sa_train_, model_->vocab(), cfg_.batch_size, cfg_.seed + epoch, true)) {
        loss_sum += batch_pass(batch, correct);
      }
    }
    const double dev_acc =
        is_nli ? evaluate(*model_, nli_dev_).accuracy() : evaluate(*model_, sa_dev_).accuracy();
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train_size),
                    static_cast<double>(correct) / static_cast<double>(train_size), dev_acc};
    out.history.push_back(rec);
    if (metrics != nullptr) {
      *metrics << nlohmann::json{{"epoch", rec.epoch},
                                 {"train_loss", rec.train_loss},
                                 {"train_acc", rec.train_acc},
                                 {"dev_acc", rec.dev_acc}}
                      .dump()
               << "\n"
               << std::flush;
    }
    if (dev_acc > out.best_dev_acc) {
      out.best_dev_acc = dev_acc;
      out.best_epoch = epoch;
      if (!out.checkpoint_path.empty()) {
        save_checkpoint(out.checkpoint_path,
                        make_checkpoint(*model_, adam_ ? &*adam_ : nullptr,
                                        ada_ ? &*ada_ : nullptr, epoch, out.history));
      }
    }
  }
  return out;
}

}  // namespace snelsd
