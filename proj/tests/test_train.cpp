// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "snelsd/train.hpp"

using namespace snelsd;

namespace {

std::vector<NliExample> toy_nli() {
  std::vector<NliExample> out;
  out.push_back({{"a", "dog", "runs"}, {"an", "animal", "moves"}, 0});
  out.push_back({{"a", "dog", "runs"}, {"a", "dog", "sits"}, 2});
  out.push_back({{"kids", "play", "chess"}, {"kids", "are", "indoors"}, 1});
  out.push_back({{"the", "sun", "shines"}, {"it", "is", "bright"}, 0});
  out.push_back({{"he", "eats", "rice"}, {"he", "eats", "nothing"}, 2});
  out.push_back({{"she", "reads"}, {"she", "likes", "books"}, 1});
  return out;
}

ParseTree leaf(int label, const std::string& token) {
  ParseTree t;
  t.label = label;
  t.token = token;
  return t;
}

ParseTree join(int label, ParseTree left, ParseTree right) {
  ParseTree t;
  t.label = label;
  t.left = std::make_unique<ParseTree>(std::move(left));
  t.right = std::make_unique<ParseTree>(std::move(right));
  return t;
}

std::vector<ParseTree> toy_trees() {
  std::vector<ParseTree> out;
  out.push_back(join(4, leaf(2, "truly"), join(3, leaf(2, "great"), leaf(2, "fun"))));
  out.push_back(join(0, leaf(2, "very"), join(1, leaf(2, "dull"), leaf(2, "stuff"))));
  out.push_back(join(3, leaf(2, "good"), leaf(2, "movie")));
  out.push_back(join(1, leaf(2, "bad"), leaf(2, "acting")));
  out.push_back(join(2, leaf(2, "plain"), leaf(2, "average")));
  return out;
}

std::vector<ParseTree> clone_all(const std::vector<ParseTree>& trees) {
  std::vector<ParseTree> out;
  for (const ParseTree& t : trees) out.push_back(clone_tree(t));
  return out;
}

RunConfig tiny_nli_config() {
  RunConfig cfg = RunConfig::defaults(TaskKind::Nli);
  cfg.encoder = EncoderKind::Snelsd;
  cfg.d_embed = 5;
  cfg.d_enc = 4;
  cfg.d_comp = 3;
  cfg.batch_size = 3;
  cfg.epochs = 3;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("two runs with one config emit identical metrics logs") {
  auto run_once = [] {
    Trainer trainer(tiny_nli_config(), toy_nli(), toy_nli());
    std::ostringstream log;
    trainer.run(&log);
    return log.str();
  };
  const std::string first = run_once();
  CHECK(first == run_once());

  std::istringstream lines(first);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    ++count;
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec.at("epoch").get<int>() == count);
    CHECK(rec.contains("train_loss"));
    CHECK(rec.contains("train_acc"));
    CHECK(rec.contains("dev_acc"));
  }
  CHECK(count == 3);
}

TEST_CASE("training on a toy corpus drives the loss down") {
  RunConfig cfg = tiny_nli_config();
  cfg.epochs = 12;
  cfg.lr = 0.01;
  cfg.dropout = 0.0;
  Trainer trainer(cfg, toy_nli(), toy_nli());
  TrainOutcome out = trainer.run();
  REQUIRE(out.history.size() == 12);
  CHECK(out.history.back().train_loss < out.history.front().train_loss);
  CHECK(out.best_dev_acc >= out.history.front().dev_acc);
  CHECK(out.best_epoch >= 1);
}

TEST_CASE("the retained checkpoint reproduces its recorded dev accuracy") {
  const auto dir = std::filesystem::temp_directory_path() / "snelsd_train_test";
  std::filesystem::remove_all(dir);
  RunConfig cfg = tiny_nli_config();
  cfg.epochs = 4;
  cfg.lr = 0.02;
  cfg.dropout = 0.25;
  cfg.out_dir = dir.string();
  Trainer trainer(cfg, toy_nli(), toy_nli());
  TrainOutcome out = trainer.run();
  REQUIRE(!out.checkpoint_path.empty());
  REQUIRE(std::filesystem::exists(out.checkpoint_path));

  Checkpoint ck = load_checkpoint(out.checkpoint_path);
  CHECK(ck.epoch == out.best_epoch);
  CHECK(ck.history.size() == static_cast<std::size_t>(out.best_epoch));
  TaskModel restored = restore_model(ck);
  EvalResult dev = evaluate(restored, toy_nli());
  CHECK(dev.accuracy() == out.best_dev_acc);
  EvalResult again = evaluate(restored, toy_nli());
  CHECK(again.accuracy() == dev.accuracy());
}

TEST_CASE("sentiment training runs the tree encoder with adadelta") {
  RunConfig cfg = RunConfig::defaults(TaskKind::Sa);
  cfg.encoder = EncoderKind::Tree;
  cfg.d_embed = 4;
  cfg.d_enc = 3;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 13;
  Trainer trainer(cfg, toy_trees(), toy_trees());
  TrainOutcome out = trainer.run();
  REQUIRE(out.history.size() == 2);
  for (const EpochRecord& rec : out.history) {
    CHECK(rec.train_loss > 0.0);
    CHECK(rec.train_acc >= 0.0);
    CHECK(rec.train_acc <= 1.0);
    CHECK(rec.dev_acc >= 0.0);
    CHECK(rec.dev_acc <= 1.0);
  }
}

TEST_CASE("trainer construction rejects mismatched corpora") {
  RunConfig sa_cfg = RunConfig::defaults(TaskKind::Sa);
  sa_cfg.d_embed = 4;
  sa_cfg.d_enc = 3;
  CHECK_THROWS_AS(Trainer(sa_cfg, toy_nli(), toy_nli()), ConfigError);

  RunConfig nli_cfg = tiny_nli_config();
  CHECK_THROWS_AS(Trainer(nli_cfg, toy_trees(), toy_trees()), ConfigError);
  CHECK_THROWS_AS(Trainer(nli_cfg, std::vector<NliExample>{}, toy_nli()), DataError);
}

TEST_CASE("evaluation fills a gold-by-predicted confusion matrix") {
  std::vector<NliExample> pairs = toy_nli();
  Vocab vocab = build_vocab(pairs);
  RunConfig cfg = tiny_nli_config();
  TaskModel model(cfg, vocab);
  Rng rng(cfg.seed);
  model.init(rng);

  EvalResult res = evaluate(model, pairs);
  CHECK(res.classes == 3);
  CHECK(res.total == static_cast<long>(pairs.size()));
  long sum = 0;
  std::vector<long> gold_counts(3, 0);
  for (const NliExample& ex : pairs) gold_counts[static_cast<std::size_t>(ex.label)] += 1;
  for (int g = 0; g < 3; ++g) {
    long row = 0;
    for (int p = 0; p < 3; ++p) row += res.at(g, p);
    CHECK(row == gold_counts[static_cast<std::size_t>(g)]);
    sum += row;
  }
  CHECK(sum == res.total);
  long diag = res.at(0, 0) + res.at(1, 1) + res.at(2, 2);
  CHECK(diag == res.correct);

  std::vector<NliExample> bad = pairs;
  bad[0].label = 7;
  CHECK_THROWS_AS(evaluate(model, bad), DataError);
}

TEST_CASE("sentiment evaluation indexes trees for the tree encoder") {
  std::vector<ParseTree> trees = toy_trees();
  Vocab vocab = build_vocab(trees);
  RunConfig cfg = RunConfig::defaults(TaskKind::Sa);
  cfg.encoder = EncoderKind::Tree;
  cfg.d_embed = 4;
  cfg.d_enc = 3;
  TaskModel model(cfg, vocab);
  Rng rng(5);
  model.init(rng);

  std::vector<ParseTree> fresh = clone_all(trees);  // token ids unset
  EvalResult res = evaluate(model, fresh);
  CHECK(res.total == static_cast<long>(trees.size()));
  CHECK(res.classes == 5);
}
