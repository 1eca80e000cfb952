// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "snelsd/heatmap.hpp"
#include "snelsd/train.hpp"

// Command-line surface: train, eval, inspect-chunks. Every failure exits
// nonzero with one machine-parseable line on stderr:
//   snelsd: error: <kind>: <reason>
// Relative corpus paths resolve against $SNELSD_DATA_ROOT when it is set.

namespace {

using namespace snelsd;

std::string one_line(std::string msg) {
  for (char& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return msg;
}

const char* error_kind(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const EmptySequenceError*>(&e)) return "empty-sequence";
  if (dynamic_cast<const MalformedTreeError*>(&e)) return "malformed-tree";
  if (dynamic_cast<const CapabilityError*>(&e)) return "capability";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  return "error";
}

std::string resolve_data_path(const std::string& path) {
  if (path.empty()) return path;
  const char* root = std::getenv("SNELSD_DATA_ROOT");
  if (root != nullptr && *root != '\0' && !std::filesystem::path(path).is_absolute()) {
    return (std::filesystem::path(root) / path).string();
  }
  return path;
}

struct TrainArgs {
  std::string config;
  std::string task, encoder, joint, optimizer;
  int d_embed = 0, d_enc = 0, d_comp = 0, mlp_hidden = 0, batch = 0, epochs = 0, trials = 1;
  unsigned seed = 0;
  double lr = 0, beta1 = 0, beta2 = 0, rho = 0, eps = 0, dropout = 0;
  bool lowercase = false, phrase_level = false;
  std::string train, dev, embeddings, out, metrics;

  CLI::Option *o_task = nullptr, *o_encoder = nullptr, *o_joint = nullptr, *o_optimizer = nullptr;
  CLI::Option *o_d_embed = nullptr, *o_d_enc = nullptr, *o_d_comp = nullptr,
              *o_mlp_hidden = nullptr;
  CLI::Option *o_lr = nullptr, *o_beta1 = nullptr, *o_beta2 = nullptr, *o_rho = nullptr,
              *o_eps = nullptr, *o_dropout = nullptr;
  CLI::Option *o_batch = nullptr, *o_epochs = nullptr, *o_seed = nullptr;
  CLI::Option *o_lowercase = nullptr, *o_phrase_level = nullptr;
  CLI::Option *o_train = nullptr, *o_dev = nullptr, *o_embeddings = nullptr, *o_out = nullptr,
              *o_metrics = nullptr, *o_trials = nullptr;
};

// Merged train settings: RunConfig plus the CLI-only knobs.
struct TrainSpec {
  RunConfig cfg;
  std::string metrics;
  int trials = 1;
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

ConfigEntries read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  ConfigEntries entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config file " + path + ": expected key=value", lineno);
    }
    const std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw ParseError("config file " + path + ": empty key", lineno);
    entries.emplace_back(key, value);
  }
  return entries;
}

bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " expects a boolean, got \"" + v + "\"");
}

int config_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + " expects an integer, got \"" + v + "\"");
}

double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + " expects a number, got \"" + v + "\"");
}

void apply_config_entry(TrainSpec& s, const std::string& key, const std::string& v) {
  RunConfig& cfg = s.cfg;
  if (key == "task") {
    cfg.task = task_from_name(v);
  } else if (key == "encoder") {
    cfg.encoder = encoder_from_name(v);
  } else if (key == "joint-with") {
    cfg.joint_with = joint_from_name(v);
  } else if (key == "optimizer") {
    cfg.optimizer = v;
  } else if (key == "d-embed") {
    cfg.d_embed = config_int(key, v);
  } else if (key == "d-enc") {
    cfg.d_enc = config_int(key, v);
  } else if (key == "d-comp") {
    cfg.d_comp = config_int(key, v);
  } else if (key == "mlp-hidden") {
    cfg.mlp_hidden = config_int(key, v);
  } else if (key == "lr") {
    cfg.lr = config_double(key, v);
  } else if (key == "beta1") {
    cfg.beta1 = config_double(key, v);
  } else if (key == "beta2") {
    cfg.beta2 = config_double(key, v);
  } else if (key == "rho") {
    cfg.rho = config_double(key, v);
  } else if (key == "eps") {
    cfg.eps = config_double(key, v);
  } else if (key == "dropout") {
    cfg.dropout = config_double(key, v);
  } else if (key == "batch-size") {
    cfg.batch_size = config_int(key, v);
  } else if (key == "epochs") {
    cfg.epochs = config_int(key, v);
  } else if (key == "seed") {
    cfg.seed = static_cast<unsigned>(config_int(key, v));
  } else if (key == "lowercase") {
    cfg.lowercase = config_bool(key, v);
  } else if (key == "phrase-level") {
    cfg.phrase_level = config_bool(key, v);
  } else if (key == "train") {
    cfg.train_path = v;
  } else if (key == "dev") {
    cfg.dev_path = v;
  } else if (key == "embeddings") {
    cfg.embeddings_path = v;
  } else if (key == "out") {
    cfg.out_dir = v;
  } else if (key == "metrics") {
    s.metrics = v;
  } else if (key == "trials") {
    s.trials = config_int(key, v);
  } else {
    throw ConfigError("unknown config key \"" + key + "\"");
  }
}

// Precedence: task defaults, then config file entries in order, then
// command-line flags.
TrainSpec merge_train_spec(const TrainArgs& a) {
  ConfigEntries entries;
  if (!a.config.empty()) entries = read_config_file(a.config);

  std::string task = "nli";
  if (a.o_task->count()) {
    task = a.task;
  } else {
    for (const auto& [key, value] : entries) {
      if (key == "task") task = value;
    }
  }
  TrainSpec s;
  s.cfg = RunConfig::defaults(task_from_name(task));
  for (const auto& [key, value] : entries) apply_config_entry(s, key, value);

  RunConfig& cfg = s.cfg;
  if (a.o_task->count()) cfg.task = task_from_name(a.task);
  if (a.o_encoder->count()) cfg.encoder = encoder_from_name(a.encoder);
  if (a.o_joint->count()) cfg.joint_with = joint_from_name(a.joint);
  if (a.o_optimizer->count()) cfg.optimizer = a.optimizer;
  if (a.o_d_embed->count()) cfg.d_embed = a.d_embed;
  if (a.o_d_enc->count()) cfg.d_enc = a.d_enc;
  if (a.o_d_comp->count()) cfg.d_comp = a.d_comp;
  if (a.o_mlp_hidden->count()) cfg.mlp_hidden = a.mlp_hidden;
  if (a.o_lr->count()) cfg.lr = a.lr;
  if (a.o_beta1->count()) cfg.beta1 = a.beta1;
  if (a.o_beta2->count()) cfg.beta2 = a.beta2;
  if (a.o_rho->count()) cfg.rho = a.rho;
  if (a.o_eps->count()) cfg.eps = a.eps;
  if (a.o_dropout->count()) cfg.dropout = a.dropout;
  if (a.o_batch->count()) cfg.batch_size = a.batch;
  if (a.o_epochs->count()) cfg.epochs = a.epochs;
  if (a.o_seed->count()) cfg.seed = a.seed;
  if (a.o_lowercase->count()) cfg.lowercase = true;
  if (a.o_phrase_level->count()) cfg.phrase_level = true;
  if (a.o_train->count()) cfg.train_path = a.train;
  if (a.o_dev->count()) cfg.dev_path = a.dev;
  if (a.o_embeddings->count()) cfg.embeddings_path = a.embeddings;
  if (a.o_out->count()) cfg.out_dir = a.out;
  if (a.o_metrics->count()) s.metrics = a.metrics;
  if (a.o_trials->count()) s.trials = a.trials;

  if (cfg.train_path.empty()) throw ConfigError("a training corpus is required (--train)");
  if (cfg.dev_path.empty()) throw ConfigError("a development corpus is required (--dev)");
  if (cfg.out_dir.empty()) throw ConfigError("an output directory is required (--out)");
  if (s.trials < 1) throw ConfigError("trials must be at least 1");
  cfg.train_path = resolve_data_path(cfg.train_path);
  cfg.dev_path = resolve_data_path(cfg.dev_path);
  cfg.embeddings_path = resolve_data_path(cfg.embeddings_path);
  return s;
}

int cmd_train(const TrainArgs& a) {
  TrainSpec spec = merge_train_spec(a);
  RunConfig& cfg = spec.cfg;
  validate(cfg);

  std::vector<NliExample> nli_train, nli_dev;
  std::vector<ParseTree> sa_train, sa_dev;
  if (cfg.task == TaskKind::Nli) {
    nli_train = load_snli(cfg.train_path, cfg.lowercase);
    nli_dev = load_snli(cfg.dev_path, cfg.lowercase);
  } else {
    sa_train = load_sst(cfg.train_path, !cfg.phrase_level, cfg.lowercase);
    sa_dev = load_sst(cfg.dev_path, true, cfg.lowercase);
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::string metrics_path =
      spec.metrics.empty() ? (std::filesystem::path(cfg.out_dir) / "metrics.jsonl").string()
                           : spec.metrics;
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw DataError("cannot write metrics log " + metrics_path);

  auto clone_trees = [](const std::vector<ParseTree>& src) {
    std::vector<ParseTree> out;
    out.reserve(src.size());
    for (const ParseTree& tree : src) out.push_back(clone_tree(tree));
    return out;
  };
  auto run_trial = [&](const RunConfig& c) {
    if (c.task == TaskKind::Nli) {
      Trainer trainer(c, nli_train, nli_dev);
      return trainer.run(&metrics);
    }
    Trainer trainer(c, clone_trees(sa_train), clone_trees(sa_dev));
    return trainer.run(&metrics);
  };

  std::vector<double> best_accs;
  for (int trial = 0; trial < spec.trials; ++trial) {
    RunConfig c = cfg;
    if (spec.trials > 1) {
      c.seed = static_cast<unsigned>(trial);
      c.out_dir = (std::filesystem::path(cfg.out_dir) / ("trial" + std::to_string(trial))).string();
    }
    TrainOutcome outcome = run_trial(c);
    best_accs.push_back(outcome.best_dev_acc);
    if (spec.trials > 1) {
      metrics << nlohmann::json{{"trial", trial},
                                {"seed", c.seed},
                                {"best_dev_acc", outcome.best_dev_acc},
                                {"best_epoch", outcome.best_epoch}}
                     .dump()
              << "\n"
              << std::flush;
      std::printf("trial %d (seed %u): best dev accuracy %.1f%% at epoch %d -> %s\n", trial,
                  c.seed, 100.0 * outcome.best_dev_acc, outcome.best_epoch,
                  outcome.checkpoint_path.c_str());
    } else {
      std::printf("best dev accuracy %.1f%% at epoch %d -> %s\n", 100.0 * outcome.best_dev_acc,
                  outcome.best_epoch, outcome.checkpoint_path.c_str());
    }
  }
  if (spec.trials > 1) {
    double mean = 0.0;
    for (double acc : best_accs) mean += acc;
    mean /= static_cast<double>(best_accs.size());
    double var = 0.0;
    for (double acc : best_accs) var += (acc - mean) * (acc - mean);
    var /= static_cast<double>(best_accs.size() - 1);
    std::printf("%d trials (seeds 0..%d): dev accuracy %.1f%% +- %.1f%%\n", spec.trials,
                spec.trials - 1, 100.0 * mean, 100.0 * std::sqrt(var));
  }
  std::printf("metrics -> %s\n", metrics_path.c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, task;
};

int cmd_eval(const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  if (!a.task.empty() && task_from_name(a.task) != ck.config.task) {
    throw ConfigError("checkpoint task " + std::string(task_name(ck.config.task)) +
                      " does not match requested task " + a.task);
  }
  TaskModel model = restore_model(ck);

  EvalResult res;
  const std::string data_path = resolve_data_path(a.data);
  if (ck.config.task == TaskKind::Nli) {
    std::vector<NliExample> examples = load_snli(data_path, ck.config.lowercase);
    res = evaluate(model, examples);
  } else {
    std::vector<ParseTree> trees = load_sst(data_path, true, ck.config.lowercase);
    res = evaluate(model, trees);
  }

  std::printf("accuracy %.1f%% (%ld/%ld)\n", 100.0 * res.accuracy(), res.correct, res.total);
  std::printf("confusion matrix (rows gold, columns predicted)\n");
  auto class_label = [&](int i) {
    return ck.config.task == TaskKind::Nli ? nli_label_name(i) : std::to_string(i);
  };
  int width = 0;
  for (int i = 0; i < res.classes; ++i) {
    width = std::max(width, static_cast<int>(class_label(i).size()));
  }
  width = std::max(width, 8);
  std::printf("%*s", width + 2, "");
  for (int p = 0; p < res.classes; ++p) std::printf("  %*s", width, class_label(p).c_str());
  std::printf("\n");
  for (int g = 0; g < res.classes; ++g) {
    std::printf("%*s", width + 2, class_label(g).c_str());
    for (int p = 0; p < res.classes; ++p) std::printf("  %*ld", width, res.at(g, p));
    std::printf("\n");
  }
  return 0;
}

struct InspectArgs {
  std::string checkpoint, sentences_file, format = "ansi", out;
  std::vector<std::string> sentences;
};

int cmd_inspect(const InspectArgs& a) {
  if (a.format != "ansi" && a.format != "html") {
    throw ConfigError("unknown format \"" + a.format + "\" (expected ansi or html)");
  }
  Checkpoint ck = load_checkpoint(a.checkpoint);
  TaskModel model = restore_model(ck);
  if (!model.traces_chunks()) {
    throw CapabilityError("checkpoint encoder " + std::string(encoder_name(ck.config.encoder)) +
                          " has no chunk detection layer");
  }

  std::vector<std::vector<std::string>> token_lines;
  auto add_sentence = [&](const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    if (!tokens.empty()) token_lines.push_back(std::move(tokens));
  };
  for (const std::string& s : a.sentences) add_sentence(s);
  if (!a.sentences_file.empty()) {
    const std::string path = resolve_data_path(a.sentences_file);
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    while (std::getline(in, line)) add_sentence(line);
  }
  if (token_lines.empty()) throw ConfigError("no sentences given (use --sentence or --sentences)");

  std::vector<std::vector<int>> ids;
  for (auto& tokens : token_lines) {
    std::vector<int> row;
    for (std::string& tok : tokens) {
      if (ck.config.lowercase) {
        for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      row.push_back(model.vocab().id_of(tok));
    }
    ids.push_back(std::move(row));
  }

  Tape tape;
  std::vector<EncoderOutput> encoded = model.encode(tape, SequenceBatch::from_ids(ids));
  std::vector<ChunkLine> lines;
  for (std::size_t s = 0; s < encoded.size(); ++s) {
    const ChunkTrace& trace = *encoded[s].chunk_trace;
    ChunkLine line;
    for (std::size_t t = 0; t < token_lines[s].size(); ++t) {
      line.push_back({token_lines[s][t], trace.r[t]});
    }
    lines.push_back(std::move(line));
  }

  const std::string rendered = a.format == "ansi" ? heatmap_ansi(lines) : heatmap_html(lines);
  if (a.out.empty()) {
    std::cout << rendered;
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw DataError("cannot write " + a.out);
    out << rendered;
    std::printf("heatmap -> %s\n", a.out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence modeling workbench with latent chunk detection"};
  app.require_subcommand(1);

  TrainArgs targs;
  CLI::App* train = app.add_subcommand("train", "train a model and retain the best-dev checkpoint");
  train->add_option("--config", targs.config,
                    "key=value file with any train option; command-line flags win");
  targs.o_task = train->add_option("--task", targs.task, "task: nli | sa (default nli)");
  targs.o_encoder =
      train->add_option("--encoder", targs.encoder,
                        "encoder: lstm1 | blstm1 | lstm2 | blstm2 | tree | snelsd (default snelsd)");
  targs.o_joint = train->add_option(
      "--joint-with", targs.joint, "per-position companion encoding: none | word-embedding | blstm1");
  targs.o_d_embed = train->add_option("--d-embed", targs.d_embed, "word vector width (default 300)");
  targs.o_d_enc = train->add_option("--d-enc", targs.d_enc,
                                    "encoder hidden units per direction (default 300)");
  targs.o_d_comp = train->add_option("--d-comp", targs.d_comp,
                                     "inference composition units per direction (default 300)");
  targs.o_mlp_hidden =
      train->add_option("--mlp-hidden", targs.mlp_hidden, "classifier hidden width (0: head default)");
  targs.o_optimizer =
      train->add_option("--optimizer", targs.optimizer, "adam | adadelta (default: task setup)");
  targs.o_lr = train->add_option("--lr", targs.lr, "adam learning rate (default 0.0004)");
  targs.o_beta1 = train->add_option("--beta1", targs.beta1, "adam first momentum (default 0.9)");
  targs.o_beta2 = train->add_option("--beta2", targs.beta2, "adam second momentum (default 0.999)");
  targs.o_rho = train->add_option("--rho", targs.rho, "adadelta decay (default 0.95)");
  targs.o_eps = train->add_option("--eps", targs.eps, "optimizer epsilon (task default)");
  targs.o_dropout = train->add_option(
      "--dropout", targs.dropout, "embedding and classifier-input dropout (nli 0.5, sa 0)");
  targs.o_batch = train->add_option("--batch-size", targs.batch, "examples per update (nli 128, sa 16)");
  targs.o_epochs = train->add_option("--epochs", targs.epochs, "training epochs (default 10)");
  targs.o_seed = train->add_option("--seed", targs.seed, "run seed (default 0)");
  targs.o_lowercase = train->add_flag("--lowercase", targs.lowercase, "lowercase corpus tokens");
  targs.o_phrase_level =
      train->add_flag("--phrase-level", targs.phrase_level,
                      "sentiment: train on every labeled subtree (dev stays sentence-level)");
  targs.o_train = train->add_option("--train", targs.train, "training corpus (required)");
  targs.o_dev = train->add_option("--dev", targs.dev, "development corpus (required)");
  targs.o_embeddings =
      train->add_option("--embeddings", targs.embeddings, "pre-trained word vector file");
  targs.o_out =
      train->add_option("--out", targs.out, "output directory for checkpoint and metrics (required)");
  targs.o_metrics =
      train->add_option("--metrics", targs.metrics, "metrics log path (default <out>/metrics.jsonl)");
  targs.o_trials = train->add_option(
      "--trials", targs.trials, "repeat training with seeds 0..N-1 and report mean and deviation");

  EvalArgs eargs;
  CLI::App* eval = app.add_subcommand("eval", "report accuracy and a confusion matrix");
  eval->add_option("--checkpoint", eargs.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eargs.data, "corpus to evaluate")->required();
  eval->add_option("--task", eargs.task, "expected task; errors when the checkpoint differs");

  InspectArgs iargs;
  CLI::App* inspect =
      app.add_subcommand("inspect-chunks", "render chunk-boundary heatmaps for sentences");
  inspect->add_option("--checkpoint", iargs.checkpoint, "checkpoint file (snelsd encoder)")
      ->required();
  inspect->add_option("--sentence", iargs.sentences, "sentence to inspect (repeatable)");
  inspect->add_option("--sentences", iargs.sentences_file, "file with one sentence per line");
  inspect->add_option("--format", iargs.format, "ansi | html")->capture_default_str();
  inspect->add_option("--out", iargs.out, "write the rendering here instead of stdout");

  int rc = 0;
  train->callback([&] { rc = cmd_train(targs); });
  eval->callback([&] { rc = cmd_eval(eargs); });
  inspect->callback([&] { rc = cmd_inspect(iargs); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "snelsd: error: usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const snelsd::Error& e) {
    std::cerr << "snelsd: error: " << error_kind(e) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "snelsd: error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return rc;
}
