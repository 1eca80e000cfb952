// SPDX-License-Identifier: Apache-2.0
#include "snelsd/data.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace snelsd {

namespace {

const std::string kLabelNames[kNliClasses] = {"entailment", "neutral", "contradiction"};

std::string lower_ascii(std::string s) {
  for (char& chr : s) chr = static_cast<char>(std::tolower(static_cast<unsigned char>(chr)));
  return s;
}

std::vector<std::string> split_ws(const std::string& text, bool lowercase) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(lowercase ? lower_ascii(tok) : tok);
  return out;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

[[noreturn]] void parse_fail(const std::string& what, int line) { throw ParseError(what, line); }

}  // namespace

int nli_label_id(const std::string& name) {
  for (int i = 0; i < kNliClasses; ++i) {
    if (name == kLabelNames[i]) return i;
  }
  throw DataError("unknown inference label \"" + name + "\"");
}

const std::string& nli_label_name(int label) {
  if (label < 0 || label >= kNliClasses) {
    throw DataError("inference label id " + std::to_string(label) + " out of range");
  }
  return kLabelNames[label];
}

Vocab::Vocab() : Vocab(std::vector<std::string>{"<pad>", "<unk>"}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) throw DataError("vocab needs the two reserved entries");
  index_.reserve(tokens_.size());
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    if (!index_.emplace(tokens_[static_cast<std::size_t>(i)], i).second) {
      throw DataError("duplicate vocab token \"" + tokens_[static_cast<std::size_t>(i)] + "\"");
    }
  }
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return index_.count(token) != 0; }

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw ContractError("vocab id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

namespace {

struct RawPair {
  std::string label, premise, hypothesis;
};

bool take_record(const RawPair& raw, bool lowercase, int line, std::vector<NliExample>& out) {
  if (raw.label == "-") return false;
  NliExample ex;
  ex.label = nli_label_id(raw.label);
  ex.premise = split_ws(raw.premise, lowercase);
  ex.hypothesis = split_ws(raw.hypothesis, lowercase);
  if (ex.premise.empty() || ex.hypothesis.empty()) {
    throw DataError("empty sentence in record at line " + std::to_string(line));
  }
  out.push_back(std::move(ex));
  return true;
}

std::vector<NliExample> load_snli_jsonl(std::ifstream& in, bool lowercase) {
  std::vector<NliExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      parse_fail("malformed record", lineno);
    }
    if (!rec.contains("gold_label") || !rec.contains("sentence1") || !rec.contains("sentence2") ||
        !rec["gold_label"].is_string() || !rec["sentence1"].is_string() ||
        !rec["sentence2"].is_string()) {
      parse_fail("record is missing gold_label/sentence1/sentence2", lineno);
    }
    take_record({rec["gold_label"].get<std::string>(), rec["sentence1"].get<std::string>(),
                 rec["sentence2"].get<std::string>()},
                lowercase, lineno, out);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<NliExample> load_snli_tsv(std::ifstream& in, const std::string& header,
                                      bool lowercase) {
  const std::vector<std::string> names = split_tabs(header);
  int col_label = -1, col_s1 = -1, col_s2 = -1;
  for (int i = 0; i < static_cast<int>(names.size()); ++i) {
    if (names[static_cast<std::size_t>(i)] == "gold_label") col_label = i;
    if (names[static_cast<std::size_t>(i)] == "sentence1") col_s1 = i;
    if (names[static_cast<std::size_t>(i)] == "sentence2") col_s2 = i;
  }
  if (col_label < 0 || col_s1 < 0 || col_s2 < 0) {
    parse_fail("header is missing gold_label/sentence1/sentence2", 1);
  }
  const int need = std::max({col_label, col_s1, col_s2}) + 1;
  std::vector<NliExample> out;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cols = split_tabs(line);
    if (static_cast<int>(cols.size()) < need) parse_fail("record has too few columns", lineno);
    take_record({cols[static_cast<std::size_t>(col_label)], cols[static_cast<std::size_t>(col_s1)],
                 cols[static_cast<std::size_t>(col_s2)]},
                lowercase, lineno, out);
  }
  return out;
}

}  // namespace

std::vector<NliExample> load_snli(const std::string& path, bool lowercase) {
  std::ifstream in = open_or_throw(path);
  const auto start = in.tellg();
  std::string first;
  if (!std::getline(in, first)) throw DataError(path + " is empty");
  const std::size_t head = first.find_first_not_of(" \t\r");
  if (head != std::string::npos && first[head] == '{') {
    in.seekg(start);
    return load_snli_jsonl(in, lowercase);
  }
  return load_snli_tsv(in, first, lowercase);
}

namespace {

struct SstParser {
  const std::string& line;
  int lineno;
  std::size_t pos = 0;

  void skip_spaces() {
    while (pos < line.size() && line[pos] == ' ') ++pos;
  }

  char peek() const { return pos < line.size() ? line[pos] : '\0'; }

  void expect(char want, const char* what) {
    if (peek() != want) parse_fail(what, lineno);
    ++pos;
  }

  int parse_label() {
    std::size_t end = pos;
    while (end < line.size() && std::isdigit(static_cast<unsigned char>(line[end]))) ++end;
    if (end == pos) parse_fail("expected a numeric label", lineno);
    int value = 0;
    std::from_chars(line.data() + pos, line.data() + end, value);
    if (end - pos > 1 || value > 4) {
      parse_fail("label " + line.substr(pos, end - pos) + " outside 0..4", lineno);
    }
    pos = end;
    return value;
  }

  ParseTree parse_node(bool lowercase) {
    expect('(', "expected '('");
    ParseTree node;
    node.label = parse_label();
    skip_spaces();
    if (peek() == '(') {
      node.left = std::make_unique<ParseTree>(parse_node(lowercase));
      skip_spaces();
      if (peek() == ')') parse_fail("internal node with one child", lineno);
      node.right = std::make_unique<ParseTree>(parse_node(lowercase));
      skip_spaces();
      if (peek() == '(') parse_fail("node with more than two children", lineno);
      expect(')', "unbalanced parentheses");
      return node;
    }
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '(' && line[end] != ')') ++end;
    if (end == pos) parse_fail("expected a token", lineno);
    node.token = line.substr(pos, end - pos);
    if (lowercase) node.token = lower_ascii(node.token);
    pos = end;
    skip_spaces();
    expect(')', "unbalanced parentheses");
    return node;
  }
};

void collect_phrases(const ParseTree& node, std::vector<ParseTree>& out) {
  if (node.leaf()) return;
  out.push_back(clone_tree(node));
  collect_phrases(*node.left, out);
  collect_phrases(*node.right, out);
}

}  // namespace

std::vector<ParseTree> load_sst(const std::string& path, bool sentence_level_only,
                                bool lowercase) {
  std::ifstream in = open_or_throw(path);
  std::vector<ParseTree> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    SstParser parser{line, lineno};
    parser.skip_spaces();
    ParseTree tree = parser.parse_node(lowercase);
    parser.skip_spaces();
    if (parser.pos != line.size()) parse_fail("trailing characters after the tree", lineno);
    if (sentence_level_only) {
      out.push_back(std::move(tree));
    } else {
      collect_phrases(tree, out);
    }
  }
  return out;
}

std::string render_sst(const ParseTree& tree) {
  std::string out = "(" + std::to_string(tree.label) + " ";
  if (tree.leaf()) {
    out += tree.token;
  } else {
    out += render_sst(*tree.left) + " " + render_sst(*tree.right);
  }
  return out + ")";
}

ParseTree clone_tree(const ParseTree& tree) {
  ParseTree out;
  out.label = tree.label;
  out.token = tree.token;
  out.token_id = tree.token_id;
  if (tree.left) out.left = std::make_unique<ParseTree>(clone_tree(*tree.left));
  if (tree.right) out.right = std::make_unique<ParseTree>(clone_tree(*tree.right));
  return out;
}

namespace {

void walk_leaves(const ParseTree& node, std::vector<std::string>& out) {
  if (node.leaf()) {
    out.push_back(node.token);
    return;
  }
  walk_leaves(*node.left, out);
  walk_leaves(*node.right, out);
}

}  // namespace

std::vector<std::string> tokens_of(const ParseTree& tree) {
  std::vector<std::string> out;
  walk_leaves(tree, out);
  return out;
}

void index_tree(ParseTree& tree, const Vocab& vocab) {
  if (tree.leaf()) {
    tree.token_id = vocab.id_of(tree.token);
    return;
  }
  index_tree(*tree.left, vocab);
  index_tree(*tree.right, vocab);
}

Vocab build_vocab(const std::vector<NliExample>& examples) {
  Vocab vocab;
  for (const NliExample& ex : examples) {
    for (const std::string& tok : ex.premise) vocab.add(tok);
    for (const std::string& tok : ex.hypothesis) vocab.add(tok);
  }
  return vocab;
}

Vocab build_vocab(const std::vector<ParseTree>& trees) {
  Vocab vocab;
  for (const ParseTree& tree : trees) {
    for (const std::string& tok : tokens_of(tree)) vocab.add(tok);
  }
  return vocab;
}

Parameter random_embeddings(const Vocab& vocab, int dim, unsigned seed) {
  Parameter emb("embedding", {vocab.size(), dim});
  Rng rng(seed);
  for (int id = 1; id < vocab.size(); ++id) {
    for (int j = 0; j < dim; ++j) {
      emb.value[static_cast<std::size_t>(id) * dim + j] = rng.gaussian(0.0, 0.1);
    }
  }
  return emb;
}

Parameter load_embeddings(const std::string& path, const Vocab& vocab, int dim, unsigned seed) {
  Parameter emb = random_embeddings(vocab, dim, seed);
  std::ifstream in = open_or_throw(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t word_end = line.find(' ');
    if (word_end == std::string::npos) parse_fail("expected a token and vector fields", lineno);
    int fields = 0;
    bool in_field = false;
    for (std::size_t i = word_end + 1; i < line.size(); ++i) {
      const bool space = line[i] == ' ';
      fields += !space && !in_field;
      in_field = !space;
    }
    if (fields != dim) {
      parse_fail("expected " + std::to_string(dim) + " fields, found " + std::to_string(fields),
                 lineno);
    }
    const std::string word = line.substr(0, word_end);
    if (!vocab.contains(word)) continue;
    const int id = vocab.id_of(word);
    std::size_t pos = word_end;
    for (int j = 0; j < dim; ++j) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ') ++end;
      double value = 0.0;
      const auto res = std::from_chars(line.data() + pos, line.data() + end, value);
      if (res.ec != std::errc() || res.ptr != line.data() + end) {
        parse_fail("bad float in field " + std::to_string(j + 1), lineno);
      }
      emb.value[static_cast<std::size_t>(id) * dim + j] = value;
      pos = end;
    }
  }
  for (int j = 0; j < dim; ++j) emb.value[static_cast<std::size_t>(j)] = 0.0;
  return emb;
}

namespace {

std::vector<int> batch_order(std::size_t n, unsigned seed, bool shuffle) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }
  return order;
}

std::vector<int> to_ids(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(vocab.id_of(tok));
  return ids;
}

}  // namespace

std::vector<NliBatch> batchify_nli(const std::vector<NliExample>& examples, const Vocab& vocab,
                                   int batch_size, unsigned seed, bool shuffle) {
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  const std::vector<int> order = batch_order(examples.size(), seed, shuffle);
  std::vector<NliBatch> out;
  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
    NliBatch batch;
    std::vector<std::vector<int>> prem, hyp;
    for (std::size_t i = at; i < stop; ++i) {
      const NliExample& ex = examples[static_cast<std::size_t>(order[i])];
      prem.push_back(to_ids(ex.premise, vocab));
      hyp.push_back(to_ids(ex.hypothesis, vocab));
      batch.labels.push_back(ex.label);
    }
    batch.premise = SequenceBatch::from_ids(prem);
    batch.hypothesis = SequenceBatch::from_ids(hyp);
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<SaBatch> batchify_sa(const std::vector<ParseTree>& trees, const Vocab& vocab,
                                 int batch_size, unsigned seed, bool shuffle) {
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  const std::vector<int> order = batch_order(trees.size(), seed, shuffle);
  std::vector<SaBatch> out;
  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
    SaBatch batch;
    std::vector<std::vector<int>> sents;
    for (std::size_t i = at; i < stop; ++i) {
      const ParseTree& tree = trees[static_cast<std::size_t>(order[i])];
      sents.push_back(to_ids(tokens_of(tree), vocab));
      batch.labels.push_back(tree.label);
      batch.index.push_back(order[i]);
    }
    batch.sentences = SequenceBatch::from_ids(sents);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace snelsd
