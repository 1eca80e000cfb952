// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "snelsd/sequence.hpp"
#include "snelsd/tensor.hpp"
#include "snelsd/tree.hpp"

// Corpus ingestion and batch construction. Both corpora ship pre-tokenized;
// tokenization is whitespace splitting with no extra normalization (an
// optional lowercase flag covers embedding tables with lowercased keys).
// Label orderings are fixed: inference entailment=0, neutral=1,
// contradiction=2; sentiment labels 0..4 as printed in the trees.

namespace snelsd {

struct NliExample {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  int label = -1;
};

inline constexpr int kNliClasses = 3;
inline constexpr int kSaClasses = 5;

// Throws DataError for anything outside the three classes.
int nli_label_id(const std::string& name);
const std::string& nli_label_name(int label);

// Token/id maps with reserved ids: pad = 0, unknown = 1. Ids are assigned in
// first-seen order, so the same corpus always yields the same mapping.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocab();
  explicit Vocab(std::vector<std::string> tokens);  // from a serialized list

  int add(const std::string& token);
  int id_of(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Line-delimited inference pairs, either JSON records or tab-separated
// columns with a header; the format is detected from the first line. Records
// whose gold label is "-" (no annotator consensus) are dropped.
std::vector<NliExample> load_snli(const std::string& path, bool lowercase = false);

// One parenthesized labeled binary tree per line, e.g. "(3 (2 no) (4 movement))".
// With sentence_level_only false, every internal subtree is also returned as
// its own example.
std::vector<ParseTree> load_sst(const std::string& path, bool sentence_level_only = true,
                                bool lowercase = false);

// Bracketed rendering; reproduces a loaded line byte-for-byte up to
// single-space normalization between fields.
std::string render_sst(const ParseTree& tree);

ParseTree clone_tree(const ParseTree& tree);
std::vector<std::string> tokens_of(const ParseTree& tree);
// Fills token_id on every leaf from the vocab (unknown id when absent).
void index_tree(ParseTree& tree, const Vocab& vocab);

Vocab build_vocab(const std::vector<NliExample>& examples);
Vocab build_vocab(const std::vector<ParseTree>& trees);

// Embedding table over the vocab: in-file rows copied verbatim, rows absent
// from the file drawn from Normal(0, 0.1^2) seeded per call, pad row zero.
// Every line must hold the token and exactly dim fields.
Parameter load_embeddings(const std::string& path, const Vocab& vocab, int dim, unsigned seed);

// Freshly drawn table for training without a pre-trained file.
Parameter random_embeddings(const Vocab& vocab, int dim, unsigned seed);

struct NliBatch {
  SequenceBatch premise;
  SequenceBatch hypothesis;
  std::vector<int> labels;
};

struct SaBatch {
  SequenceBatch sentences;
  std::vector<int> labels;  // root labels
  std::vector<int> index;   // positions in the source tree list
};

// Deterministic given seed; shuffle off preserves corpus order; the final
// partial batch is kept.
std::vector<NliBatch> batchify_nli(const std::vector<NliExample>& examples, const Vocab& vocab,
                                   int batch_size, unsigned seed, bool shuffle);
std::vector<SaBatch> batchify_sa(const std::vector<ParseTree>& trees, const Vocab& vocab,
                                 int batch_size, unsigned seed, bool shuffle);

}  // namespace snelsd
