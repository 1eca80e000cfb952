// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "snelsd/cells.hpp"
#include "snelsd/optim.hpp"
#include "snelsd/sequence.hpp"
#include "snelsd/tree.hpp"

// Whole-sentence encoders. Batched recurrences step over time on the whole
// batch; per-row mask gating carries state unchanged past a sentence's end,
// so a sentence's states are independent of how much padding surrounds it.
// Outputs are sliced back to true sentence length, one EncoderOutput per
// sentence.

namespace snelsd {

// Boundary indicators r_1..r_l for one sentence, strictly inside (0, 1).
struct ChunkTrace {
  std::vector<double> r;
};

struct EncoderOutput {
  Tensor states;  // l x d_out, one row per token (or per tree node)
  Tensor mask;    // l, entries in {0,1}
  std::optional<ChunkTrace> chunk_trace;  // present iff a detection layer ran
};

struct EncodeOptions {
  double embed_dropout = 0.0;
  DropoutMode mode = DropoutMode::Eval;
  Rng* rng = nullptr;  // required in train mode with a nonzero rate
};

// Stacked (1 or 2 layer) unidirectional or bidirectional LSTM chains.
// The backward direction reads the reversed valid subsequence.
struct ChainParams {
  int d_in = 0;
  int d_h = 0;
  int layers = 1;
  bool bidirectional = false;
  std::vector<LstmParams> fwd;  // one per layer
  std::vector<LstmParams> bwd;  // one per layer when bidirectional

  ChainParams() = default;
  ChainParams(const std::string& prefix, int d_in, int d_h, int layers, bool bidirectional);
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
  int d_out() const { return bidirectional ? 2 * d_h : d_h; }
};

// Raw word vectors as states, one row per token.
std::vector<EncoderOutput> embed_sequence(Tape& tape, const SequenceBatch& batch,
                                          Parameter& emb, const EncodeOptions& opt = {});

std::vector<EncoderOutput> encode_chain(Tape& tape, const SequenceBatch& batch, Parameter& emb,
                                        ChainParams& params, const EncodeOptions& opt = {});

enum class TreeMode {
  AllNodes,  // states = every internal node's h, left-to-right post-order
  RootOnly,  // states = the root h alone
};

EncoderOutput encode_tree(Tape& tape, const ParseTree& tree, Parameter& emb,
                          TreeLstmParams& params, TreeMode mode,
                          const EncodeOptions& opt = {});

// Detection layer left to right (r_0 = 1, p_0 = 0, zero lookahead at the
// last token) followed by the description layer. chunk_trace holds each
// sentence's boundary indicators. clamp_boundaries forces every r_t to 1,
// which reduces the encoder to a tanh projection feeding a plain LSTM.
std::vector<EncoderOutput> encode_snelsd(Tape& tape, const SequenceBatch& batch, Parameter& emb,
                                         DetectParams& detect, DescribeParams& describe,
                                         const EncodeOptions& opt = {},
                                         bool clamp_boundaries = false);

// Position-wise concatenation of two encodings of the same sentence; the
// chunk trace of the primary encoder is passed through.
EncoderOutput encode_joint(const EncoderOutput& primary, const EncoderOutput& aux);

// Runs the chain over the rows of an already-built [l x d_in] feature matrix
// (a single sequence). mask is a 0/1 vector of length l; masked rows never
// enter the recurrent state, so the result is padding-independent like the
// batched encoders.
Tensor encode_rows(Tape& tape, const Tensor& features, const Tensor& mask, ChainParams& params);

}  // namespace snelsd
