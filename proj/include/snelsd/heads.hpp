// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "snelsd/encoders.hpp"

// Task heads on top of the encoders: the inference head (soft alignment,
// inference collection, composition BLSTM, pooled MLP classifier over 3
// classes) and the pooled sentiment classifier over 5 classes. Both heads
// pool over valid positions only and break max-pooling ties to the lowest
// index.

namespace snelsd {

// Soft alignment between two encoded sequences. e_ij = a_i . b_j; each row
// of one side is aligned to the masked-softmax mixture of the other side's
// rows. Masked positions are excluded from normalization.
std::pair<Tensor, Tensor> soft_align(const Tensor& a_bar, const Tensor& b_bar,
                                     const Tensor& mask_a, const Tensor& mask_b);

// Per-row [bar; tilde; bar - tilde; bar * tilde], width 4 d.
Tensor inference_collect(const Tensor& bar, const Tensor& tilde);

// Dropout on the pooled feature vector feeding the classifier MLP.
struct HeadOptions {
  double mlp_dropout = 0.0;
  DropoutMode mode = DropoutMode::Eval;
  Rng* rng = nullptr;  // required in train mode with a nonzero rate
};

struct NliHeadConfig {
  int d_enc = 0;         // width of each encoder state row
  int d_comp = 300;      // composition hidden units per direction
  int reduce_width = 0;  // > 0: ReLU projection of collected features to this width
  int aux_width = 0;     // > 0: width of a second encoding joined after collection
  int mlp_hidden = 0;    // 0 defaults to the composition input width
};

struct NliHeadParams {
  NliHeadConfig cfg;
  std::optional<Parameter> W_r, b_r;  // engaged iff cfg.reduce_width > 0
  ChainParams composition;
  Parameter W_h, b_h;
  Parameter W_o, b_o;  // 3 output classes

  NliHeadParams(const std::string& prefix, const NliHeadConfig& config);
  int collect_width() const { return 4 * cfg.d_enc; }
  int comp_input() const {
    return (cfg.reduce_width > 0 ? cfg.reduce_width : collect_width()) + cfg.aux_width;
  }
  int hidden_width() const { return cfg.mlp_hidden > 0 ? cfg.mlp_hidden : comp_input(); }
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
};

// Probability 3-vector over the inference classes. When the head is
// configured with aux_width > 0, both aux encodings are required and are
// concatenated to the collected (and possibly reduced) features ahead of
// composition.
Tensor nli_forward(const EncoderOutput& premise, const EncoderOutput& hypothesis,
                   NliHeadParams& head, const EncoderOutput* aux_premise = nullptr,
                   const EncoderOutput* aux_hypothesis = nullptr, const HeadOptions& opt = {});

struct SaHeadConfig {
  int d_enc = 0;
  int mlp_hidden = 0;  // 0 defaults to d_enc
};

struct SaHeadParams {
  SaHeadConfig cfg;
  Parameter W_h, b_h;
  Parameter W_o, b_o;  // 5 output classes

  SaHeadParams(const std::string& prefix, const SaHeadConfig& config);
  int hidden_width() const { return cfg.mlp_hidden > 0 ? cfg.mlp_hidden : cfg.d_enc; }
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
};

// Probability 5-vector over the sentiment classes.
Tensor sa_forward(const EncoderOutput& sentence, SaHeadParams& head, const HeadOptions& opt = {});

}  // namespace snelsd
