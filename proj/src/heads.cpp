// SPDX-License-Identifier: Apache-2.0
#include "snelsd/heads.hpp"

namespace snelsd {

std::pair<Tensor, Tensor> soft_align(const Tensor& a_bar, const Tensor& b_bar,
                                     const Tensor& mask_a, const Tensor& mask_b) {
  if (a_bar.ndim() != 2 || b_bar.ndim() != 2 || a_bar.cols() != b_bar.cols()) {
    throw DimensionError("soft_align: state widths " + std::to_string(a_bar.cols()) + " vs " +
                         std::to_string(b_bar.cols()));
  }
  Tensor e = matmul_nt(a_bar, b_bar);
  Tensor a_tilde = matmul(masked_softmax_rows(e, mask_b), b_bar);
  Tensor b_tilde = matmul(masked_softmax_rows(transpose(e), mask_a), a_bar);
  return {a_tilde, b_tilde};
}

Tensor inference_collect(const Tensor& bar, const Tensor& tilde) {
  if (bar.shape() != tilde.shape()) {
    throw DimensionError("inference_collect: " + shape_str(bar.shape()) + " vs " +
                         shape_str(tilde.shape()));
  }
  return concat({bar, tilde, sub(bar, tilde), hadamard(bar, tilde)}, 1);
}

namespace {

const NliHeadConfig& check_nli_config(const NliHeadConfig& c) {
  if (c.d_enc < 1) throw ConfigError("nli head: encoder width must be positive");
  if (c.d_comp < 1) throw ConfigError("nli head: composition units must be positive");
  if (c.reduce_width < 0 || c.aux_width < 0 || c.mlp_hidden < 0) {
    throw ConfigError("nli head: widths must be nonnegative");
  }
  return c;
}

int comp_input_of(const NliHeadConfig& c) {
  return (c.reduce_width > 0 ? c.reduce_width : 4 * c.d_enc) + c.aux_width;
}

// v = [ave(x); ave(y); max(x); max(y)] over valid positions.
Tensor pool_pair(const Tensor& x, const Tensor& mask_x, const Tensor& y, const Tensor& mask_y) {
  return concat({masked_mean(x, mask_x), masked_mean(y, mask_y), masked_max(x, mask_x),
                 masked_max(y, mask_y)});
}

Tensor mlp_softmax(Tape& tape, Tensor v, Parameter& W_h, Parameter& b_h, Parameter& W_o,
                   Parameter& b_o, const HeadOptions& opt) {
  if (opt.mode == DropoutMode::Train && opt.mlp_dropout > 0.0) {
    if (opt.rng == nullptr) throw ContractError("head: train-mode dropout needs an rng");
    v = dropout(v, opt.mlp_dropout, opt.mode, *opt.rng);
  }
  Tensor hidden = tanh_act(affine(v, tape.use(W_h), tape.use(b_h)));
  return softmax_rows(affine(hidden, tape.use(W_o), tape.use(b_o)));
}

void check_nonempty(const EncoderOutput& out, const char* what) {
  if (!out.states.defined() || out.states.rows() < 1) {
    throw EmptySequenceError(std::string(what) + " encoding holds no states");
  }
}

}  // namespace

NliHeadParams::NliHeadParams(const std::string& prefix, const NliHeadConfig& config)
    : cfg(check_nli_config(config)),
      composition(prefix + ".comp", comp_input_of(cfg), cfg.d_comp, 1, true),
      W_h(prefix + ".W_h", {hidden_width(), 4 * composition.d_out()}),
      b_h(prefix + ".b_h", {hidden_width()}),
      W_o(prefix + ".W_o", {3, hidden_width()}),
      b_o(prefix + ".b_o", {3}) {
  if (cfg.reduce_width > 0) {
    W_r.emplace(prefix + ".W_r", std::vector<int>{cfg.reduce_width, collect_width()});
    b_r.emplace(prefix + ".b_r", std::vector<int>{cfg.reduce_width});
  }
}

void NliHeadParams::init(Rng& rng) {
  if (W_r) W_r->init_glorot(rng, collect_width(), cfg.reduce_width);
  composition.init(rng);
  W_h.init_glorot(rng, 4 * composition.d_out(), hidden_width());
  W_o.init_glorot(rng, hidden_width(), 3);
}

std::vector<Parameter*> NliHeadParams::parameters() {
  std::vector<Parameter*> out;
  if (W_r) {
    out.push_back(&*W_r);
    out.push_back(&*b_r);
  }
  for (Parameter* p : composition.parameters()) out.push_back(p);
  out.push_back(&W_h);
  out.push_back(&b_h);
  out.push_back(&W_o);
  out.push_back(&b_o);
  return out;
}

Tensor nli_forward(const EncoderOutput& premise, const EncoderOutput& hypothesis,
                   NliHeadParams& head, const EncoderOutput* aux_premise,
                   const EncoderOutput* aux_hypothesis, const HeadOptions& opt) {
  check_nonempty(premise, "premise");
  check_nonempty(hypothesis, "hypothesis");
  if (premise.states.cols() != head.cfg.d_enc) {
    throw DimensionError("nli_forward: state width " + std::to_string(premise.states.cols()) +
                         " vs configured " + std::to_string(head.cfg.d_enc));
  }
  const bool wants_aux = head.cfg.aux_width > 0;
  if (wants_aux != (aux_premise != nullptr && aux_hypothesis != nullptr)) {
    throw ContractError("nli_forward: aux encodings do not match the head configuration");
  }
  Tape& tape = *premise.states.tape();

  auto [a_tilde, b_tilde] =
      soft_align(premise.states, hypothesis.states, premise.mask, hypothesis.mask);
  Tensor m_a = inference_collect(premise.states, a_tilde);
  Tensor m_b = inference_collect(hypothesis.states, b_tilde);
  if (head.cfg.reduce_width > 0) {
    Tensor W = tape.use(*head.W_r), b = tape.use(*head.b_r);
    m_a = relu(affine(m_a, W, b));
    m_b = relu(affine(m_b, W, b));
  }
  if (wants_aux) {
    if (aux_premise->states.cols() != head.cfg.aux_width) {
      throw DimensionError("nli_forward: aux width " + std::to_string(aux_premise->states.cols()) +
                           " vs configured " + std::to_string(head.cfg.aux_width));
    }
    m_a = concat({m_a, aux_premise->states}, 1);
    m_b = concat({m_b, aux_hypothesis->states}, 1);
  }
  Tensor comp_a = encode_rows(tape, m_a, premise.mask, head.composition);
  Tensor comp_b = encode_rows(tape, m_b, hypothesis.mask, head.composition);
  Tensor v = pool_pair(comp_a, premise.mask, comp_b, hypothesis.mask);
  return mlp_softmax(tape, v, head.W_h, head.b_h, head.W_o, head.b_o, opt);
}

namespace {

const SaHeadConfig& check_sa_config(const SaHeadConfig& c) {
  if (c.d_enc < 1) throw ConfigError("sa head: encoder width must be positive");
  if (c.mlp_hidden < 0) throw ConfigError("sa head: hidden width must be nonnegative");
  return c;
}

}  // namespace

SaHeadParams::SaHeadParams(const std::string& prefix, const SaHeadConfig& config)
    : cfg(check_sa_config(config)),
      W_h(prefix + ".W_h", {hidden_width(), 2 * cfg.d_enc}),
      b_h(prefix + ".b_h", {hidden_width()}),
      W_o(prefix + ".W_o", {5, hidden_width()}),
      b_o(prefix + ".b_o", {5}) {}

void SaHeadParams::init(Rng& rng) {
  W_h.init_glorot(rng, 2 * cfg.d_enc, hidden_width());
  W_o.init_glorot(rng, hidden_width(), 5);
}

std::vector<Parameter*> SaHeadParams::parameters() { return {&W_h, &b_h, &W_o, &b_o}; }

Tensor sa_forward(const EncoderOutput& sentence, SaHeadParams& head, const HeadOptions& opt) {
  check_nonempty(sentence, "sentence");
  if (sentence.states.cols() != head.cfg.d_enc) {
    throw DimensionError("sa_forward: state width " + std::to_string(sentence.states.cols()) +
                         " vs configured " + std::to_string(head.cfg.d_enc));
  }
  Tape& tape = *sentence.states.tape();
  Tensor v = concat(
      {masked_mean(sentence.states, sentence.mask), masked_max(sentence.states, sentence.mask)});
  return mlp_softmax(tape, v, head.W_h, head.b_h, head.W_o, head.b_o, opt);
}

}  // namespace snelsd
