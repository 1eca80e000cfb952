// SPDX-License-Identifier: Apache-2.0
#include "snelsd/encoders.hpp"

namespace snelsd {

namespace {

void check_batch(const SequenceBatch& batch) {
  if (batch.batch <= 0) throw EmptySequenceError("encode: batch holds no sentences");
  for (int b = 0; b < batch.batch; ++b) {
    if (batch.lengths[static_cast<std::size_t>(b)] <= 0) {
      throw EmptySequenceError("encode: sentence " + std::to_string(b) + " has no tokens");
    }
  }
}

void check_options(const EncodeOptions& opt) {
  if (opt.mode == DropoutMode::Train && opt.embed_dropout > 0.0 && opt.rng == nullptr) {
    throw ContractError("encode: train-mode dropout needs an rng");
  }
}

// Embedded column t of the batch, with embedding dropout in train mode.
Tensor embed_col(Tape& tape, const SequenceBatch& batch, Parameter& emb, int t,
                 const EncodeOptions& opt) {
  std::vector<int> ids(static_cast<std::size_t>(batch.batch));
  for (int b = 0; b < batch.batch; ++b) ids[static_cast<std::size_t>(b)] = batch.id_at(b, t);
  Tensor x = tape.embed(emb, ids);
  if (opt.mode == DropoutMode::Train && opt.embed_dropout > 0.0) {
    x = dropout(x, opt.embed_dropout, opt.mode, *opt.rng);
  }
  return x;
}

Tensor mask_col(Tape& tape, const SequenceBatch& batch, int t) {
  std::vector<double> m(static_cast<std::size_t>(batch.batch));
  for (int b = 0; b < batch.batch; ++b) m[static_cast<std::size_t>(b)] = batch.mask_at(b, t);
  return tape.leaf({batch.batch}, std::move(m));
}

std::vector<Tensor> embed_all(Tape& tape, const SequenceBatch& batch, Parameter& emb,
                              const EncodeOptions& opt) {
  std::vector<Tensor> xs(static_cast<std::size_t>(batch.max_len));
  for (int t = 0; t < batch.max_len; ++t) xs[static_cast<std::size_t>(t)] = embed_col(tape, batch, emb, t, opt);
  return xs;
}

std::vector<Tensor> mask_all(Tape& tape, const SequenceBatch& batch) {
  std::vector<Tensor> ms(static_cast<std::size_t>(batch.max_len));
  for (int t = 0; t < batch.max_len; ++t) ms[static_cast<std::size_t>(t)] = mask_col(tape, batch, t);
  return ms;
}

// One LSTM direction over the whole batch; returns the gated state at every
// time index. reverse starts at the last column, so state stays zero until
// each sentence's own span begins.
std::vector<Tensor> run_direction(Tape& tape, const std::vector<Tensor>& xs,
                                  const std::vector<Tensor>& masks, LstmParams& params,
                                  bool reverse) {
  LstmWeights w = params.bind(tape);
  const int b = xs[0].rows();
  Tensor h = tape.constant({b, params.d_h});
  Tensor c = tape.constant({b, params.d_h});
  std::vector<Tensor> states(xs.size());
  const int len = static_cast<int>(xs.size());
  for (int step = 0; step < len; ++step) {
    const int t = reverse ? len - 1 - step : step;
    State next = lstm_step(xs[static_cast<std::size_t>(t)], {h, c}, w);
    h = lerp_rows(masks[static_cast<std::size_t>(t)], next.h, h);
    c = lerp_rows(masks[static_cast<std::size_t>(t)], next.c, c);
    states[static_cast<std::size_t>(t)] = h;
  }
  return states;
}

std::vector<EncoderOutput> slice_sentences(Tape& tape, const SequenceBatch& batch,
                                           const std::vector<Tensor>& per_time) {
  std::vector<EncoderOutput> out;
  out.reserve(static_cast<std::size_t>(batch.batch));
  for (int b = 0; b < batch.batch; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    std::span<const Tensor> steps(per_time.data(), static_cast<std::size_t>(len));
    out.push_back({stack_rows(steps, b), tape.constant({len}, 1.0), std::nullopt});
  }
  return out;
}

}  // namespace

ChainParams::ChainParams(const std::string& prefix, int d_in_, int d_h_, int layers_,
                         bool bidirectional_)
    : d_in(d_in_), d_h(d_h_), layers(layers_), bidirectional(bidirectional_) {
  if (layers_ != 1 && layers_ != 2) {
    throw ConfigError("chain encoder supports 1 or 2 layers, got " + std::to_string(layers_));
  }
  int width = d_in_;
  for (int l = 0; l < layers_; ++l) {
    fwd.emplace_back(prefix + ".l" + std::to_string(l) + ".fwd", width, d_h_);
    if (bidirectional_) {
      bwd.emplace_back(prefix + ".l" + std::to_string(l) + ".bwd", width, d_h_);
    }
    width = d_out();
  }
}

void ChainParams::init(Rng& rng) {
  for (auto& p : fwd) p.init(rng);
  for (auto& p : bwd) p.init(rng);
}

std::vector<Parameter*> ChainParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : fwd) {
    for (Parameter* q : p.parameters()) out.push_back(q);
  }
  for (auto& p : bwd) {
    for (Parameter* q : p.parameters()) out.push_back(q);
  }
  return out;
}

std::vector<EncoderOutput> embed_sequence(Tape& tape, const SequenceBatch& batch,
                                          Parameter& emb, const EncodeOptions& opt) {
  check_batch(batch);
  check_options(opt);
  return slice_sentences(tape, batch, embed_all(tape, batch, emb, opt));
}

std::vector<EncoderOutput> encode_chain(Tape& tape, const SequenceBatch& batch, Parameter& emb,
                                        ChainParams& params, const EncodeOptions& opt) {
  check_batch(batch);
  check_options(opt);
  std::vector<Tensor> inputs = embed_all(tape, batch, emb, opt);
  const std::vector<Tensor> masks = mask_all(tape, batch);
  for (int layer = 0; layer < params.layers; ++layer) {
    std::vector<Tensor> f = run_direction(tape, inputs, masks, params.fwd[static_cast<std::size_t>(layer)], false);
    if (!params.bidirectional) {
      inputs = std::move(f);
      continue;
    }
    std::vector<Tensor> r = run_direction(tape, inputs, masks, params.bwd[static_cast<std::size_t>(layer)], true);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      inputs[t] = concat({f[t], r[t]}, 1);
    }
  }
  return slice_sentences(tape, batch, inputs);
}

namespace {

State tree_eval(Tape& tape, const ParseTree& node, Parameter& emb, const TreeLstmWeights& w,
                int d_in, int d_h, const EncodeOptions& opt, std::vector<Tensor>& collected) {
  if (node.leaf()) {
    Tensor x = tape.embed_row(emb, node.token_id);
    if (opt.mode == DropoutMode::Train && opt.embed_dropout > 0.0) {
      x = dropout(x, opt.embed_dropout, opt.mode, *opt.rng);
    }
    State zero = {tape.constant({d_h}), tape.constant({d_h})};
    return treelstm_node(x, zero, zero, w);
  }
  if (!node.left || !node.right) {
    throw MalformedTreeError("internal node with a single child");
  }
  State l = tree_eval(tape, *node.left, emb, w, d_in, d_h, opt, collected);
  State r = tree_eval(tape, *node.right, emb, w, d_in, d_h, opt, collected);
  State s = treelstm_node(tape.constant({d_in}), l, r, w);
  collected.push_back(s.h);
  return s;
}

}  // namespace

EncoderOutput encode_tree(Tape& tape, const ParseTree& tree, Parameter& emb,
                          TreeLstmParams& params, TreeMode mode, const EncodeOptions& opt) {
  check_options(opt);
  if (tree.leaf()) {
    throw MalformedTreeError("tree has a single leaf; need at least 2");
  }
  TreeLstmWeights w = params.bind(tape);
  std::vector<Tensor> internal;
  State root = tree_eval(tape, tree, emb, w, params.d_in, params.d_h, opt, internal);
  std::vector<Tensor> rows;
  if (mode == TreeMode::RootOnly) {
    rows.push_back(reshape(root.h, {1, params.d_h}));
  } else {
    rows.reserve(internal.size());
    for (const Tensor& h : internal) rows.push_back(reshape(h, {1, params.d_h}));
  }
  const int n = static_cast<int>(rows.size());
  return {concat(rows, 0), tape.constant({n}, 1.0), std::nullopt};
}

std::vector<EncoderOutput> encode_snelsd(Tape& tape, const SequenceBatch& batch, Parameter& emb,
                                         DetectParams& detect, DescribeParams& describe,
                                         const EncodeOptions& opt, bool clamp_boundaries) {
  check_batch(batch);
  check_options(opt);
  const int B = batch.batch;
  const std::vector<Tensor> xs = embed_all(tape, batch, emb, opt);
  const std::vector<Tensor> masks = mask_all(tape, batch);
  DetectWeights dw = detect.bind(tape);
  DescribeWeights sw = describe.bind(tape);

  Tensor p = tape.constant({B, detect.d_p});
  Tensor r = tape.constant({B}, 1.0);
  Tensor h = tape.constant({B, describe.lstm.d_h});
  Tensor c = tape.constant({B, describe.lstm.d_h});
  std::vector<Tensor> states(xs.size());
  std::vector<Tensor> boundaries(xs.size());
  const int len = batch.max_len;
  for (int t = 0; t < len; ++t) {
    Tensor x_next = t + 1 < len
                        ? scale_rows(xs[static_cast<std::size_t>(t + 1)], masks[static_cast<std::size_t>(t + 1)])
                        : tape.constant({B, detect.d_in});
    DetectOut det = detect_step(xs[static_cast<std::size_t>(t)], x_next, r, p, dw);
    if (clamp_boundaries) det.r = tape.constant({B}, 1.0);
    State next = describe_step(det.p, det.r, {h, c}, sw);
    p = det.p;
    r = det.r;
    h = lerp_rows(masks[static_cast<std::size_t>(t)], next.h, h);
    c = lerp_rows(masks[static_cast<std::size_t>(t)], next.c, c);
    states[static_cast<std::size_t>(t)] = h;
    boundaries[static_cast<std::size_t>(t)] = det.r;
  }

  std::vector<EncoderOutput> out = slice_sentences(tape, batch, states);
  for (int b = 0; b < B; ++b) {
    ChunkTrace trace;
    const int l = batch.lengths[static_cast<std::size_t>(b)];
    trace.r.reserve(static_cast<std::size_t>(l));
    for (int t = 0; t < l; ++t) trace.r.push_back(boundaries[static_cast<std::size_t>(t)].value(b));
    out[static_cast<std::size_t>(b)].chunk_trace = std::move(trace);
  }
  return out;
}

Tensor encode_rows(Tape& tape, const Tensor& features, const Tensor& mask, ChainParams& params) {
  if (features.ndim() != 2) throw DimensionError("encode_rows: features must be a matrix");
  if (features.cols() != params.d_in) {
    throw DimensionError("encode_rows: feature width " + std::to_string(features.cols()) +
                         " vs chain input " + std::to_string(params.d_in));
  }
  const int len = features.rows();
  if (mask.ndim() != 1 || mask.rows() != len) {
    throw DimensionError("encode_rows: mask length " + std::to_string(mask.rows()) + " vs " +
                         std::to_string(len) + " rows");
  }
  std::vector<Tensor> inputs(static_cast<std::size_t>(len));
  std::vector<Tensor> masks(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) {
    inputs[static_cast<std::size_t>(t)] = reshape(row(features, t), {1, params.d_in});
    masks[static_cast<std::size_t>(t)] = pick(mask, t);
  }
  for (int layer = 0; layer < params.layers; ++layer) {
    std::vector<Tensor> f = run_direction(tape, inputs, masks, params.fwd[static_cast<std::size_t>(layer)], false);
    if (!params.bidirectional) {
      inputs = std::move(f);
      continue;
    }
    std::vector<Tensor> r = run_direction(tape, inputs, masks, params.bwd[static_cast<std::size_t>(layer)], true);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      inputs[t] = concat({f[t], r[t]}, 1);
    }
  }
  return concat(inputs, 0);
}

EncoderOutput encode_joint(const EncoderOutput& primary, const EncoderOutput& aux) {
  if (primary.states.rows() != aux.states.rows()) {
    throw DimensionError("encode_joint: " + std::to_string(primary.states.rows()) + " vs " +
                         std::to_string(aux.states.rows()) + " positions");
  }
  EncoderOutput out;
  out.states = concat({primary.states, aux.states}, 1);
  out.mask = primary.mask;
  out.chunk_trace = primary.chunk_trace;
  return out;
}

}  // namespace snelsd
