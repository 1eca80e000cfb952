// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "snelsd/encoders.hpp"

using namespace snelsd;
using namespace snelsd::testing;

namespace {

Parameter random_table(const std::string& name, int rows, int dim, Rng& rng) {
  Parameter emb(name, {rows, dim});
  emb.init_uniform(rng, -0.8, 0.8);
  for (int j = 0; j < dim; ++j) emb.value[static_cast<std::size_t>(j)] = 0.0;  // pad row
  return emb;
}

std::vector<double> sentence_embedding(const Parameter& emb, int id) {
  const int d = emb.shape[1];
  return std::vector<double>(emb.value.begin() + static_cast<long>(id) * d,
                             emb.value.begin() + static_cast<long>(id + 1) * d);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("length-1 unidirectional chain equals a single lstm step") {
  Rng rng(51);
  const int d = 4;
  Parameter emb = random_table("emb", 6, d, rng);
  ChainParams chain("chain", d, d, 1, false);
  chain.init(rng);
  Tape t;
  auto outs = encode_chain(t, SequenceBatch::from_ids({{3}}), emb, chain);
  REQUIRE(outs.size() == 1);
  CHECK(outs[0].states.rows() == 1);

  auto w = chain.fwd[0].bind(t);
  State zero = {t.constant({d}), t.constant({d})};
  auto [h, c] = lstm_step(t.leaf({d}, sentence_embedding(emb, 3)), zero, w);
  CHECK(max_abs_diff(row(outs[0].states, 0).values(), h.to_vector()) < 1e-12);
}

TEST_CASE("bidirectional chain at paper width doubles to 600") {
  Rng rng(52);
  Parameter emb = random_table("emb", 4, 300, rng);
  ChainParams chain("blstm", 300, 300, 1, true);
  chain.init(rng);
  Tape t;
  auto outs = encode_chain(t, SequenceBatch::from_ids({{2, 3}}), emb, chain);
  CHECK(outs[0].states.cols() == 600);
  CHECK(chain.d_out() == 600);
}

TEST_CASE("chain states are independent of batch padding") {
  Rng rng(53);
  const int d = 5;
  Parameter emb = random_table("emb", 12, d, rng);
  const std::vector<int> sent = {2, 7, 4};
  const std::vector<int> longer = {3, 5, 6, 8, 9, 10, 11};
  for (const bool bi : {false, true}) {
    for (const int layers : {1, 2}) {
      CAPTURE(bi);
      CAPTURE(layers);
      ChainParams chain("chain", d, d, layers, bi);
      chain.init(rng);
      Tape t;
      auto alone = encode_chain(t, SequenceBatch::from_ids({sent}), emb, chain);
      auto padded = encode_chain(t, SequenceBatch::from_ids({sent, longer}), emb, chain);
      REQUIRE(alone[0].states.size() == padded[0].states.size());
      CHECK(max_abs_diff(alone[0].states.values(), padded[0].states.to_vector()) < 1e-12);
    }
  }
}

TEST_CASE("chain rejects empty sentences") {
  Rng rng(54);
  Parameter emb = random_table("emb", 4, 3, rng);
  ChainParams chain("chain", 3, 3, 1, false);
  chain.init(rng);
  Tape t;
  CHECK_THROWS_AS(encode_chain(t, SequenceBatch::from_ids({{}}), emb, chain),
                  EmptySequenceError);
  CHECK_THROWS_AS(encode_chain(t, SequenceBatch::from_ids({}), emb, chain),
                  EmptySequenceError);
  CHECK_THROWS_AS(ChainParams("bad", 3, 3, 3, false), ConfigError);
}

namespace {

std::unique_ptr<ParseTree> leaf_node(int id) {
  auto n = std::make_unique<ParseTree>();
  n->token_id = id;
  return n;
}

std::unique_ptr<ParseTree> join(std::unique_ptr<ParseTree> l, std::unique_ptr<ParseTree> r) {
  auto n = std::make_unique<ParseTree>();
  n->left = std::move(l);
  n->right = std::move(r);
  return n;
}

}  // namespace

TEST_CASE("tree encoder counts internal nodes and rejects single leaves") {
  Rng rng(55);
  const int d = 3;
  Parameter emb = random_table("emb", 6, d, rng);
  TreeLstmParams params("tree", d, d);
  params.init(rng);
  Tape t;

  auto two = join(leaf_node(2), leaf_node(3));
  auto out = encode_tree(t, *two, emb, params, TreeMode::AllNodes);
  CHECK(out.states.rows() == 1);
  CHECK(out.states.cols() == d);

  auto single = leaf_node(2);
  CHECK_THROWS_AS(encode_tree(t, *single, emb, params, TreeMode::AllNodes), MalformedTreeError);
  CHECK_THROWS_AS(encode_tree(t, *single, emb, params, TreeMode::RootOnly), MalformedTreeError);
}

TEST_CASE("left- and right-branching trees over the same tokens differ") {
  Rng rng(56);
  const int d = 3;
  Parameter emb = random_table("emb", 6, d, rng);
  TreeLstmParams params("tree", d, d);
  params.init(rng);
  Tape t;
  // ((a b) c) vs (a (b c))
  auto left_branch = join(join(leaf_node(2), leaf_node(3)), leaf_node(4));
  auto right_branch = join(leaf_node(2), join(leaf_node(3), leaf_node(4)));
  auto lo = encode_tree(t, *left_branch, emb, params, TreeMode::RootOnly);
  auto ro = encode_tree(t, *right_branch, emb, params, TreeMode::RootOnly);
  CHECK(max_abs_diff(lo.states.values(), ro.states.to_vector()) > 1e-6);
}

TEST_CASE("tree root-only mode returns exactly the root state") {
  Rng rng(57);
  const int d = 3;
  Parameter emb = random_table("emb", 6, d, rng);
  TreeLstmParams params("tree", d, d);
  params.init(rng);
  Tape t;
  auto tree = join(join(leaf_node(2), leaf_node(3)), leaf_node(4));
  auto all = encode_tree(t, *tree, emb, params, TreeMode::AllNodes);
  auto root = encode_tree(t, *tree, emb, params, TreeMode::RootOnly);
  CHECK(all.states.rows() == 2);
  CHECK(root.states.rows() == 1);
  // post-order puts the root last
  CHECK(max_abs_diff(row(all.states, 1).values(), row(root.states, 0).to_vector()) < 1e-15);
}

TEST_CASE("snelsd encoder matches a scalar-loop chain of detect and describe") {
  Rng rng(58);
  const int d_in = 3, d_p = 2, d_h = 4;
  Parameter emb = random_table("emb", 8, d_in, rng);
  DetectParams det("det", d_in, d_p);
  DescribeParams desc("desc", d_p, d_h);
  det.init(rng);
  desc.init(rng);
  const std::vector<int> sent = {2, 5, 3, 7};

  Tape t;
  auto outs = encode_snelsd(t, SequenceBatch::from_ids({sent}), emb, det, desc);
  REQUIRE(outs.size() == 1);
  REQUIRE(outs[0].chunk_trace.has_value());
  const auto& trace = outs[0].chunk_trace->r;
  REQUIRE(trace.size() == sent.size());

  double r_prev = 1.0;
  std::vector<double> p_prev(d_p, 0.0);
  RefState state = {std::vector<double>(d_h, 0.0), std::vector<double>(d_h, 0.0)};
  for (std::size_t i = 0; i < sent.size(); ++i) {
    const auto x = sentence_embedding(emb, sent[i]);
    const auto x_next = i + 1 < sent.size() ? sentence_embedding(emb, sent[i + 1])
                                            : std::vector<double>(d_in, 0.0);
    RefDetect rd = detect_step_ref(det, x, x_next, r_prev, p_prev);
    state = describe_step_ref(desc, rd.p, rd.r, state);
    CHECK(std::fabs(trace[i] - rd.r) < 1e-12);
    CHECK(trace[i] > 0.0);
    CHECK(trace[i] < 1.0);
    CHECK(max_abs_diff(row(outs[0].states, static_cast<int>(i)).values(), state.h) < 1e-12);
    r_prev = rd.r;
    p_prev = rd.p;
  }
}

TEST_CASE("snelsd states are independent of batch padding and trace is deterministic") {
  Rng rng(59);
  const int d = 4;
  Parameter emb = random_table("emb", 10, d, rng);
  DetectParams det("det", d, d);
  DescribeParams desc("desc", d, d);
  det.init(rng);
  desc.init(rng);
  const std::vector<int> sent = {2, 3, 4};
  const std::vector<int> longer = {5, 6, 7, 8, 9};

  Tape t;
  auto alone = encode_snelsd(t, SequenceBatch::from_ids({sent}), emb, det, desc);
  auto padded = encode_snelsd(t, SequenceBatch::from_ids({sent, longer}), emb, det, desc);
  CHECK(max_abs_diff(alone[0].states.values(), padded[0].states.to_vector()) < 1e-12);
  REQUIRE(alone[0].chunk_trace->r.size() == padded[0].chunk_trace->r.size());
  for (std::size_t i = 0; i < alone[0].chunk_trace->r.size(); ++i) {
    CHECK(std::fabs(alone[0].chunk_trace->r[i] - padded[0].chunk_trace->r[i]) < 1e-12);
  }

  Tape t2;
  auto again = encode_snelsd(t2, SequenceBatch::from_ids({sent}), emb, det, desc);
  CHECK(again[0].chunk_trace->r == alone[0].chunk_trace->r);
}

TEST_CASE("clamped boundaries reduce snelsd to tanh projection plus a plain lstm") {
  Rng rng(60);
  const int d_in = 3, d_p = 3, d_h = 5;
  Parameter emb = random_table("emb", 9, d_in, rng);
  DetectParams det("det", d_in, d_p);
  DescribeParams desc("desc", d_p, d_h);
  det.init(rng);
  desc.init(rng);
  const std::vector<int> sent = {2, 4, 6, 8, 3};

  Tape t;
  auto clamped = encode_snelsd(t, SequenceBatch::from_ids({sent}), emb, det, desc, {}, true);

  // reference: p1_t = tanh(W_p1 x_t + b_p1), then the description LSTM
  auto dw = det.bind(t);
  auto lw = desc.lstm.bind(t);
  State s = {t.constant({d_h}), t.constant({d_h})};
  for (std::size_t i = 0; i < sent.size(); ++i) {
    Tensor x = t.leaf({d_in}, sentence_embedding(emb, sent[i]));
    Tensor proj = tanh_act(affine(x, dw.W_p1, dw.b_p1));
    s = lstm_step(proj, s, lw);
    CHECK(max_abs_diff(row(clamped[0].states, static_cast<int>(i)).values(), s.h.to_vector()) <
          1e-10);
  }
}

TEST_CASE("joint encoding concatenates positions and keeps the trace") {
  Rng rng(61);
  const int d = 3;
  Parameter emb = random_table("emb", 8, d, rng);
  DetectParams det("det", d, d);
  DescribeParams desc("desc", d, d);
  det.init(rng);
  desc.init(rng);
  const std::vector<int> sent = {2, 3, 4, 5};

  Tape t;
  const SequenceBatch batch = SequenceBatch::from_ids({sent});
  auto primary = encode_snelsd(t, batch, emb, det, desc);
  auto words = embed_sequence(t, batch, emb);
  auto joint = encode_joint(primary[0], words[0]);
  CHECK(joint.states.cols() == 2 * d);
  CHECK(joint.states.rows() == static_cast<int>(sent.size()));
  REQUIRE(joint.chunk_trace.has_value());
  CHECK(joint.chunk_trace->r == primary[0].chunk_trace->r);

  // primary half unchanged by concatenation with a zero aux
  EncoderOutput zero_aux = {t.constant({static_cast<int>(sent.size()), d}),
                            t.constant({static_cast<int>(sent.size())}, 1.0), std::nullopt};
  auto joint0 = encode_joint(primary[0], zero_aux);
  for (int i = 0; i < joint0.states.rows(); ++i) {
    for (int j = 0; j < d; ++j) {
      CHECK(joint0.states.value(i * 2 * d + j) == primary[0].states.value(i * d + j));
    }
  }

  EncoderOutput short_aux = {t.constant({2, d}), t.constant({2}, 1.0), std::nullopt};
  CHECK_THROWS_AS(encode_joint(primary[0], short_aux), DimensionError);
}

TEST_CASE("joint widths at paper dimensions") {
  Rng rng(62);
  Parameter emb = random_table("emb", 5, 300, rng);
  DetectParams det("det", 300, 300);
  DescribeParams desc("desc", 300, 300);
  det.init(rng);
  desc.init(rng);
  ChainParams blstm("blstm", 300, 300, 1, true);
  blstm.init(rng);
  const SequenceBatch batch = SequenceBatch::from_ids({{2, 3, 4}});

  Tape t;
  auto primary = encode_snelsd(t, batch, emb, det, desc);
  auto words = embed_sequence(t, batch, emb);
  CHECK(encode_joint(primary[0], words[0]).states.cols() == 600);
  auto chain = encode_chain(t, batch, emb, blstm);
  CHECK(encode_joint(primary[0], chain[0]).states.cols() == 900);
}

TEST_CASE("gradients flow end to end through a snelsd encoding") {
  Rng rng(63);
  const int d = 3;
  Parameter emb = random_table("emb", 6, d, rng);
  DetectParams det("det", d, d);
  DescribeParams desc("desc", d, d);
  det.init(rng);
  desc.init(rng);
  const SequenceBatch batch = SequenceBatch::from_ids({{2, 4, 5}});

  std::vector<Parameter*> params = det.parameters();
  for (Parameter* p : desc.parameters()) params.push_back(p);
  params.push_back(&emb);
  auto res = gradcheck(
      [&](Tape& t) {
        auto outs = encode_snelsd(t, batch, emb, det, desc);
        return sum(hadamard(outs[0].states, outs[0].states));
      },
      params);
  CHECK(res.max_rel_err < kGradTol);
}
