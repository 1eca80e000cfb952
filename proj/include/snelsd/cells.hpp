// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "snelsd/tensor.hpp"

// Single-step recurrent units. Each unit is a parameter bundle plus a bound
// view of those parameters on a tape; step functions take the bound view so
// one binding serves a whole unrolled sequence. Step functions accept either
// single vectors or row-batched matrices (one row per sequence) wherever the
// underlying ops do.

namespace snelsd {

// Hidden/cell pair carried along a recurrence.
struct State {
  Tensor h;
  Tensor c;
};

struct LstmWeights {
  Tensor W_i, W_f, W_o, W_c;
  Tensor U_i, U_f, U_o, U_c;
  Tensor b_i, b_f, b_o, b_c;
};

struct LstmParams {
  int d_in = 0;
  int d_h = 0;
  Parameter W_i, W_f, W_o, W_c;  // d_h x d_in
  Parameter U_i, U_f, U_o, U_c;  // d_h x d_h
  Parameter b_i, b_f, b_o, b_c;  // d_h

  LstmParams() = default;
  LstmParams(const std::string& prefix, int d_in, int d_h);
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
  LstmWeights bind(Tape& tape);
};

// gate i = sigmoid(W_i x + U_i h + b_i), f and o alike;
// c = f (.) c_prev + i (.) tanh(W_c x + U_c h + b_c); h = o (.) tanh(c).
State lstm_step(const Tensor& x, const State& prev, const LstmWeights& w);

struct TreeLstmWeights {
  Tensor W_i, W_f, W_o, W_c;
  Tensor U_i_l, U_i_r, U_o_l, U_o_r, U_c_l, U_c_r;
  Tensor U_f_ll, U_f_lr, U_f_rl, U_f_rr;
  Tensor b_i, b_f_l, b_f_r, b_o, b_u;
};

struct TreeLstmParams {
  int d_in = 0;
  int d_h = 0;
  Parameter W_i, W_f, W_o, W_c;                      // d_h x d_in, W_f shared by both forget gates
  Parameter U_i_l, U_i_r, U_o_l, U_o_r, U_c_l, U_c_r;  // d_h x d_h
  Parameter U_f_ll, U_f_lr, U_f_rl, U_f_rr;          // d_h x d_h
  Parameter b_i, b_f_l, b_f_r, b_o, b_u;             // d_h

  TreeLstmParams() = default;
  TreeLstmParams(const std::string& prefix, int d_in, int d_h);
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
  TreeLstmWeights bind(Tape& tape);
};

// Binary-tree composition; x is the word vector at leaves and the zero
// vector at internal nodes. Vectors only.
State treelstm_node(const Tensor& x, const State& left, const State& right,
                    const TreeLstmWeights& w);

struct DetectWeights {
  Tensor W_i0, W_f0, W_p0;
  Tensor U_i0, U_f0, U_p0;
  Tensor b_i0, b_f0, b_p0;
  Tensor W_p1, b_p1;
  Tensor u_r;
};

struct DetectParams {
  int d_in = 0;
  int d_p = 0;
  Parameter W_i0, W_f0, W_p0;  // d_p x d_in
  Parameter U_i0, U_f0, U_p0;  // d_p x d_p
  Parameter b_i0, b_f0, b_p0;  // d_p
  Parameter W_p1;              // d_p x d_in
  Parameter b_p1;              // d_p
  Parameter u_r;               // d_p + d_in, scores [p_t; x_next]

  DetectParams() = default;
  DetectParams(const std::string& prefix, int d_in, int d_p);
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
  DetectWeights bind(Tape& tape);
};

struct DetectOut {
  Tensor p;  // chunking state
  Tensor r;  // boundary indicator, scalar (or one per batch row)
};

// Gated continuation p0, fresh start p1 = tanh(W_p1 x + b_p1), blended by
// the previous boundary indicator: p_t = (1 - r_prev) p0 + r_prev p1.
// r_t = sigmoid([p_t; x_next]' u_r), no bias. x_next is the next word's
// embedding, zero at sentence end. r_prev must lie in [0, 1].
DetectOut detect_step(const Tensor& x, const Tensor& x_next, const Tensor& r_prev,
                      const Tensor& p_prev, const DetectWeights& w);

struct DescribeWeights {
  LstmWeights lstm;
  Tensor p_star;
};

struct DescribeParams {
  LstmParams lstm;     // input width d_p
  Parameter p_star;    // d_p, learned constant blended in when r -> 0

  DescribeParams() = default;
  DescribeParams(const std::string& prefix, int d_p, int d_h);
  void init(Rng& rng);
  std::vector<Parameter*> parameters();
  DescribeWeights bind(Tape& tape);
};

// m_t = (1 - r_t) p* + r_t p_t, then a standard LSTM step on m_t.
// r_t must lie in [0, 1].
State describe_step(const Tensor& p_t, const Tensor& r_t, const State& prev,
                    const DescribeWeights& w);

}  // namespace snelsd
