// SPDX-License-Identifier: Apache-2.0
#include "snelsd/cells.hpp"

namespace snelsd {

namespace {

void check_unit_interval(const Tensor& r, const char* what) {
  for (long i = 0; i < r.size(); ++i) {
    const double v = r.value(i);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError(std::string(what) + " = " + std::to_string(v) +
                          " outside [0, 1]");
    }
  }
}

}  // namespace

LstmParams::LstmParams(const std::string& prefix, int d_in_, int d_h_)
    : d_in(d_in_),
      d_h(d_h_),
      W_i(prefix + ".W_i", {d_h_, d_in_}),
      W_f(prefix + ".W_f", {d_h_, d_in_}),
      W_o(prefix + ".W_o", {d_h_, d_in_}),
      W_c(prefix + ".W_c", {d_h_, d_in_}),
      U_i(prefix + ".U_i", {d_h_, d_h_}),
      U_f(prefix + ".U_f", {d_h_, d_h_}),
      U_o(prefix + ".U_o", {d_h_, d_h_}),
      U_c(prefix + ".U_c", {d_h_, d_h_}),
      b_i(prefix + ".b_i", {d_h_}),
      b_f(prefix + ".b_f", {d_h_}),
      b_o(prefix + ".b_o", {d_h_}),
      b_c(prefix + ".b_c", {d_h_}) {}

void LstmParams::init(Rng& rng) {
  for (Parameter* w : {&W_i, &W_f, &W_o, &W_c}) w->init_glorot(rng, d_in, d_h);
  for (Parameter* u : {&U_i, &U_f, &U_o, &U_c}) u->init_glorot(rng, d_h, d_h);
}

std::vector<Parameter*> LstmParams::parameters() {
  return {&W_i, &W_f, &W_o, &W_c, &U_i, &U_f, &U_o, &U_c, &b_i, &b_f, &b_o, &b_c};
}

LstmWeights LstmParams::bind(Tape& tape) {
  return {tape.use(W_i), tape.use(W_f), tape.use(W_o), tape.use(W_c),
          tape.use(U_i), tape.use(U_f), tape.use(U_o), tape.use(U_c),
          tape.use(b_i), tape.use(b_f), tape.use(b_o), tape.use(b_c)};
}

State lstm_step(const Tensor& x, const State& prev, const LstmWeights& w) {
  Tensor i = sigmoid(affine2(x, w.W_i, prev.h, w.U_i, w.b_i));
  Tensor f = sigmoid(affine2(x, w.W_f, prev.h, w.U_f, w.b_f));
  Tensor o = sigmoid(affine2(x, w.W_o, prev.h, w.U_o, w.b_o));
  Tensor u = tanh_act(affine2(x, w.W_c, prev.h, w.U_c, w.b_c));
  Tensor c = add(hadamard(f, prev.c), hadamard(i, u));
  return {hadamard(o, tanh_act(c)), c};
}

TreeLstmParams::TreeLstmParams(const std::string& prefix, int d_in_, int d_h_)
    : d_in(d_in_),
      d_h(d_h_),
      W_i(prefix + ".W_i", {d_h_, d_in_}),
      W_f(prefix + ".W_f", {d_h_, d_in_}),
      W_o(prefix + ".W_o", {d_h_, d_in_}),
      W_c(prefix + ".W_c", {d_h_, d_in_}),
      U_i_l(prefix + ".U_i_l", {d_h_, d_h_}),
      U_i_r(prefix + ".U_i_r", {d_h_, d_h_}),
      U_o_l(prefix + ".U_o_l", {d_h_, d_h_}),
      U_o_r(prefix + ".U_o_r", {d_h_, d_h_}),
      U_c_l(prefix + ".U_c_l", {d_h_, d_h_}),
      U_c_r(prefix + ".U_c_r", {d_h_, d_h_}),
      U_f_ll(prefix + ".U_f_ll", {d_h_, d_h_}),
      U_f_lr(prefix + ".U_f_lr", {d_h_, d_h_}),
      U_f_rl(prefix + ".U_f_rl", {d_h_, d_h_}),
      U_f_rr(prefix + ".U_f_rr", {d_h_, d_h_}),
      b_i(prefix + ".b_i", {d_h_}),
      b_f_l(prefix + ".b_f_l", {d_h_}),
      b_f_r(prefix + ".b_f_r", {d_h_}),
      b_o(prefix + ".b_o", {d_h_}),
      b_u(prefix + ".b_u", {d_h_}) {}

void TreeLstmParams::init(Rng& rng) {
  for (Parameter* w : {&W_i, &W_f, &W_o, &W_c}) w->init_glorot(rng, d_in, d_h);
  for (Parameter* u : {&U_i_l, &U_i_r, &U_o_l, &U_o_r, &U_c_l, &U_c_r, &U_f_ll, &U_f_lr,
                       &U_f_rl, &U_f_rr}) {
    u->init_glorot(rng, d_h, d_h);
  }
}

std::vector<Parameter*> TreeLstmParams::parameters() {
  return {&W_i,   &W_f,   &W_o,   &W_c,   &U_i_l,  &U_i_r,  &U_o_l,
          &U_o_r, &U_c_l, &U_c_r, &U_f_ll, &U_f_lr, &U_f_rl, &U_f_rr,
          &b_i,   &b_f_l, &b_f_r, &b_o,   &b_u};
}

TreeLstmWeights TreeLstmParams::bind(Tape& tape) {
  return {tape.use(W_i),    tape.use(W_f),    tape.use(W_o),    tape.use(W_c),
          tape.use(U_i_l),  tape.use(U_i_r),  tape.use(U_o_l),  tape.use(U_o_r),
          tape.use(U_c_l),  tape.use(U_c_r),  tape.use(U_f_ll), tape.use(U_f_lr),
          tape.use(U_f_rl), tape.use(U_f_rr), tape.use(b_i),    tape.use(b_f_l),
          tape.use(b_f_r),  tape.use(b_o),    tape.use(b_u)};
}

State treelstm_node(const Tensor& x, const State& left, const State& right,
                    const TreeLstmWeights& w) {
  Tensor i = sigmoid(affine3(x, w.W_i, left.h, w.U_i_l, right.h, w.U_i_r, w.b_i));
  Tensor f_l = sigmoid(affine3(x, w.W_f, left.h, w.U_f_ll, right.h, w.U_f_lr, w.b_f_l));
  Tensor f_r = sigmoid(affine3(x, w.W_f, left.h, w.U_f_rl, right.h, w.U_f_rr, w.b_f_r));
  Tensor o = sigmoid(affine3(x, w.W_o, left.h, w.U_o_l, right.h, w.U_o_r, w.b_o));
  Tensor u = tanh_act(affine3(x, w.W_c, left.h, w.U_c_l, right.h, w.U_c_r, w.b_u));
  Tensor c = add(add(hadamard(f_l, left.c), hadamard(f_r, right.c)), hadamard(i, u));
  return {hadamard(o, tanh_act(c)), c};
}

DetectParams::DetectParams(const std::string& prefix, int d_in_, int d_p_)
    : d_in(d_in_),
      d_p(d_p_),
      W_i0(prefix + ".W_i0", {d_p_, d_in_}),
      W_f0(prefix + ".W_f0", {d_p_, d_in_}),
      W_p0(prefix + ".W_p0", {d_p_, d_in_}),
      U_i0(prefix + ".U_i0", {d_p_, d_p_}),
      U_f0(prefix + ".U_f0", {d_p_, d_p_}),
      U_p0(prefix + ".U_p0", {d_p_, d_p_}),
      b_i0(prefix + ".b_i0", {d_p_}),
      b_f0(prefix + ".b_f0", {d_p_}),
      b_p0(prefix + ".b_p0", {d_p_}),
      W_p1(prefix + ".W_p1", {d_p_, d_in_}),
      b_p1(prefix + ".b_p1", {d_p_}),
      u_r(prefix + ".u_r", {d_p_ + d_in_}) {}

void DetectParams::init(Rng& rng) {
  for (Parameter* w : {&W_i0, &W_f0, &W_p0, &W_p1}) w->init_glorot(rng, d_in, d_p);
  for (Parameter* u : {&U_i0, &U_f0, &U_p0}) u->init_glorot(rng, d_p, d_p);
  u_r.init_glorot(rng, d_p + d_in, 1);
}

std::vector<Parameter*> DetectParams::parameters() {
  return {&W_i0, &W_f0, &W_p0, &U_i0, &U_f0, &U_p0, &b_i0, &b_f0, &b_p0, &W_p1, &b_p1, &u_r};
}

DetectWeights DetectParams::bind(Tape& tape) {
  return {tape.use(W_i0), tape.use(W_f0), tape.use(W_p0), tape.use(U_i0),
          tape.use(U_f0), tape.use(U_p0), tape.use(b_i0), tape.use(b_f0),
          tape.use(b_p0), tape.use(W_p1), tape.use(b_p1), tape.use(u_r)};
}

DetectOut detect_step(const Tensor& x, const Tensor& x_next, const Tensor& r_prev,
                      const Tensor& p_prev, const DetectWeights& w) {
  check_unit_interval(r_prev, "detect_step: r_prev");
  Tensor i0 = sigmoid(affine2(x, w.W_i0, p_prev, w.U_i0, w.b_i0));
  Tensor f0 = sigmoid(affine2(x, w.W_f0, p_prev, w.U_f0, w.b_f0));
  Tensor p0 = add(hadamard(f0, p_prev), hadamard(i0, tanh_act(affine2(x, w.W_p0, p_prev, w.U_p0, w.b_p0))));
  Tensor p1 = tanh_act(affine(x, w.W_p1, w.b_p1));
  if (x.ndim() == 1) {
    Tensor p = lerp(r_prev, p1, p0);
    Tensor r = sigmoid(dot(concat({p, x_next}), w.u_r));
    return {p, r};
  }
  Tensor p = lerp_rows(r_prev, p1, p0);
  Tensor r = sigmoid(matvec(concat({p, x_next}, 1), w.u_r));
  return {p, r};
}

DescribeParams::DescribeParams(const std::string& prefix, int d_p, int d_h)
    : lstm(prefix, d_p, d_h), p_star(prefix + ".p_star", {d_p}) {}

void DescribeParams::init(Rng& rng) { lstm.init(rng); }

std::vector<Parameter*> DescribeParams::parameters() {
  auto out = lstm.parameters();
  out.push_back(&p_star);
  return out;
}

DescribeWeights DescribeParams::bind(Tape& tape) {
  return {lstm.bind(tape), tape.use(p_star)};
}

State describe_step(const Tensor& p_t, const Tensor& r_t, const State& prev,
                    const DescribeWeights& w) {
  check_unit_interval(r_t, "describe_step: r_t");
  Tensor m = p_t.ndim() == 1 ? lerp(r_t, p_t, w.p_star)
                             : lerp_rows(r_t, p_t, broadcast_rows(w.p_star, p_t.rows()));
  return lstm_step(m, prev, w.lstm);
}

}  // namespace snelsd
