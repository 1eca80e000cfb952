// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "snelsd/cells.hpp"

// Independent scalar-loop reimplementations of every cell, written with
// plain index loops over flat row-major storage. They share nothing with
// the engine beyond reading parameter values.

namespace snelsd::testing {

inline double ref_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// W x + b over flat row-major W (m x n).
inline std::vector<double> ref_lin(const std::vector<double>& W, const std::vector<double>& x,
                                   const std::vector<double>& b) {
  const std::size_t m = b.size(), n = x.size();
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < n; ++j) s += W[i * n + j] * x[j];
    y[i] = s;
  }
  return y;
}

inline void ref_add_mat(const std::vector<double>& U, const std::vector<double>& h,
                        std::vector<double>& y) {
  const std::size_t m = y.size(), n = h.size();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i] += U[i * n + j] * h[j];
  }
}

struct RefState {
  std::vector<double> h, c;
};

inline RefState lstm_step_ref(LstmParams& p, const std::vector<double>& x,
                              const RefState& prev) {
  auto gate = [&](const Parameter& W, const Parameter& U, const Parameter& b) {
    auto y = ref_lin(W.value, x, b.value);
    ref_add_mat(U.value, prev.h, y);
    return y;
  };
  auto i = gate(p.W_i, p.U_i, p.b_i);
  auto f = gate(p.W_f, p.U_f, p.b_f);
  auto o = gate(p.W_o, p.U_o, p.b_o);
  auto u = gate(p.W_c, p.U_c, p.b_c);
  RefState out;
  out.h.resize(i.size());
  out.c.resize(i.size());
  for (std::size_t k = 0; k < i.size(); ++k) {
    const double ik = ref_sigmoid(i[k]);
    const double fk = ref_sigmoid(f[k]);
    const double ok = ref_sigmoid(o[k]);
    out.c[k] = fk * prev.c[k] + ik * std::tanh(u[k]);
    out.h[k] = ok * std::tanh(out.c[k]);
  }
  return out;
}

inline RefState treelstm_node_ref(TreeLstmParams& p, const std::vector<double>& x,
                                  const RefState& l, const RefState& r) {
  auto node = [&](const Parameter& W, const Parameter& Ul, const Parameter& Ur,
                  const Parameter& b) {
    auto y = ref_lin(W.value, x, b.value);
    ref_add_mat(Ul.value, l.h, y);
    ref_add_mat(Ur.value, r.h, y);
    return y;
  };
  auto i = node(p.W_i, p.U_i_l, p.U_i_r, p.b_i);
  auto fl = node(p.W_f, p.U_f_ll, p.U_f_lr, p.b_f_l);
  auto fr = node(p.W_f, p.U_f_rl, p.U_f_rr, p.b_f_r);
  auto o = node(p.W_o, p.U_o_l, p.U_o_r, p.b_o);
  auto u = node(p.W_c, p.U_c_l, p.U_c_r, p.b_u);
  RefState out;
  out.h.resize(i.size());
  out.c.resize(i.size());
  for (std::size_t k = 0; k < i.size(); ++k) {
    out.c[k] = ref_sigmoid(fl[k]) * l.c[k] + ref_sigmoid(fr[k]) * r.c[k] +
               ref_sigmoid(i[k]) * std::tanh(u[k]);
    out.h[k] = ref_sigmoid(o[k]) * std::tanh(out.c[k]);
  }
  return out;
}

struct RefDetect {
  std::vector<double> p;
  double r = 0.0;
};

inline RefDetect detect_step_ref(DetectParams& dp, const std::vector<double>& x,
                                 const std::vector<double>& x_next, double r_prev,
                                 const std::vector<double>& p_prev) {
  auto gate = [&](const Parameter& W, const Parameter& U, const Parameter& b) {
    auto y = ref_lin(W.value, x, b.value);
    ref_add_mat(U.value, p_prev, y);
    return y;
  };
  auto i0 = gate(dp.W_i0, dp.U_i0, dp.b_i0);
  auto f0 = gate(dp.W_f0, dp.U_f0, dp.b_f0);
  auto pc = gate(dp.W_p0, dp.U_p0, dp.b_p0);
  auto p1 = ref_lin(dp.W_p1.value, x, dp.b_p1.value);
  RefDetect out;
  out.p.resize(i0.size());
  for (std::size_t k = 0; k < i0.size(); ++k) {
    const double p0 = ref_sigmoid(f0[k]) * p_prev[k] + ref_sigmoid(i0[k]) * std::tanh(pc[k]);
    out.p[k] = (1.0 - r_prev) * p0 + r_prev * std::tanh(p1[k]);
  }
  double score = 0.0;
  for (std::size_t k = 0; k < out.p.size(); ++k) score += out.p[k] * dp.u_r.value[k];
  for (std::size_t k = 0; k < x_next.size(); ++k) {
    score += x_next[k] * dp.u_r.value[out.p.size() + k];
  }
  out.r = ref_sigmoid(score);
  return out;
}

inline RefState describe_step_ref(DescribeParams& dp, const std::vector<double>& p_t,
                                  double r_t, const RefState& prev) {
  std::vector<double> m(p_t.size());
  for (std::size_t k = 0; k < p_t.size(); ++k) {
    m[k] = (1.0 - r_t) * dp.p_star.value[k] + r_t * p_t[k];
  }
  return lstm_step_ref(dp.lstm, m, prev);
}

// Scalar optimizer references, one flat vector per run.
struct AdamRef {
  double lr, b1, b2, eps;
  long t = 0;
  std::vector<double> m, v;

  AdamRef(std::size_t n, double lr, double b1, double b2, double eps)
      : lr(lr), b1(b1), b2(b2), eps(eps), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    t += 1;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(b1, static_cast<double>(t)));
      const double vhat = v[i] / (1.0 - std::pow(b2, static_cast<double>(t)));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

struct AdadeltaRef {
  double rho, eps;
  std::vector<double> eg, ed;

  AdadeltaRef(std::size_t n, double rho, double eps) : rho(rho), eps(eps), eg(n, 0.0), ed(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
      const double d = -std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
      ed[i] = rho * ed[i] + (1.0 - rho) * d * d;
      theta[i] += d;
    }
  }
};

}  // namespace snelsd::testing
