// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "snelsd/cells.hpp"

using namespace snelsd;
using namespace snelsd::testing;

namespace {

std::vector<double> random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

void init_all(std::vector<Parameter*> ps, Rng& rng) {
  for (Parameter* p : ps) p->init_uniform(rng, -0.8, 0.8);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("lstm zero parameters give the closed forms") {
  const int d = 3;
  LstmParams p("lstm", d, d);
  Tape t;
  auto w = p.bind(t);
  State zero = {t.constant({d}), t.constant({d})};
  auto [h, c] = lstm_step(t.constant({d}), zero, w);
  for (int i = 0; i < d; ++i) {
    CHECK(c.value(i) == 0.0);
    CHECK(h.value(i) == 0.0);
  }

  const std::vector<double> cv = {0.4, -1.2, 2.0};
  State prev = {t.constant({d}), t.leaf({d}, cv)};
  auto [h2, c2] = lstm_step(t.constant({d}), prev, w);
  for (int i = 0; i < d; ++i) {
    CHECK(c2.value(i) == doctest::Approx(0.5 * cv[i]).epsilon(1e-14));
    CHECK(h2.value(i) == doctest::Approx(0.5 * std::tanh(0.5 * cv[i])).epsilon(1e-14));
  }
}

TEST_CASE("lstm step matches the scalar-loop oracle") {
  Rng rng(21);
  const int d = 3;
  LstmParams p("lstm", d, d);
  init_all(p.parameters(), rng);
  const auto x = random_vec(rng, d);
  const auto h0 = random_vec(rng, d);
  const auto c0 = random_vec(rng, d);

  Tape t;
  auto w = p.bind(t);
  auto [h, c] = lstm_step(t.leaf({d}, x), {t.leaf({d}, h0), t.leaf({d}, c0)}, w);
  RefState ref = lstm_step_ref(p, x, {h0, c0});
  CHECK(max_abs_diff(h.values(), ref.h) < 1e-12);
  CHECK(max_abs_diff(c.values(), ref.c) < 1e-12);
}

TEST_CASE("batched lstm step equals per-row single steps") {
  Rng rng(22);
  const int d_in = 4, d_h = 3, B = 5;
  LstmParams p("lstm", d_in, d_h);
  init_all(p.parameters(), rng);
  const auto X = random_vec(rng, B * d_in);
  const auto H = random_vec(rng, B * d_h);
  const auto C = random_vec(rng, B * d_h);

  Tape t;
  auto w = p.bind(t);
  auto [Hb, Cb] = lstm_step(t.leaf({B, d_in}, X), {t.leaf({B, d_h}, H), t.leaf({B, d_h}, C)}, w);
  for (int b = 0; b < B; ++b) {
    std::vector<double> x(X.begin() + b * d_in, X.begin() + (b + 1) * d_in);
    std::vector<double> h(H.begin() + b * d_h, H.begin() + (b + 1) * d_h);
    std::vector<double> c(C.begin() + b * d_h, C.begin() + (b + 1) * d_h);
    auto [hs, cs] = lstm_step(t.leaf({d_in}, x), {t.leaf({d_h}, h), t.leaf({d_h}, c)}, w);
    for (int i = 0; i < d_h; ++i) {
      CHECK(std::fabs(Hb.value(b * d_h + i) - hs.value(i)) < 1e-12);
      CHECK(std::fabs(Cb.value(b * d_h + i) - cs.value(i)) < 1e-12);
    }
  }
}

TEST_CASE("tree node with zero parameters and zero children is zero") {
  const int d = 3;
  TreeLstmParams p("tree", d, d);
  Tape t;
  auto w = p.bind(t);
  State z = {t.constant({d}), t.constant({d})};
  auto [h, c] = treelstm_node(t.constant({d}), z, z, w);
  for (int i = 0; i < d; ++i) {
    CHECK(h.value(i) == 0.0);
    CHECK(c.value(i) == 0.0);
  }
}

TEST_CASE("tree node is symmetric under a full left/right parameter swap") {
  Rng rng(23);
  const int d = 3;
  TreeLstmParams p("tree", d, d);
  init_all(p.parameters(), rng);
  TreeLstmParams q("tree_swapped", d, d);
  q.W_i.value = p.W_i.value;
  q.W_f.value = p.W_f.value;
  q.W_o.value = p.W_o.value;
  q.W_c.value = p.W_c.value;
  q.U_i_l.value = p.U_i_r.value;
  q.U_i_r.value = p.U_i_l.value;
  q.U_o_l.value = p.U_o_r.value;
  q.U_o_r.value = p.U_o_l.value;
  q.U_c_l.value = p.U_c_r.value;
  q.U_c_r.value = p.U_c_l.value;
  q.U_f_ll.value = p.U_f_rr.value;
  q.U_f_rr.value = p.U_f_ll.value;
  q.U_f_lr.value = p.U_f_rl.value;
  q.U_f_rl.value = p.U_f_lr.value;
  q.b_i.value = p.b_i.value;
  q.b_f_l.value = p.b_f_r.value;
  q.b_f_r.value = p.b_f_l.value;
  q.b_o.value = p.b_o.value;
  q.b_u.value = p.b_u.value;

  const auto x = random_vec(rng, d);
  const auto hl = random_vec(rng, d), cl = random_vec(rng, d);
  const auto hr = random_vec(rng, d), cr = random_vec(rng, d);
  Tape t;
  State left = {t.leaf({d}, hl), t.leaf({d}, cl)};
  State right = {t.leaf({d}, hr), t.leaf({d}, cr)};
  auto [h1, c1] = treelstm_node(t.leaf({d}, x), left, right, p.bind(t));
  auto [h2, c2] = treelstm_node(t.leaf({d}, x), right, left, q.bind(t));
  CHECK(max_abs_diff(h1.values(), h2.to_vector()) < 1e-15);
  CHECK(max_abs_diff(c1.values(), c2.to_vector()) < 1e-15);
}

TEST_CASE("tree node matches the scalar-loop oracle") {
  Rng rng(24);
  const int d = 3;
  TreeLstmParams p("tree", d, d);
  init_all(p.parameters(), rng);
  const auto x = random_vec(rng, d);
  RefState l = {random_vec(rng, d), random_vec(rng, d)};
  RefState r = {random_vec(rng, d), random_vec(rng, d)};
  Tape t;
  auto [h, c] = treelstm_node(t.leaf({d}, x), {t.leaf({d}, l.h), t.leaf({d}, l.c)},
                              {t.leaf({d}, r.h), t.leaf({d}, r.c)}, p.bind(t));
  RefState ref = treelstm_node_ref(p, x, l, r);
  CHECK(max_abs_diff(h.values(), ref.h) < 1e-12);
  CHECK(max_abs_diff(c.values(), ref.c) < 1e-12);
}

TEST_CASE("detect step: r_prev = 1 ignores the carried state") {
  Rng rng(25);
  const int d = 3;
  DetectParams p("det", d, d);
  init_all(p.parameters(), rng);
  const auto x = random_vec(rng, d);
  const auto xn = random_vec(rng, d);
  Tape t;
  auto w = p.bind(t);
  Tensor one = t.scalar(1.0);
  auto a = detect_step(t.leaf({d}, x), t.leaf({d}, xn), one, t.leaf({d}, random_vec(rng, d)), w);
  auto b = detect_step(t.leaf({d}, x), t.leaf({d}, xn), one, t.leaf({d}, random_vec(rng, d)), w);
  CHECK(max_abs_diff(a.p.values(), b.p.to_vector()) == 0.0);

  // fresh-start value is tanh(W_p1 x + b_p1)
  RefDetect ref = detect_step_ref(p, x, xn, 1.0, std::vector<double>(d, 0.0));
  CHECK(max_abs_diff(a.p.values(), ref.p) < 1e-12);
}

TEST_CASE("detect step: zero scoring vector gives r = 0.5") {
  Rng rng(26);
  const int d = 3;
  DetectParams p("det", d, d);
  init_all(p.parameters(), rng);
  std::fill(p.u_r.value.begin(), p.u_r.value.end(), 0.0);
  Tape t;
  auto out = detect_step(t.leaf({d}, random_vec(rng, d)), t.leaf({d}, random_vec(rng, d)),
                         t.scalar(0.3), t.leaf({d}, random_vec(rng, d)), p.bind(t));
  CHECK(out.r.item() == 0.5);
}

TEST_CASE("detect step matches the scalar-loop oracle and stays in (0,1)") {
  Rng rng(27);
  const int d = 3;
  DetectParams p("det", d, d);
  init_all(p.parameters(), rng);
  for (const double r_prev : {0.0, 0.25, 1.0}) {
    const auto x = random_vec(rng, d);
    const auto xn = random_vec(rng, d);
    const auto pp = random_vec(rng, d);
    Tape t;
    auto out = detect_step(t.leaf({d}, x), t.leaf({d}, xn), t.scalar(r_prev), t.leaf({d}, pp),
                           p.bind(t));
    RefDetect ref = detect_step_ref(p, x, xn, r_prev, pp);
    CHECK(max_abs_diff(out.p.values(), ref.p) < 1e-12);
    CHECK(out.r.item() == doctest::Approx(ref.r).epsilon(1e-12));
    CHECK(out.r.item() > 0.0);
    CHECK(out.r.item() < 1.0);
  }
}

TEST_CASE("detect step rejects r_prev outside the unit interval") {
  const int d = 2;
  DetectParams p("det", d, d);
  Tape t;
  auto w = p.bind(t);
  CHECK_THROWS_AS(
      detect_step(t.constant({d}), t.constant({d}), t.scalar(1.5), t.constant({d}), w),
      ContractError);
  CHECK_THROWS_AS(
      detect_step(t.constant({d}), t.constant({d}), t.scalar(-0.1), t.constant({d}), w),
      ContractError);
}

TEST_CASE("describe step with r = 1 equals a plain lstm step on p_t") {
  Rng rng(28);
  const int d = 4;
  DescribeParams p("desc", d, d);
  init_all(p.parameters(), rng);
  const auto pt = random_vec(rng, d);
  const auto h0 = random_vec(rng, d);
  const auto c0 = random_vec(rng, d);
  Tape t;
  auto w = p.bind(t);
  State prev = {t.leaf({d}, h0), t.leaf({d}, c0)};
  auto [hd, cd] = describe_step(t.leaf({d}, pt), t.scalar(1.0), prev, w);
  auto [hl, cl] = lstm_step(t.leaf({d}, pt), prev, w.lstm);
  CHECK(max_abs_diff(hd.values(), hl.to_vector()) < 1e-12);
  CHECK(max_abs_diff(cd.values(), cl.to_vector()) < 1e-12);
}

TEST_CASE("describe step with r = 0 reads only the learned constant") {
  Rng rng(29);
  const int d = 3;
  DescribeParams p("desc", d, d);
  init_all(p.parameters(), rng);
  Tape t;
  auto w = p.bind(t);
  State prev = {t.leaf({d}, random_vec(rng, d)), t.leaf({d}, random_vec(rng, d))};
  auto a = describe_step(t.leaf({d}, random_vec(rng, d)), t.scalar(0.0), prev, w);
  auto b = describe_step(t.leaf({d}, random_vec(rng, d)), t.scalar(0.0), prev, w);
  CHECK(max_abs_diff(a.h.values(), b.h.to_vector()) == 0.0);
  CHECK(max_abs_diff(a.c.values(), b.c.to_vector()) == 0.0);
}

TEST_CASE("describe step blend identity at r = 0.5 with p* = p_t") {
  Rng rng(30);
  const int d = 3;
  DescribeParams p("desc", d, d);
  init_all(p.parameters(), rng);
  const auto pt = random_vec(rng, d);
  p.p_star.value = pt;
  Tape t;
  auto w = p.bind(t);
  State prev = {t.leaf({d}, random_vec(rng, d)), t.leaf({d}, random_vec(rng, d))};
  auto [hd, cd] = describe_step(t.leaf({d}, pt), t.scalar(0.5), prev, w);
  auto [hl, cl] = lstm_step(t.leaf({d}, pt), prev, w.lstm);
  CHECK(max_abs_diff(hd.values(), hl.to_vector()) < 1e-14);
  CHECK(max_abs_diff(cd.values(), cl.to_vector()) < 1e-14);
}

TEST_CASE("batched detect and describe equal per-row single steps") {
  Rng rng(31);
  const int d_in = 3, d_p = 2, d_h = 4, B = 4;
  DetectParams dp("det", d_in, d_p);
  DescribeParams sp("desc", d_p, d_h);
  init_all(dp.parameters(), rng);
  init_all(sp.parameters(), rng);
  const auto X = random_vec(rng, B * d_in);
  const auto XN = random_vec(rng, B * d_in);
  const auto P = random_vec(rng, B * d_p);
  std::vector<double> R(B);
  for (double& r : R) r = rng.uniform(0.0, 1.0);
  const auto H = random_vec(rng, B * d_h);
  const auto C = random_vec(rng, B * d_h);

  Tape t;
  auto dw = dp.bind(t);
  auto sw = sp.bind(t);
  auto out = detect_step(t.leaf({B, d_in}, X), t.leaf({B, d_in}, XN), t.leaf({B}, R),
                         t.leaf({B, d_p}, P), dw);
  auto st = describe_step(out.p, out.r, {t.leaf({B, d_h}, H), t.leaf({B, d_h}, C)}, sw);
  for (int b = 0; b < B; ++b) {
    std::vector<double> x(X.begin() + b * d_in, X.begin() + (b + 1) * d_in);
    std::vector<double> xn(XN.begin() + b * d_in, XN.begin() + (b + 1) * d_in);
    std::vector<double> pp(P.begin() + b * d_p, P.begin() + (b + 1) * d_p);
    auto single = detect_step(t.leaf({d_in}, x), t.leaf({d_in}, xn), t.scalar(R[b]),
                              t.leaf({d_p}, pp), dw);
    CHECK(std::fabs(out.r.value(b) - single.r.item()) < 1e-12);
    for (int i = 0; i < d_p; ++i) CHECK(std::fabs(out.p.value(b * d_p + i) - single.p.value(i)) < 1e-12);
    std::vector<double> h(H.begin() + b * d_h, H.begin() + (b + 1) * d_h);
    std::vector<double> c(C.begin() + b * d_h, C.begin() + (b + 1) * d_h);
    auto ss = describe_step(single.p, single.r, {t.leaf({d_h}, h), t.leaf({d_h}, c)}, sw);
    for (int i = 0; i < d_h; ++i) {
      CHECK(std::fabs(st.h.value(b * d_h + i) - ss.h.value(i)) < 1e-12);
      CHECK(std::fabs(st.c.value(b * d_h + i) - ss.c.value(i)) < 1e-12);
    }
  }
}

TEST_CASE("cell gradients pass the finite-difference oracle at several widths") {
  Rng rng(32);
  for (const int d : {2, 3, 5}) {
    CAPTURE(d);
    {
      LstmParams p("lstm", d, d);
      init_all(p.parameters(), rng);
      Parameter x("x", {d}), h0("h0", {d}), c0("c0", {d});
      x.init_uniform(rng, -1, 1);
      h0.init_uniform(rng, -1, 1);
      c0.init_uniform(rng, -1, 1);
      auto params = p.parameters();
      params.push_back(&x);
      params.push_back(&h0);
      params.push_back(&c0);
      auto res = gradcheck(
          [&](Tape& t) {
            auto [h, c] = lstm_step(t.use(x), {t.use(h0), t.use(c0)}, p.bind(t));
            return add(sum(hadamard(h, h)), sum(c));
          },
          params);
      CHECK(res.max_rel_err < kGradTol);
    }
    {
      TreeLstmParams p("tree", d, d);
      init_all(p.parameters(), rng);
      Parameter x("x", {d}), hl("hl", {d}), cl("cl", {d}), hr("hr", {d}), cr("cr", {d});
      for (Parameter* q : {&x, &hl, &cl, &hr, &cr}) q->init_uniform(rng, -1, 1);
      auto params = p.parameters();
      for (Parameter* q : {&x, &hl, &cl, &hr, &cr}) params.push_back(q);
      auto res = gradcheck(
          [&](Tape& t) {
            auto [h, c] = treelstm_node(t.use(x), {t.use(hl), t.use(cl)},
                                        {t.use(hr), t.use(cr)}, p.bind(t));
            return add(sum(hadamard(h, h)), sum(c));
          },
          params);
      CHECK(res.max_rel_err < kGradTol);
    }
    {
      DetectParams p("det", d, d);
      init_all(p.parameters(), rng);
      Parameter x("x", {d}), xn("xn", {d}), pp("pp", {d}), rp("rp", {1});
      for (Parameter* q : {&x, &xn, &pp}) q->init_uniform(rng, -1, 1);
      rp.value[0] = 0.35;
      auto params = p.parameters();
      for (Parameter* q : {&x, &xn, &pp, &rp}) params.push_back(q);
      auto res = gradcheck(
          [&](Tape& t) {
            auto out = detect_step(t.use(x), t.use(xn), t.use(rp), t.use(pp), p.bind(t));
            return add(sum(hadamard(out.p, out.p)), out.r);
          },
          params);
      CHECK(res.max_rel_err < kGradTol);
    }
    {
      DescribeParams p("desc", d, d);
      init_all(p.parameters(), rng);
      Parameter pt("pt", {d}), h0("h0", {d}), c0("c0", {d}), rt("rt", {1});
      for (Parameter* q : {&pt, &h0, &c0}) q->init_uniform(rng, -1, 1);
      rt.value[0] = 0.6;
      auto params = p.parameters();
      for (Parameter* q : {&pt, &h0, &c0, &rt}) params.push_back(q);
      auto res = gradcheck(
          [&](Tape& t) {
            auto [h, c] = describe_step(t.use(pt), t.use(rt), {t.use(h0), t.use(c0)}, p.bind(t));
            return add(sum(hadamard(h, h)), sum(c));
          },
          params);
      CHECK(res.max_rel_err < kGradTol);
    }
  }
}
