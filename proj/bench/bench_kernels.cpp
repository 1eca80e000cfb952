// SPDX-License-Identifier: Apache-2.0
// Timing harness for the dense kernels: runs each parallel entry point
// against its serial reference twin on a fixed workload, checks the outputs
// are bit-identical, and reports throughput and speedup. Self-contained, no
// benchmark framework.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "snelsd/kernels.hpp"
#include "snelsd/rng.hpp"

namespace {

using snelsd::Rng;
namespace k = snelsd::kernels;

std::vector<double> rand_vec(Rng& rng, long n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Runs fn repeatedly until ~0.2s has elapsed and returns seconds per call.
double time_per_call(const std::function<void()>& fn) {
  fn();  // warm up, also faults pages in
  long reps = 1;
  for (;;) {
    const auto start = std::chrono::steady_clock::now();
    for (long i = 0; i < reps; ++i) fn();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= 0.2 || reps >= (1L << 24)) return secs / static_cast<double>(reps);
    reps = secs <= 0.0 ? reps * 16 : std::max(reps * 2, static_cast<long>(0.25 / secs * reps));
  }
}

struct Case {
  std::string name;
  double flops;  // arithmetic operations per call, for the throughput column
  std::function<void()> parallel;
  std::function<void()> serial;
  std::function<bool()> identical;  // parallel output == serial output, bitwise
};

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  // One optional scale factor stretches every workload, e.g. bench_kernels 2.
  double scale = 1.0;
  if (argc > 1) scale = std::atof(argv[1]);
  if (!(scale > 0.0)) scale = 1.0;
  const int m = static_cast<int>(512 * std::sqrt(scale));
  const int n = m;
  const int gm = static_cast<int>(192 * std::cbrt(scale));
  const long en = static_cast<long>(scale * (1L << 21));

  Rng rng(42);
  const std::vector<double> W = rand_vec(rng, static_cast<long>(m) * n);
  const std::vector<double> x = rand_vec(rng, n);
  const std::vector<double> g = rand_vec(rng, m);
  const std::vector<double> A = rand_vec(rng, static_cast<long>(gm) * gm);
  const std::vector<double> B = rand_vec(rng, static_cast<long>(gm) * gm);
  const std::vector<double> ea = rand_vec(rng, en);
  const std::vector<double> eb = rand_vec(rng, en);

  std::vector<double> out_p(std::max({static_cast<long>(m) * n, static_cast<long>(gm) * gm, en}));
  std::vector<double> out_s(out_p.size());

  auto fill = [&](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.25); };

  std::vector<Case> cases;
  cases.push_back({"matvec " + std::to_string(m) + "x" + std::to_string(n),
                   2.0 * m * n,
                   [&] { k::matvec(W.data(), x.data(), out_p.data(), m, n, false); },
                   [&] { k::matvec_serial(W.data(), x.data(), out_s.data(), m, n, false); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"matvec_t " + std::to_string(m) + "x" + std::to_string(n),
                   2.0 * m * n,
                   [&] { k::matvec_t(W.data(), g.data(), out_p.data(), m, n, false); },
                   [&] { k::matvec_t_serial(W.data(), g.data(), out_s.data(), m, n, false); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"ger_acc " + std::to_string(m) + "x" + std::to_string(n),
                   2.0 * m * n,
                   [&] { fill(out_p); k::ger_acc(g.data(), x.data(), out_p.data(), m, n); },
                   [&] { fill(out_s); k::ger_acc_serial(g.data(), x.data(), out_s.data(), m, n); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"gemm " + std::to_string(gm) + "^3",
                   2.0 * gm * gm * gm,
                   [&] { k::gemm(false, false, gm, gm, gm, A.data(), B.data(), out_p.data(), false); },
                   [&] { k::gemm_serial(false, false, gm, gm, gm, A.data(), B.data(), out_s.data(), false); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"gemm_nt " + std::to_string(gm) + "^3",
                   2.0 * gm * gm * gm,
                   [&] { k::gemm(false, true, gm, gm, gm, A.data(), B.data(), out_p.data(), false); },
                   [&] { k::gemm_serial(false, true, gm, gm, gm, A.data(), B.data(), out_s.data(), false); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"tanh n=" + std::to_string(en),
                   static_cast<double>(en),
                   [&] { k::map_unary(k::Unary::Tanh, ea.data(), out_p.data(), en); },
                   [&] { k::map_unary_serial(k::Unary::Tanh, ea.data(), out_s.data(), en); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"sigmoid n=" + std::to_string(en),
                   static_cast<double>(en),
                   [&] { k::map_unary(k::Unary::Sigmoid, ea.data(), out_p.data(), en); },
                   [&] { k::map_unary_serial(k::Unary::Sigmoid, ea.data(), out_s.data(), en); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"mul n=" + std::to_string(en),
                   static_cast<double>(en),
                   [&] { k::mul(ea.data(), eb.data(), out_p.data(), en); },
                   [&] { k::mul_serial(ea.data(), eb.data(), out_s.data(), en); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"mul_acc n=" + std::to_string(en),
                   2.0 * static_cast<double>(en),
                   [&] { fill(out_p); k::mul_acc(ea.data(), eb.data(), out_p.data(), en); },
                   [&] { fill(out_s); k::mul_acc_serial(ea.data(), eb.data(), out_s.data(), en); },
                   [&] { return bits_equal(out_p, out_s); }});
  cases.push_back({"add n=" + std::to_string(en),
                   static_cast<double>(en),
                   [&] { k::add(ea.data(), eb.data(), out_p.data(), en); },
                   [&] { k::add_serial(ea.data(), eb.data(), out_s.data(), en); },
                   [&] { return bits_equal(out_p, out_s); }});

  std::printf("kernel benchmark: parallel entry points vs serial reference twins\n");
  std::printf("threads available: %d (grain %ld output elements x inner length)\n\n",
              k::max_threads(), k::kParallelGrain);
  std::printf("%-22s %14s %14s %9s %10s  %s\n", "kernel", "parallel", "serial", "speedup",
              "gflop/s", "outputs");

  bool all_identical = true;
  for (Case& c : cases) {
    k::set_parallel(true);
    const double tp = time_per_call(c.parallel);
    k::set_parallel(false);
    const double ts = time_per_call(c.serial);
    k::set_parallel(true);
    // Re-run both once on clean buffers before comparing.
    c.parallel();
    c.serial();
    const bool same = c.identical();
    all_identical = all_identical && same;
    std::printf("%-22s %11.3f ms %11.3f ms %8.2fx %10.2f  %s\n", c.name.c_str(), tp * 1e3,
                ts * 1e3, ts / tp, c.flops / tp * 1e-9, same ? "bit-identical" : "DIFFER");
  }

  std::printf("\n%s\n", all_identical ? "all parallel outputs bit-identical to serial reference"
                                      : "MISMATCH between parallel and serial outputs");
  return all_identical ? 0 : 1;
}
