// SPDX-License-Identifier: Apache-2.0
#include "snelsd/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace snelsd::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline bool go_parallel(long work) {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) && work >= kParallelGrain &&
         omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

inline double dot_n(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

inline double apply_unary(Unary op, double v) {
  switch (op) {
    case Unary::Sigmoid:
      return 1.0 / (1.0 + std::exp(-v));
    case Unary::Tanh:
      return std::tanh(v);
    case Unary::Relu:
      return v > 0.0 ? v : 0.0;
  }
  return v;
}
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matvec_serial(const double* W, const double* x, double* y, int m, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    const double s = dot_n(W + static_cast<long>(i) * n, x, n);
    y[i] = acc ? y[i] + s : s;
  }
}

void matvec(const double* W, const double* x, double* y, int m, int n, bool acc) {
  if (!go_parallel(static_cast<long>(m) * n)) {
    matvec_serial(W, x, y, m, n, acc);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double s = dot_n(W + static_cast<long>(i) * n, x, n);
    y[i] = acc ? y[i] + s : s;
  }
}

void matvec_t_serial(const double* W, const double* g, double* y, int m, int n, bool acc) {
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += W[static_cast<long>(i) * n + j] * g[i];
    y[j] = acc ? y[j] + s : s;
  }
}

void matvec_t(const double* W, const double* g, double* y, int m, int n, bool acc) {
  if (!go_parallel(static_cast<long>(m) * n)) {
    matvec_t_serial(W, g, y, m, n, acc);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += W[static_cast<long>(i) * n + j] * g[i];
    y[j] = acc ? y[j] + s : s;
  }
}

void ger_acc_serial(const double* g, const double* x, double* W, int m, int n) {
  for (int i = 0; i < m; ++i) {
    double* row = W + static_cast<long>(i) * n;
    const double gi = g[i];
    for (int j = 0; j < n; ++j) row[j] += gi * x[j];
  }
}

void ger_acc(const double* g, const double* x, double* W, int m, int n) {
  if (!go_parallel(static_cast<long>(m) * n)) {
    ger_acc_serial(g, x, W, m, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* row = W + static_cast<long>(i) * n;
    const double gi = g[i];
    for (int j = 0; j < n; ++j) row[j] += gi * x[j];
  }
}

namespace {
inline double gemm_cell(bool ta, bool tb, int k, const double* A, const double* B,
                        int m, int n, int i, int j) {
  // Strides for op(A)[i,l] and op(B)[l,j] in row-major storage.
  double s = 0.0;
  for (int l = 0; l < k; ++l) {
    const double a = ta ? A[static_cast<long>(l) * m + i] : A[static_cast<long>(i) * k + l];
    const double b = tb ? B[static_cast<long>(j) * k + l] : B[static_cast<long>(l) * n + j];
    s += a * b;
  }
  return s;
}
}  // namespace

void gemm_serial(bool ta, bool tb, int m, int n, int k, const double* A, const double* B,
                 double* C, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s = gemm_cell(ta, tb, k, A, B, m, n, i, j);
      double& c = C[static_cast<long>(i) * n + j];
      c = acc ? c + s : s;
    }
  }
}

void gemm(bool ta, bool tb, int m, int n, int k, const double* A, const double* B,
          double* C, bool acc) {
  if (!go_parallel(static_cast<long>(m) * n * k)) {
    gemm_serial(ta, tb, m, n, k, A, B, C, acc);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s = gemm_cell(ta, tb, k, A, B, m, n, i, j);
      double& c = C[static_cast<long>(i) * n + j];
      c = acc ? c + s : s;
    }
  }
}

void map_unary_serial(Unary op, const double* x, double* y, long n) {
  for (long i = 0; i < n; ++i) y[i] = apply_unary(op, x[i]);
}

void map_unary(Unary op, const double* x, double* y, long n) {
  if (!go_parallel(n * 8)) {
    map_unary_serial(op, x, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] = apply_unary(op, x[i]);
}

#define SNELSD_ELEMENTWISE(fn, expr)                       \
  void fn##_serial(const double* a, const double* b, double* y, long n) { \
    for (long i = 0; i < n; ++i) expr;                     \
  }                                                        \
  void fn(const double* a, const double* b, double* y, long n) {          \
    if (!go_parallel(n * 2)) {                             \
      fn##_serial(a, b, y, n);                             \
      return;                                              \
    }                                                      \
    _Pragma("omp parallel for schedule(static)")           \
    for (long i = 0; i < n; ++i) expr;                     \
  }

SNELSD_ELEMENTWISE(mul, y[i] = a[i] * b[i])
SNELSD_ELEMENTWISE(mul_acc, y[i] += a[i] * b[i])
SNELSD_ELEMENTWISE(add, y[i] = a[i] + b[i])
SNELSD_ELEMENTWISE(sub, y[i] = a[i] - b[i])

#undef SNELSD_ELEMENTWISE

void acc_serial(const double* a, double* y, long n) {
  for (long i = 0; i < n; ++i) y[i] += a[i];
}

void acc(const double* a, double* y, long n) {
  if (!go_parallel(n * 2)) {
    acc_serial(a, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] += a[i];
}

}  // namespace snelsd::kernels
