// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense kernels behind the tensor engine. Each kernel comes in two builds:
// the default entry point, which parallelizes over independent output
// elements with OpenMP once the work is large enough, and a *_serial twin
// kept as the reference implementation for tests and benchmarks.
//
// Every output element is written by exactly one thread and every inner
// summation runs in a fixed serial order, so the parallel and serial paths
// produce bit-identical results at any thread count.

namespace snelsd::kernels {

// Work threshold (output elements x inner length) below which the parallel
// entry points stay on the calling thread.
inline constexpr long kParallelGrain = 16 * 1024;

// Runtime switch, on by default. Benchmarks and tests flip it to pin a path.
bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

// y = W x, W is m x n row-major. acc adds into y instead of overwriting.
void matvec(const double* W, const double* x, double* y, int m, int n, bool acc);
void matvec_serial(const double* W, const double* x, double* y, int m, int n, bool acc);

// y = W^T g, W is m x n row-major, g has length m, y length n.
void matvec_t(const double* W, const double* g, double* y, int m, int n, bool acc);
void matvec_t_serial(const double* W, const double* g, double* y, int m, int n, bool acc);

// W += g x^T (rank-1 update of an m x n matrix).
void ger_acc(const double* g, const double* x, double* W, int m, int n);
void ger_acc_serial(const double* g, const double* x, double* W, int m, int n);

// C = op(A) op(B) with op = transpose when the flag is set.
// A is (ta ? k x m : m x k), B is (tb ? n x k : k x n), C is m x n.
void gemm(bool ta, bool tb, int m, int n, int k, const double* A, const double* B,
          double* C, bool acc);
void gemm_serial(bool ta, bool tb, int m, int n, int k, const double* A, const double* B,
                 double* C, bool acc);

enum class Unary { Sigmoid, Tanh, Relu };

void map_unary(Unary op, const double* x, double* y, long n);
void map_unary_serial(Unary op, const double* x, double* y, long n);

// y = a * b elementwise.
void mul(const double* a, const double* b, double* y, long n);
void mul_serial(const double* a, const double* b, double* y, long n);

// y += a * b elementwise.
void mul_acc(const double* a, const double* b, double* y, long n);
void mul_acc_serial(const double* a, const double* b, double* y, long n);

// y = a + b / y = a - b elementwise.
void add(const double* a, const double* b, double* y, long n);
void add_serial(const double* a, const double* b, double* y, long n);
void sub(const double* a, const double* b, double* y, long n);
void sub_serial(const double* a, const double* b, double* y, long n);

// y += a elementwise.
void acc(const double* a, double* y, long n);
void acc_serial(const double* a, double* y, long n);

}  // namespace snelsd::kernels
