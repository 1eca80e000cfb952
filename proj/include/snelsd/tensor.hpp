// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snelsd/error.hpp"
#include "snelsd/rng.hpp"

// Reverse-mode autodiff over dense 64-bit tensors, eager execution on a
// per-step tape. Tensors are cheap handles into the tape; persistent model
// state lives in Parameter objects outside any tape and is bridged in with
// Tape::use / Tape::embed. Shapes are 1-D vectors or 2-D row-major matrices;
// a scalar is a length-1 vector. One tape is confined to one worker.

namespace snelsd {

class Tape;

std::string shape_str(std::span<const int> shape);

// Named persistent storage for a trainable (or frozen) tensor. Gradients
// accumulate here across backward passes until zero_grad.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape);

  long size() const { return static_cast<long>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }

  void init_uniform(Rng& rng, double lo, double hi);
  // Scaled-uniform init in +-sqrt(6 / (fan_in + fan_out)).
  void init_glorot(Rng& rng, int fan_in, int fan_out);
};

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return tape_ != nullptr; }
  const std::vector<int>& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  int rows() const { return shape()[0]; }
  int cols() const { return ndim() > 1 ? shape()[1] : 1; }
  long size() const;
  bool requires_grad() const;

  std::span<const double> values() const;
  std::span<const double> grad() const;
  std::vector<double> to_vector() const;
  double value(long i) const { return values()[i]; }
  // Value of a scalar (length-1) tensor.
  double item() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Fresh leaf holding a copy of values.
  Tensor leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
  Tensor scalar(double v, bool requires_grad = false);
  Tensor constant(std::vector<int> shape, double fill = 0.0);

  // Leaf view of a persistent parameter; backward adds into p.grad.
  Tensor use(Parameter& p);

  // Row gather from an embedding-style parameter: one output row per id.
  // Backward scatters into the corresponding rows of table.grad.
  Tensor embed(Parameter& table, std::span<const int> ids);
  // Single row as a 1-D vector.
  Tensor embed_row(Parameter& table, int id);

  // Reverse pass from a scalar loss: visits every recorded operation once,
  // newest first, accumulating gradients additively into all requires_grad
  // nodes (and through them into Parameters).
  void backward(const Tensor& loss);

  // Drops all nodes; outstanding Tensor handles become invalid.
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

  // --- engine internals, used by the op free functions ---
  struct Node {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void()> backprop;  // empty for leaves without parameters
  };

  int make_node(std::vector<int> shape, std::vector<double> values, bool requires_grad);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor handle(int id) { return Tensor(this, id); }

 private:
  std::vector<Node> nodes_;
};

enum class Activation { Sigmoid, Tanh, Relu };

// y = W x + b. x may be a vector [n] -> [m], or a matrix of row samples
// [r x n] -> [r x m] with the bias added to every row.
Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b);

// Fused two-input gate preactivation: W x + U h + b, batched like affine.
Tensor affine2(const Tensor& x, const Tensor& W, const Tensor& h, const Tensor& U,
               const Tensor& b);

// Three-input form for tree nodes: W x + Ul hl + Ur hr + b (vectors only).
Tensor affine3(const Tensor& x, const Tensor& W, const Tensor& hl, const Tensor& Ul,
               const Tensor& hr, const Tensor& Ur, const Tensor& b);

Tensor activate(Activation kind, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);

// Juxtaposition along axis (0 = stack rows / extend vector, 1 = widen rows).
Tensor concat(std::span<const Tensor> parts, int axis = 0);
Tensor concat(std::initializer_list<Tensor> parts, int axis = 0);

// Row-stable softmax (max subtraction). A vector is treated as one row.
Tensor softmax_rows(const Tensor& e);
// Softmax over columns with mask[j] == 1 only; masked columns get weight 0.
// A row with no valid column raises EmptySequenceError.
Tensor masked_softmax_rows(const Tensor& e, const Tensor& mask);

// Pooling over rows of seq [l x d] restricted to mask == 1 positions; the
// mean divisor is the valid count. Max ties break to the lowest row index.
Tensor masked_mean(const Tensor& seq, const Tensor& mask);
Tensor masked_max(const Tensor& seq, const Tensor& mask);

Tensor matmul(const Tensor& A, const Tensor& B);     // [m x k][k x n]
Tensor matmul_nt(const Tensor& A, const Tensor& B);  // A B^T, [m x k][n x k]
Tensor matvec(const Tensor& A, const Tensor& v);     // [m x n][n] -> [m]
Tensor dot(const Tensor& a, const Tensor& b);        // -> scalar

Tensor sum(const Tensor& x);          // -> scalar
Tensor pick(const Tensor& x, long i);  // element of a vector -> scalar
Tensor neg_log(const Tensor& x, double clamp);  // -log(max(x, clamp)), scalar

// Same values under a new shape of equal element count.
Tensor reshape(const Tensor& x, std::vector<int> shape);

Tensor row(const Tensor& x, int r);  // row of a matrix -> vector
// Same row from each step tensor, stacked into [steps x cols].
Tensor stack_rows(std::span<const Tensor> steps, int r);
// Vector repeated as r rows; backward sums the row gradients.
Tensor broadcast_rows(const Tensor& v, int r);
Tensor transpose(const Tensor& x);

// (1 - t) * when_zero + t * when_one, t a scalar tensor.
Tensor lerp(const Tensor& t, const Tensor& when_one, const Tensor& when_zero);
// Row-wise variant, t holds one coefficient per row.
Tensor lerp_rows(const Tensor& t, const Tensor& when_one, const Tensor& when_zero);
// Rows of A scaled by s[i].
Tensor scale_rows(const Tensor& A, const Tensor& s);

}  // namespace snelsd
