// SPDX-License-Identifier: Apache-2.0
#include "snelsd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snelsd/kernels.hpp"

namespace snelsd {

namespace {

long numel_of(std::span<const int> shape) {
  long n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tape* tape_of(std::initializer_list<Tensor> ts) {
  Tape* tape = nullptr;
  for (const Tensor& t : ts) {
    if (!t.defined()) throw ContractError("operation on an undefined tensor");
    if (tape == nullptr) tape = t.tape();
    if (t.tape() != tape) throw ContractError("operands belong to different tapes");
  }
  return tape;
}

[[noreturn]] void dim_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw DimensionError(op + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " do not conform");
}

void require_vector(const std::string& op, const Tensor& t) {
  if (t.ndim() != 1) {
    throw DimensionError(op + ": expected a vector, got shape " + shape_str(t.shape()));
  }
}

void require_matrix(const std::string& op, const Tensor& t) {
  if (t.ndim() != 2) {
    throw DimensionError(op + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

bool any_grad(std::initializer_list<Tensor> ts) {
  for (const Tensor& t : ts) {
    if (t.requires_grad()) return true;
  }
  return false;
}

}  // namespace

std::string shape_str(std::span<const int> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " " : "") << shape[i];
  os << "]";
  return os.str();
}

Parameter::Parameter(std::string name, std::vector<int> shape_in)
    : name(std::move(name)), shape(std::move(shape_in)) {
  const long n = numel_of(shape);
  value.assign(static_cast<std::size_t>(n), 0.0);
  grad.assign(static_cast<std::size_t>(n), 0.0);
}

void Parameter::init_uniform(Rng& rng, double lo, double hi) {
  for (double& v : value) v = rng.uniform(lo, hi);
}

void Parameter::init_glorot(Rng& rng, int fan_in, int fan_out) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  init_uniform(rng, -bound, bound);
}

const std::vector<int>& Tensor::shape() const { return tape_->node(id_).shape; }
long Tensor::size() const { return static_cast<long>(tape_->node(id_).values.size()); }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

std::span<const double> Tensor::values() const { return tape_->node(id_).values; }
std::span<const double> Tensor::grad() const { return tape_->node(id_).grad; }
std::vector<double> Tensor::to_vector() const {
  const auto v = values();
  return std::vector<double>(v.begin(), v.end());
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
  }
  return values()[0];
}

int Tape::make_node(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  Node n;
  n.shape = std::move(shape);
  n.values = std::move(values);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad.assign(n.values.size(), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != static_cast<long>(values.size())) {
    throw DimensionError("leaf: shape " + shape_str(shape) + " needs " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  return handle(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tape::scalar(double v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

Tensor Tape::constant(std::vector<int> shape, double fill) {
  const long n = numel_of(shape);
  return handle(make_node(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), fill), false));
}

Tensor Tape::use(Parameter& p) {
  const int id = make_node(p.shape, p.value, p.trainable);
  if (p.trainable) {
    Parameter* pp = &p;
    node(id).backprop = [this, id, pp] {
      kernels::acc(node(id).grad.data(), pp->grad.data(), static_cast<long>(pp->grad.size()));
    };
  }
  return handle(id);
}

Tensor Tape::embed(Parameter& table, std::span<const int> ids) {
  if (table.shape.size() != 2) {
    throw DimensionError("embed: table must be a matrix, got shape " + shape_str(table.shape));
  }
  const int d = table.shape[1];
  const int b = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(b) * d);
  for (int i = 0; i < b; ++i) {
    const int id = ids[i];
    if (id < 0 || id >= table.shape[0]) {
      throw ContractError("embed: id " + std::to_string(id) + " outside table of " +
                          std::to_string(table.shape[0]) + " rows");
    }
    std::copy_n(table.value.data() + static_cast<long>(id) * d, d, out.data() + static_cast<long>(i) * d);
  }
  const int nid = make_node({b, d}, std::move(out), table.trainable);
  if (table.trainable) {
    Parameter* tp = &table;
    std::vector<int> idv(ids.begin(), ids.end());
    node(nid).backprop = [this, nid, tp, idv, d] {
      const auto& g = node(nid).grad;
      for (std::size_t i = 0; i < idv.size(); ++i) {
        kernels::acc_serial(g.data() + static_cast<long>(i) * d,
                            tp->grad.data() + static_cast<long>(idv[i]) * d, d);
      }
    };
  }
  return handle(nid);
}

Tensor Tape::embed_row(Parameter& table, int id) {
  const int ids[1] = {id};
  Tensor m = embed(table, ids);
  // reshape [1 x d] to [d]
  node(m.id()).shape = {table.shape[1]};
  return m;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.tape() != this) {
    throw ContractError("backward: loss is not on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss of shape " + shape_str(loss.shape()) + " is not scalar");
  }
  if (!loss.requires_grad()) return;
  node(loss.id()).grad[0] += 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.backprop) n.backprop();
  }
}

void Tape::reset() { nodes_.clear(); }

// ---------------------------------------------------------------------------
// ops

Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
  return affine2(x, W, Tensor(), Tensor(), b);
}

// Shared implementation of W x (+ U h) + b for vectors and row batches.
Tensor affine2(const Tensor& x, const Tensor& W, const Tensor& h, const Tensor& U,
               const Tensor& b) {
  const bool has_u = h.defined();
  Tape* tape = has_u ? tape_of({x, W, h, U, b}) : tape_of({x, W, b});
  require_matrix("affine", W);
  const int m = W.rows(), n = W.cols();
  if (b.ndim() != 1 || b.rows() != m) dim_error("affine: bias", W, b);
  if (x.ndim() == 1) {
    if (x.rows() != n) dim_error("affine", W, x);
    if (has_u) {
      require_matrix("affine", U);
      require_vector("affine", h);
      if (U.rows() != m || U.cols() != h.rows()) dim_error("affine", U, h);
    }
    std::vector<double> out(static_cast<std::size_t>(m));
    kernels::matvec(W.values().data(), x.values().data(), out.data(), m, n, false);
    if (has_u) {
      kernels::matvec(U.values().data(), h.values().data(), out.data(), m, U.cols(), true);
    }
    kernels::acc(b.values().data(), out.data(), m);
    const bool rg = has_u ? any_grad({x, W, h, U, b}) : any_grad({x, W, b});
    const int id = tape->make_node({m}, std::move(out), rg);
    if (rg) {
      const int xi = x.id(), wi = W.id(), bi = b.id();
      const int hi = has_u ? h.id() : -1, ui = has_u ? U.id() : -1;
      tape->node(id).backprop = [tape, id, xi, wi, bi, hi, ui, m, n] {
        const auto& g = tape->node(id).grad;
        auto& xn = tape->node(xi);
        auto& wn = tape->node(wi);
        auto& bn = tape->node(bi);
        if (wn.requires_grad) {
          kernels::ger_acc(g.data(), xn.values.data(), wn.grad.data(), m, n);
        }
        if (xn.requires_grad) {
          kernels::matvec_t(wn.values.data(), g.data(), xn.grad.data(), m, n, true);
        }
        if (bn.requires_grad) kernels::acc(g.data(), bn.grad.data(), m);
        if (hi >= 0) {
          auto& hn = tape->node(hi);
          auto& un = tape->node(ui);
          const int p = static_cast<int>(hn.values.size());
          if (un.requires_grad) {
            kernels::ger_acc(g.data(), hn.values.data(), un.grad.data(), m, p);
          }
          if (hn.requires_grad) {
            kernels::matvec_t(un.values.data(), g.data(), hn.grad.data(), m, p, true);
          }
        }
      };
    }
    return tape->handle(id);
  }

  require_matrix("affine", x);
  const int r = x.rows();
  if (x.cols() != n) dim_error("affine", W, x);
  if (has_u) {
    require_matrix("affine", U);
    require_matrix("affine", h);
    if (U.rows() != m || h.rows() != r || h.cols() != U.cols()) dim_error("affine", U, h);
  }
  std::vector<double> out(static_cast<std::size_t>(r) * m);
  kernels::gemm(false, true, r, m, n, x.values().data(), W.values().data(), out.data(), false);
  if (has_u) {
    kernels::gemm(false, true, r, m, U.cols(), h.values().data(), U.values().data(), out.data(), true);
  }
  for (int i = 0; i < r; ++i) {
    kernels::acc_serial(b.values().data(), out.data() + static_cast<long>(i) * m, m);
  }
  const bool rg = has_u ? any_grad({x, W, h, U, b}) : any_grad({x, W, b});
  const int id = tape->make_node({r, m}, std::move(out), rg);
  if (rg) {
    const int xi = x.id(), wi = W.id(), bi = b.id();
    const int hi = has_u ? h.id() : -1, ui = has_u ? U.id() : -1;
    tape->node(id).backprop = [tape, id, xi, wi, bi, hi, ui, r, m, n] {
      const auto& g = tape->node(id).grad;
      auto& xn = tape->node(xi);
      auto& wn = tape->node(wi);
      auto& bn = tape->node(bi);
      if (xn.requires_grad) {
        kernels::gemm(false, false, r, n, m, g.data(), wn.values.data(), xn.grad.data(), true);
      }
      if (wn.requires_grad) {
        kernels::gemm(true, false, m, n, r, g.data(), xn.values.data(), wn.grad.data(), true);
      }
      if (bn.requires_grad) {
        for (int i = 0; i < r; ++i) {
          kernels::acc_serial(g.data() + static_cast<long>(i) * m, bn.grad.data(), m);
        }
      }
      if (hi >= 0) {
        auto& hn = tape->node(hi);
        auto& un = tape->node(ui);
        const int p = static_cast<int>(un.shape[1]);
        if (hn.requires_grad) {
          kernels::gemm(false, false, r, p, m, g.data(), un.values.data(), hn.grad.data(), true);
        }
        if (un.requires_grad) {
          kernels::gemm(true, false, m, p, r, g.data(), hn.values.data(), un.grad.data(), true);
        }
      }
    };
  }
  return tape->handle(id);
}

Tensor affine3(const Tensor& x, const Tensor& W, const Tensor& hl, const Tensor& Ul,
               const Tensor& hr, const Tensor& Ur, const Tensor& b) {
  Tensor partial = affine2(x, W, hl, Ul, b);
  // fold in the right child through a bias-free second pass
  Tape* tape = partial.tape();
  require_matrix("affine", Ur);
  require_vector("affine", hr);
  const int m = Ur.rows(), p = Ur.cols();
  if (hr.rows() != p || partial.rows() != m) dim_error("affine", Ur, hr);
  std::vector<double> out = partial.to_vector();
  kernels::matvec(Ur.values().data(), hr.values().data(), out.data(), m, p, true);
  const bool rg = any_grad({partial, hr, Ur});
  const int id = tape->make_node({m}, std::move(out), rg);
  if (rg) {
    const int pi = partial.id(), hi = hr.id(), ui = Ur.id();
    tape->node(id).backprop = [tape, id, pi, hi, ui, m, p] {
      const auto& g = tape->node(id).grad;
      auto& pn = tape->node(pi);
      auto& hn = tape->node(hi);
      auto& un = tape->node(ui);
      if (pn.requires_grad) kernels::acc(g.data(), pn.grad.data(), m);
      if (un.requires_grad) kernels::ger_acc(g.data(), hn.values.data(), un.grad.data(), m, p);
      if (hn.requires_grad) kernels::matvec_t(un.values.data(), g.data(), hn.grad.data(), m, p, true);
    };
  }
  return tape->handle(id);
}

Tensor activate(Activation kind, const Tensor& x) {
  Tape* tape = tape_of({x});
  const long n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const kernels::Unary op = kind == Activation::Sigmoid ? kernels::Unary::Sigmoid
                            : kind == Activation::Tanh  ? kernels::Unary::Tanh
                                                        : kernels::Unary::Relu;
  kernels::map_unary(op, x.values().data(), out.data(), n);
  const bool rg = x.requires_grad();
  const int id = tape->make_node(x.shape(), std::move(out), rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, kind, n] {
      const auto& y = tape->node(id).values;
      const auto& g = tape->node(id).grad;
      auto& xg = tape->node(xi).grad;
      switch (kind) {
        case Activation::Sigmoid:
          for (long i = 0; i < n; ++i) xg[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        case Activation::Tanh:
          for (long i = 0; i < n; ++i) xg[i] += g[i] * (1.0 - y[i] * y[i]);
          break;
        case Activation::Relu:
          for (long i = 0; i < n; ++i) xg[i] += y[i] > 0.0 ? g[i] : 0.0;
          break;
      }
    };
  }
  return tape->handle(id);
}

Tensor sigmoid(const Tensor& x) { return activate(Activation::Sigmoid, x); }
Tensor tanh_act(const Tensor& x) { return activate(Activation::Tanh, x); }
Tensor relu(const Tensor& x) { return activate(Activation::Relu, x); }

namespace {

enum class Elementwise { Add, Sub, Mul };

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  Tape* tape = tape_of({a, b});
  if (a.shape() != b.shape()) {
    dim_error(op == Elementwise::Add   ? "add"
              : op == Elementwise::Sub ? "sub"
                                       : "hadamard",
              a, b);
  }
  const long n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  switch (op) {
    case Elementwise::Add:
      kernels::add(a.values().data(), b.values().data(), out.data(), n);
      break;
    case Elementwise::Sub:
      kernels::sub(a.values().data(), b.values().data(), out.data(), n);
      break;
    case Elementwise::Mul:
      kernels::mul(a.values().data(), b.values().data(), out.data(), n);
      break;
  }
  const bool rg = any_grad({a, b});
  const int id = tape->make_node(a.shape(), std::move(out), rg);
  if (rg) {
    const int ai = a.id(), bi = b.id();
    tape->node(id).backprop = [tape, id, ai, bi, op, n] {
      const auto& g = tape->node(id).grad;
      auto& an = tape->node(ai);
      auto& bn = tape->node(bi);
      switch (op) {
        case Elementwise::Add:
          if (an.requires_grad) kernels::acc(g.data(), an.grad.data(), n);
          if (bn.requires_grad) kernels::acc(g.data(), bn.grad.data(), n);
          break;
        case Elementwise::Sub:
          if (an.requires_grad) kernels::acc(g.data(), an.grad.data(), n);
          if (bn.requires_grad) {
            for (long i = 0; i < n; ++i) bn.grad[i] -= g[i];
          }
          break;
        case Elementwise::Mul:
          if (an.requires_grad) kernels::mul_acc(g.data(), bn.values.data(), an.grad.data(), n);
          if (bn.requires_grad) kernels::mul_acc(g.data(), an.values.data(), bn.grad.data(), n);
          break;
      }
    };
  }
  return tape->handle(id);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::Sub, a, b); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::Mul, a, b); }

Tensor scale(const Tensor& x, double c) {
  Tape* tape = tape_of({x});
  const long n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) out[i] = c * x.value(i);
  const bool rg = x.requires_grad();
  const int id = tape->make_node(x.shape(), std::move(out), rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, c, n] {
      const auto& g = tape->node(id).grad;
      auto& xg = tape->node(xi).grad;
      for (long i = 0; i < n; ++i) xg[i] += c * g[i];
    };
  }
  return tape->handle(id);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw EmptySequenceError("concat: no parts");
  Tape* tape = parts[0].tape();
  const int nd = parts[0].ndim();
  if (axis < 0 || axis >= nd) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(parts[0].shape()));
  }
  long total_axis = 0;
  for (const Tensor& p : parts) {
    tape_of({parts[0], p});
    if (p.ndim() != nd) dim_error("concat", parts[0], p);
    for (int d = 0; d < nd; ++d) {
      if (d != axis && p.shape()[d] != parts[0].shape()[d]) dim_error("concat", parts[0], p);
    }
    total_axis += p.shape()[axis];
  }
  std::vector<int> shape = parts[0].shape();
  shape[axis] = static_cast<int>(total_axis);

  std::vector<double> out(static_cast<std::size_t>(numel_of(shape)));
  std::vector<int> ids;
  ids.reserve(parts.size());
  if (nd == 1 || axis == 0) {
    long off = 0;
    for (const Tensor& p : parts) {
      std::copy_n(p.values().data(), p.size(), out.data() + off);
      off += p.size();
      ids.push_back(p.id());
    }
  } else {
    // axis == 1: interleave rows
    const int r = shape[0];
    const int cols_out = shape[1];
    long col_off = 0;
    for (const Tensor& p : parts) {
      const int c = p.cols();
      for (int i = 0; i < r; ++i) {
        std::copy_n(p.values().data() + static_cast<long>(i) * c, c,
                    out.data() + static_cast<long>(i) * cols_out + col_off);
      }
      col_off += c;
      ids.push_back(p.id());
    }
  }
  bool rg = false;
  for (const Tensor& p : parts) rg = rg || p.requires_grad();
  const int id = tape->make_node(shape, std::move(out), rg);
  if (rg) {
    const int cols_out = nd == 2 ? shape[1] : 0;
    const int r = shape[0];
    tape->node(id).backprop = [tape, id, ids, axis, nd, cols_out, r] {
      const auto& g = tape->node(id).grad;
      if (nd == 1 || axis == 0) {
        long off = 0;
        for (int pid : ids) {
          auto& pn = tape->node(pid);
          const long sz = static_cast<long>(pn.values.size());
          if (pn.requires_grad) kernels::acc_serial(g.data() + off, pn.grad.data(), sz);
          off += sz;
        }
      } else {
        long col_off = 0;
        for (int pid : ids) {
          auto& pn = tape->node(pid);
          const int c = pn.shape[1];
          if (pn.requires_grad) {
            for (int i = 0; i < r; ++i) {
              kernels::acc_serial(g.data() + static_cast<long>(i) * cols_out + col_off,
                                  pn.grad.data() + static_cast<long>(i) * c, c);
            }
          }
          col_off += c;
        }
      }
    };
  }
  return tape->handle(id);
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

namespace {

// rows-of helper treating a vector as a single row
void rowdims(const Tensor& t, int& r, int& c) {
  if (t.ndim() == 1) {
    r = 1;
    c = t.rows();
  } else {
    r = t.rows();
    c = t.cols();
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& e) {
  Tape* tape = tape_of({e});
  int r, c;
  rowdims(e, r, c);
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  const double* x = e.values().data();
  for (int i = 0; i < r; ++i) {
    const double* xi = x + static_cast<long>(i) * c;
    double* yi = out.data() + static_cast<long>(i) * c;
    double mx = xi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      s += yi[j];
    }
    for (int j = 0; j < c; ++j) yi[j] /= s;
  }
  const bool rg = e.requires_grad();
  const int id = tape->make_node(e.shape(), std::move(out), rg);
  if (rg) {
    const int ei = e.id();
    tape->node(id).backprop = [tape, id, ei, r, c] {
      const auto& y = tape->node(id).values;
      const auto& g = tape->node(id).grad;
      auto& eg = tape->node(ei).grad;
      for (int i = 0; i < r; ++i) {
        const double* yi = y.data() + static_cast<long>(i) * c;
        const double* gi = g.data() + static_cast<long>(i) * c;
        double dotgy = 0.0;
        for (int j = 0; j < c; ++j) dotgy += gi[j] * yi[j];
        double* egi = eg.data() + static_cast<long>(i) * c;
        for (int j = 0; j < c; ++j) egi[j] += yi[j] * (gi[j] - dotgy);
      }
    };
  }
  return tape->handle(id);
}

Tensor masked_softmax_rows(const Tensor& e, const Tensor& mask) {
  Tape* tape = tape_of({e, mask});
  require_matrix("masked_softmax_rows", e);
  require_vector("masked_softmax_rows", mask);
  const int r = e.rows(), c = e.cols();
  if (mask.rows() != c) dim_error("masked_softmax_rows", e, mask);
  const double* mv = mask.values().data();
  int valid = 0;
  for (int j = 0; j < c; ++j) {
    if (mv[j] != 0.0 && mv[j] != 1.0) {
      throw ContractError("masked_softmax_rows: mask entries must be 0 or 1");
    }
    valid += mv[j] == 1.0;
  }
  if (valid == 0) throw EmptySequenceError("masked_softmax_rows: mask has no valid position");
  std::vector<double> out(static_cast<std::size_t>(r) * c, 0.0);
  const double* x = e.values().data();
  for (int i = 0; i < r; ++i) {
    const double* xi = x + static_cast<long>(i) * c;
    double* yi = out.data() + static_cast<long>(i) * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      if (mv[j] == 1.0) mx = std::max(mx, xi[j]);
    }
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      if (mv[j] == 1.0) {
        yi[j] = std::exp(xi[j] - mx);
        s += yi[j];
      }
    }
    for (int j = 0; j < c; ++j) {
      if (mv[j] == 1.0) yi[j] /= s;
    }
  }
  const bool rg = e.requires_grad();
  const int id = tape->make_node(e.shape(), std::move(out), rg);
  if (rg) {
    const int ei = e.id(), mi = mask.id();
    tape->node(id).backprop = [tape, id, ei, mi, r, c] {
      const auto& y = tape->node(id).values;
      const auto& g = tape->node(id).grad;
      const auto& mv2 = tape->node(mi).values;
      auto& eg = tape->node(ei).grad;
      for (int i = 0; i < r; ++i) {
        const double* yi = y.data() + static_cast<long>(i) * c;
        const double* gi = g.data() + static_cast<long>(i) * c;
        double dotgy = 0.0;
        for (int j = 0; j < c; ++j) {
          if (mv2[j] == 1.0) dotgy += gi[j] * yi[j];
        }
        double* egi = eg.data() + static_cast<long>(i) * c;
        for (int j = 0; j < c; ++j) {
          if (mv2[j] == 1.0) egi[j] += yi[j] * (gi[j] - dotgy);
        }
      }
    };
  }
  return tape->handle(id);
}

namespace {

int checked_valid_count(const Tensor& mask, const std::string& op) {
  const double* mv = mask.values().data();
  int valid = 0;
  for (int i = 0; i < mask.rows(); ++i) {
    if (mv[i] != 0.0 && mv[i] != 1.0) {
      throw ContractError(op + ": mask entries must be 0 or 1");
    }
    valid += mv[i] == 1.0;
  }
  if (valid == 0) throw EmptySequenceError(op + ": mask has no valid position");
  return valid;
}

}  // namespace

Tensor masked_mean(const Tensor& seq, const Tensor& mask) {
  Tape* tape = tape_of({seq, mask});
  require_matrix("masked_mean", seq);
  require_vector("masked_mean", mask);
  const int l = seq.rows(), d = seq.cols();
  if (mask.rows() != l) dim_error("masked_mean", seq, mask);
  const int valid = checked_valid_count(mask, "masked_mean");
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  const double* x = seq.values().data();
  const double* mv = mask.values().data();
  for (int i = 0; i < l; ++i) {
    if (mv[i] != 1.0) continue;
    kernels::acc_serial(x + static_cast<long>(i) * d, out.data(), d);
  }
  for (int j = 0; j < d; ++j) out[j] /= valid;
  const bool rg = seq.requires_grad();
  const int id = tape->make_node({d}, std::move(out), rg);
  if (rg) {
    const int si = seq.id(), mi = mask.id();
    tape->node(id).backprop = [tape, id, si, mi, l, d, valid] {
      const auto& g = tape->node(id).grad;
      const auto& mv2 = tape->node(mi).values;
      auto& sg = tape->node(si).grad;
      for (int i = 0; i < l; ++i) {
        if (mv2[i] != 1.0) continue;
        double* row = sg.data() + static_cast<long>(i) * d;
        for (int j = 0; j < d; ++j) row[j] += g[j] / valid;
      }
    };
  }
  return tape->handle(id);
}

Tensor masked_max(const Tensor& seq, const Tensor& mask) {
  Tape* tape = tape_of({seq, mask});
  require_matrix("masked_max", seq);
  require_vector("masked_max", mask);
  const int l = seq.rows(), d = seq.cols();
  if (mask.rows() != l) dim_error("masked_max", seq, mask);
  checked_valid_count(mask, "masked_max");
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<int> arg(static_cast<std::size_t>(d), -1);
  const double* x = seq.values().data();
  const double* mv = mask.values().data();
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < l; ++i) {
      if (mv[i] != 1.0) continue;
      const double v = x[static_cast<long>(i) * d + j];
      if (arg[j] < 0 || v > out[j]) {  // strict >: ties keep the lowest index
        out[j] = v;
        arg[j] = i;
      }
    }
  }
  const bool rg = seq.requires_grad();
  const int id = tape->make_node({d}, std::move(out), rg);
  if (rg) {
    const int si = seq.id();
    tape->node(id).backprop = [tape, id, si, arg, d] {
      const auto& g = tape->node(id).grad;
      auto& sg = tape->node(si).grad;
      for (int j = 0; j < d; ++j) sg[static_cast<long>(arg[j]) * d + j] += g[j];
    };
  }
  return tape->handle(id);
}

namespace {

Tensor matmul_impl(const Tensor& A, const Tensor& B, bool nt) {
  Tape* tape = tape_of({A, B});
  require_matrix("matmul", A);
  require_matrix("matmul", B);
  const int m = A.rows(), k = A.cols();
  const int n = nt ? B.rows() : B.cols();
  const int bk = nt ? B.cols() : B.rows();
  if (bk != k) dim_error(nt ? "matmul_nt" : "matmul", A, B);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  kernels::gemm(false, nt, m, n, k, A.values().data(), B.values().data(), out.data(), false);
  const bool rg = any_grad({A, B});
  const int id = tape->make_node({m, n}, std::move(out), rg);
  if (rg) {
    const int ai = A.id(), bi = B.id();
    tape->node(id).backprop = [tape, id, ai, bi, m, n, k, nt] {
      const auto& g = tape->node(id).grad;
      auto& an = tape->node(ai);
      auto& bn = tape->node(bi);
      if (nt) {
        // C = A B^T: dA += G B; dB += G^T A
        if (an.requires_grad) {
          kernels::gemm(false, false, m, k, n, g.data(), bn.values.data(), an.grad.data(), true);
        }
        if (bn.requires_grad) {
          kernels::gemm(true, false, n, k, m, g.data(), an.values.data(), bn.grad.data(), true);
        }
      } else {
        // C = A B: dA += G B^T; dB += A^T G
        if (an.requires_grad) {
          kernels::gemm(false, true, m, k, n, g.data(), bn.values.data(), an.grad.data(), true);
        }
        if (bn.requires_grad) {
          kernels::gemm(true, false, k, n, m, an.values.data(), g.data(), bn.grad.data(), true);
        }
      }
    };
  }
  return tape->handle(id);
}

}  // namespace

Tensor matmul(const Tensor& A, const Tensor& B) { return matmul_impl(A, B, false); }
Tensor matmul_nt(const Tensor& A, const Tensor& B) { return matmul_impl(A, B, true); }

Tensor matvec(const Tensor& A, const Tensor& v) {
  Tape* tape = tape_of({A, v});
  require_matrix("matvec", A);
  require_vector("matvec", v);
  const int m = A.rows(), n = A.cols();
  if (v.rows() != n) dim_error("matvec", A, v);
  std::vector<double> out(static_cast<std::size_t>(m));
  kernels::matvec(A.values().data(), v.values().data(), out.data(), m, n, false);
  const bool rg = any_grad({A, v});
  const int id = tape->make_node({m}, std::move(out), rg);
  if (rg) {
    const int ai = A.id(), vi = v.id();
    tape->node(id).backprop = [tape, id, ai, vi, m, n] {
      const auto& g = tape->node(id).grad;
      auto& an = tape->node(ai);
      auto& vn = tape->node(vi);
      if (an.requires_grad) kernels::ger_acc(g.data(), vn.values.data(), an.grad.data(), m, n);
      if (vn.requires_grad) kernels::matvec_t(an.values.data(), g.data(), vn.grad.data(), m, n, true);
    };
  }
  return tape->handle(id);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  Tape* tape = tape_of({a, b});
  require_vector("dot", a);
  require_vector("dot", b);
  if (a.rows() != b.rows()) dim_error("dot", a, b);
  const long n = a.size();
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += a.value(i) * b.value(i);
  const bool rg = any_grad({a, b});
  const int id = tape->make_node({1}, {s}, rg);
  if (rg) {
    const int ai = a.id(), bi = b.id();
    tape->node(id).backprop = [tape, id, ai, bi, n] {
      const double g = tape->node(id).grad[0];
      auto& an = tape->node(ai);
      auto& bn = tape->node(bi);
      if (an.requires_grad) {
        for (long i = 0; i < n; ++i) an.grad[i] += g * bn.values[i];
      }
      if (bn.requires_grad) {
        for (long i = 0; i < n; ++i) bn.grad[i] += g * an.values[i];
      }
    };
  }
  return tape->handle(id);
}

Tensor sum(const Tensor& x) {
  Tape* tape = tape_of({x});
  const long n = x.size();
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += x.value(i);
  const bool rg = x.requires_grad();
  const int id = tape->make_node({1}, {s}, rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, n] {
      const double g = tape->node(id).grad[0];
      auto& xg = tape->node(xi).grad;
      for (long i = 0; i < n; ++i) xg[i] += g;
    };
  }
  return tape->handle(id);
}

Tensor pick(const Tensor& x, long i) {
  Tape* tape = tape_of({x});
  if (i < 0 || i >= x.size()) {
    throw ContractError("pick: index " + std::to_string(i) + " outside tensor of " +
                        std::to_string(x.size()) + " elements");
  }
  const bool rg = x.requires_grad();
  const int id = tape->make_node({1}, {x.value(i)}, rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, i] {
      tape->node(xi).grad[i] += tape->node(id).grad[0];
    };
  }
  return tape->handle(id);
}

Tensor neg_log(const Tensor& x, double clamp) {
  Tape* tape = tape_of({x});
  if (x.size() != 1) {
    throw ContractError("neg_log: expected a scalar, got shape " + shape_str(x.shape()));
  }
  const double v = std::max(x.value(0), clamp);
  const bool rg = x.requires_grad();
  const int id = tape->make_node({1}, {-std::log(v)}, rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, clamp] {
      const double xv = tape->node(xi).values[0];
      if (xv > clamp) tape->node(xi).grad[0] -= tape->node(id).grad[0] / xv;
    };
  }
  return tape->handle(id);
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  Tape* tape = tape_of({x});
  if (numel_of(shape) != x.size()) {
    throw DimensionError("reshape: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(x.size()) + " elements");
  }
  const bool rg = x.requires_grad();
  const int id = tape->make_node(std::move(shape), x.to_vector(), rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi] {
      auto& xn = tape->node(xi);
      kernels::acc(tape->node(id).grad.data(), xn.grad.data(),
                   static_cast<long>(xn.grad.size()));
    };
  }
  return tape->handle(id);
}

Tensor row(const Tensor& x, int r) {
  Tape* tape = tape_of({x});
  require_matrix("row", x);
  if (r < 0 || r >= x.rows()) {
    throw ContractError("row: index " + std::to_string(r) + " outside matrix of " +
                        std::to_string(x.rows()) + " rows");
  }
  const int c = x.cols();
  std::vector<double> out(x.values().begin() + static_cast<long>(r) * c,
                          x.values().begin() + static_cast<long>(r + 1) * c);
  const bool rg = x.requires_grad();
  const int id = tape->make_node({c}, std::move(out), rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, r, c] {
      kernels::acc_serial(tape->node(id).grad.data(),
                          tape->node(xi).grad.data() + static_cast<long>(r) * c, c);
    };
  }
  return tape->handle(id);
}

Tensor stack_rows(std::span<const Tensor> steps, int r) {
  if (steps.empty()) throw EmptySequenceError("stack_rows: no steps");
  Tape* tape = steps[0].tape();
  const int c = steps[0].cols();
  std::vector<int> ids;
  ids.reserve(steps.size());
  bool rg = false;
  for (const Tensor& s : steps) {
    tape_of({steps[0], s});
    require_matrix("stack_rows", s);
    if (s.cols() != c) dim_error("stack_rows", steps[0], s);
    if (r < 0 || r >= s.rows()) {
      throw ContractError("stack_rows: row " + std::to_string(r) + " outside matrix of " +
                          std::to_string(s.rows()) + " rows");
    }
    ids.push_back(s.id());
    rg = rg || s.requires_grad();
  }
  const int t = static_cast<int>(steps.size());
  std::vector<double> out(static_cast<std::size_t>(t) * c);
  for (int i = 0; i < t; ++i) {
    std::copy_n(steps[i].values().data() + static_cast<long>(r) * c, c,
                out.data() + static_cast<long>(i) * c);
  }
  const int id = tape->make_node({t, c}, std::move(out), rg);
  if (rg) {
    tape->node(id).backprop = [tape, id, ids, r, c] {
      const auto& g = tape->node(id).grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& sn = tape->node(ids[i]);
        if (sn.requires_grad) {
          kernels::acc_serial(g.data() + static_cast<long>(i) * c,
                              sn.grad.data() + static_cast<long>(r) * c, c);
        }
      }
    };
  }
  return tape->handle(id);
}

Tensor broadcast_rows(const Tensor& v, int r) {
  Tape* tape = tape_of({v});
  require_vector("broadcast_rows", v);
  if (r <= 0) throw ContractError("broadcast_rows: row count must be positive");
  const int c = v.rows();
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  for (int i = 0; i < r; ++i) std::copy_n(v.values().data(), c, out.data() + static_cast<long>(i) * c);
  const bool rg = v.requires_grad();
  const int id = tape->make_node({r, c}, std::move(out), rg);
  if (rg) {
    const int vi = v.id();
    tape->node(id).backprop = [tape, id, vi, r, c] {
      const auto& g = tape->node(id).grad;
      auto& vg = tape->node(vi).grad;
      for (int i = 0; i < r; ++i) kernels::acc_serial(g.data() + static_cast<long>(i) * c, vg.data(), c);
    };
  }
  return tape->handle(id);
}

Tensor transpose(const Tensor& x) {
  Tape* tape = tape_of({x});
  require_matrix("transpose", x);
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  const double* v = x.values().data();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out[static_cast<long>(j) * r + i] = v[static_cast<long>(i) * c + j];
  }
  const bool rg = x.requires_grad();
  const int id = tape->make_node({c, r}, std::move(out), rg);
  if (rg) {
    const int xi = x.id();
    tape->node(id).backprop = [tape, id, xi, r, c] {
      const auto& g = tape->node(id).grad;
      auto& xg = tape->node(xi).grad;
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
          xg[static_cast<long>(i) * c + j] += g[static_cast<long>(j) * r + i];
        }
      }
    };
  }
  return tape->handle(id);
}

Tensor lerp(const Tensor& t, const Tensor& when_one, const Tensor& when_zero) {
  Tape* tape = tape_of({t, when_one, when_zero});
  if (t.size() != 1) {
    throw ContractError("lerp: coefficient of shape " + shape_str(t.shape()) + " is not scalar");
  }
  if (when_one.shape() != when_zero.shape()) dim_error("lerp", when_one, when_zero);
  const double tv = t.value(0);
  const long n = when_one.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    out[i] = (1.0 - tv) * when_zero.value(i) + tv * when_one.value(i);
  }
  const bool rg = any_grad({t, when_one, when_zero});
  const int id = tape->make_node(when_one.shape(), std::move(out), rg);
  if (rg) {
    const int ti = t.id(), oi = when_one.id(), zi = when_zero.id();
    tape->node(id).backprop = [tape, id, ti, oi, zi, n] {
      const auto& g = tape->node(id).grad;
      auto& tn = tape->node(ti);
      auto& on = tape->node(oi);
      auto& zn = tape->node(zi);
      const double tv2 = tn.values[0];
      if (on.requires_grad) {
        for (long i = 0; i < n; ++i) on.grad[i] += tv2 * g[i];
      }
      if (zn.requires_grad) {
        for (long i = 0; i < n; ++i) zn.grad[i] += (1.0 - tv2) * g[i];
      }
      if (tn.requires_grad) {
        double s = 0.0;
        for (long i = 0; i < n; ++i) s += (on.values[i] - zn.values[i]) * g[i];
        tn.grad[0] += s;
      }
    };
  }
  return tape->handle(id);
}

Tensor lerp_rows(const Tensor& t, const Tensor& when_one, const Tensor& when_zero) {
  Tape* tape = tape_of({t, when_one, when_zero});
  require_vector("lerp_rows", t);
  require_matrix("lerp_rows", when_one);
  if (when_one.shape() != when_zero.shape()) dim_error("lerp_rows", when_one, when_zero);
  const int r = when_one.rows(), c = when_one.cols();
  if (t.rows() != r) dim_error("lerp_rows", t, when_one);
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  for (int i = 0; i < r; ++i) {
    const double tv = t.value(i);
    for (int j = 0; j < c; ++j) {
      const long k = static_cast<long>(i) * c + j;
      out[k] = (1.0 - tv) * when_zero.value(k) + tv * when_one.value(k);
    }
  }
  const bool rg = any_grad({t, when_one, when_zero});
  const int id = tape->make_node(when_one.shape(), std::move(out), rg);
  if (rg) {
    const int ti = t.id(), oi = when_one.id(), zi = when_zero.id();
    tape->node(id).backprop = [tape, id, ti, oi, zi, r, c] {
      const auto& g = tape->node(id).grad;
      auto& tn = tape->node(ti);
      auto& on = tape->node(oi);
      auto& zn = tape->node(zi);
      for (int i = 0; i < r; ++i) {
        const double tv = tn.values[i];
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
          const long k = static_cast<long>(i) * c + j;
          if (on.requires_grad) on.grad[k] += tv * g[k];
          if (zn.requires_grad) zn.grad[k] += (1.0 - tv) * g[k];
          s += (on.values[k] - zn.values[k]) * g[k];
        }
        if (tn.requires_grad) tn.grad[i] += s;
      }
    };
  }
  return tape->handle(id);
}

Tensor scale_rows(const Tensor& A, const Tensor& s) {
  Tape* tape = tape_of({A, s});
  require_matrix("scale_rows", A);
  require_vector("scale_rows", s);
  const int r = A.rows(), c = A.cols();
  if (s.rows() != r) dim_error("scale_rows", A, s);
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  for (int i = 0; i < r; ++i) {
    const double sv = s.value(i);
    for (int j = 0; j < c; ++j) {
      const long k = static_cast<long>(i) * c + j;
      out[k] = A.value(k) * sv;
    }
  }
  const bool rg = any_grad({A, s});
  const int id = tape->make_node(A.shape(), std::move(out), rg);
  if (rg) {
    const int ai = A.id(), si = s.id();
    tape->node(id).backprop = [tape, id, ai, si, r, c] {
      const auto& g = tape->node(id).grad;
      auto& an = tape->node(ai);
      auto& sn = tape->node(si);
      for (int i = 0; i < r; ++i) {
        const double sv = sn.values[i];
        double acc = 0.0;
        for (int j = 0; j < c; ++j) {
          const long k = static_cast<long>(i) * c + j;
          if (an.requires_grad) an.grad[k] += sv * g[k];
          acc += an.values[k] * g[k];
        }
        if (sn.requires_grad) sn.grad[i] += acc;
      }
    };
  }
  return tape->handle(id);
}

}  // namespace snelsd
