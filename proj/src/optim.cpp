// SPDX-License-Identifier: Apache-2.0
#include "snelsd/optim.hpp"

#include <cmath>

namespace snelsd {

Tensor cross_entropy(const Tensor& probs, int label) {
  if (probs.ndim() != 1) {
    throw ContractError("cross_entropy: expected a probability vector, got shape " +
                        shape_str(probs.shape()));
  }
  if (label < 0 || label >= probs.rows()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " outside " +
                        std::to_string(probs.rows()) + " classes");
  }
  double s = 0.0;
  for (long i = 0; i < probs.size(); ++i) s += probs.value(i);
  if (std::fabs(s - 1.0) > 1e-6) {
    throw ContractError("cross_entropy: probabilities sum to " + std::to_string(s));
  }
  return neg_log(pick(probs, label), 1e-12);
}

Tensor dropout(const Tensor& x, double rate, DropoutMode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (mode == DropoutMode::Eval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  for (double& v : mask) v = rng.uniform() >= rate ? keep_scale : 0.0;
  return hadamard(x, x.tape()->leaf(x.shape(), std::move(mask)));
}

namespace {

void ensure_slots(std::vector<std::vector<double>>& slots, std::span<Parameter* const> params,
                  const char* who) {
  if (slots.empty()) {
    slots.reserve(params.size());
    for (const Parameter* p : params) {
      slots.emplace_back(static_cast<std::size_t>(p->size()), 0.0);
    }
    return;
  }
  if (slots.size() != params.size()) {
    throw ContractError(std::string(who) + ": state tracks " + std::to_string(slots.size()) +
                        " parameters, step got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (static_cast<long>(slots[i].size()) != params[i]->size()) {
      throw ContractError(std::string(who) + ": size mismatch on " + params[i]->name);
    }
  }
}

}  // namespace

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  ensure_slots(state.m, params, "adam_step");
  ensure_slots(state.v, params, "adam_step");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    if (!p->trainable) continue;
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p->grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void adadelta_step(std::span<Parameter* const> params, AdadeltaState& state) {
  ensure_slots(state.grad_sq, params, "adadelta_step");
  ensure_slots(state.update_sq, params, "adadelta_step");
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    if (!p->trainable) continue;
    auto& eg = state.grad_sq[pi];
    auto& ed = state.update_sq[pi];
    for (std::size_t i = 0; i < eg.size(); ++i) {
      const double g = p->grad[i];
      eg[i] = state.rho * eg[i] + (1.0 - state.rho) * g * g;
      const double delta = -std::sqrt(ed[i] + state.eps) / std::sqrt(eg[i] + state.eps) * g;
      ed[i] = state.rho * ed[i] + (1.0 - state.rho) * delta * delta;
      p->value[i] += delta;
    }
  }
}

}  // namespace snelsd
