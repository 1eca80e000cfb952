// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "snelsd/tensor.hpp"

namespace snelsd {

// -log(probs[label]) with the picked probability clamped at 1e-12.
// probs must already lie on the simplex (checked to 1e-6).
Tensor cross_entropy(const Tensor& probs, int label);

enum class DropoutMode { Train, Eval };

// Inverted dropout: train mode zeroes each element with the given rate and
// scales survivors by 1/(1 - rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, DropoutMode mode, Rng& rng);

// Bias-corrected Adam. Moment arrays are lazily sized to the parameter list
// on the first step and must match it afterwards.
struct AdamState {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;  // one pair per parameter
};

void adam_step(std::span<Parameter* const> params, AdamState& state);

// Adadelta with accumulated squared gradients and squared updates.
struct AdadeltaState {
  double rho = 0.95;
  double eps = 1e-6;
  std::vector<std::vector<double>> grad_sq, update_sq;
};

void adadelta_step(std::span<Parameter* const> params, AdadeltaState& state);

}  // namespace snelsd
