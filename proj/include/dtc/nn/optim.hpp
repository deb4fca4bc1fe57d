#pragma once

#include <cstddef>
#include <vector>

#include "dtc/nn/tensor.hpp"

namespace dtc::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments per parameter, allocated on the first step.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
};

// Bias-corrected Adam. Parameters without a gradient buffer are skipped.
void adam_step(std::span<Tensor> params, AdamState& state);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

void zero_grads(std::span<Tensor> params);

}  // namespace dtc::nn
