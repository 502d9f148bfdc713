#pragma once

#include <vector>

#include "hive/config.hpp"
#include "hive/tensor.hpp"

namespace hive {

/// Adam moments, one pair per parameter tensor in visit order.
struct OptimState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update over params, reading each tensor's grad
/// buffer (a missing buffer counts as zero). Coupled decay adds wd * theta to
/// the gradient; decoupled decay shrinks theta by lr * wd directly.
void adam_step(const std::vector<Tensor*>& params, OptimState& s, const OptimConfig& cfg, double lr);

std::vector<Tensor*> parameters(Network& net);
double grad_norm(const std::vector<Tensor*>& params);

}  // namespace hive
