#pragma once

#include "hive/tensor.hpp"

namespace hive {

struct LossConfig {
  double lambda = 0.7;    // weight of the segmentation loss
  double epsilon = 1e-5;  // Jaccard denominator guard

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  Tensor grad;  // dL/d(prediction)
};

/// 1 - sum(PY) / (sum(P) + sum(Y) - sum(PY) + eps), summed over the whole
/// batch. Y must be exactly 0 or 1 and P within [0, 1].
LossValue jaccard_loss(const Tensor& p, const Tensor& y, double epsilon = 1e-5);

/// Mean over all voxels of (d - target)^2.
LossValue regression_loss(const Tensor& d, const Tensor& target);

/// lambda * seg + (1 - lambda) * reg.
double total_loss(double seg, double reg, const LossConfig& cfg);

}  // namespace hive
