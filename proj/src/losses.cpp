#include "hive/losses.hpp"

#include <stdexcept>
#include <string>

namespace hive {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("loss lambda must lie in [0, 1], got " + std::to_string(lambda));
  if (!(epsilon > 0.0)) throw std::invalid_argument("loss epsilon must be positive");
}

LossValue jaccard_loss(const Tensor& p, const Tensor& y, double eps) {
  if (p.dims() != y.dims()) throw_shape("jaccard_loss", p.dims(), y.dims());
  if (!(eps > 0.0)) throw std::invalid_argument("jaccard epsilon must be positive");
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0)
      throw std::invalid_argument("jaccard target must be binary; found " + std::to_string(y[i]) +
                                  " at index " + std::to_string(i));
    if (!(p[i] >= 0.0 && p[i] <= 1.0))
      throw std::invalid_argument("jaccard prediction outside [0, 1]: " + std::to_string(p[i]) +
                                  " at index " + std::to_string(i));
    inter += p[i] * y[i];
    sp += p[i];
    sy += y[i];
  }
  const double uni = sp + sy - inter + eps;
  LossValue r{1.0 - inter / uni, Tensor(p.dims())};
  // d(I/U)/dp_i = (y_i U - I (1 - y_i)) / U^2
  const double u2 = uni * uni;
  for (std::size_t i = 0; i < p.size(); ++i) r.grad[i] = -(y[i] * uni - inter * (1.0 - y[i])) / u2;
  return r;
}

LossValue regression_loss(const Tensor& d, const Tensor& t) {
  if (d.dims() != t.dims()) throw_shape("regression_loss", d.dims(), t.dims());
  if (d.size() == 0) throw std::invalid_argument("regression_loss on empty tensors");
  const double n = static_cast<double>(d.size());
  LossValue r{0.0, Tensor(d.dims())};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = d[i] - t[i];
    r.value += e * e;
    r.grad[i] = 2.0 * e / n;
  }
  r.value /= n;
  return r;
}

double total_loss(double seg, double reg, const LossConfig& cfg) {
  return cfg.lambda * seg + (1.0 - cfg.lambda) * reg;
}

}  // namespace hive
