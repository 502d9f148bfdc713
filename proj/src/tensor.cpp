#include "hive/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace hive {

std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << '(' << d[0] << ',' << d[1] << ',' << d[2] << ',' << d[3] << ',' << d[4] << ')';
  return os.str();
}

std::string to_string(const Axis3& a) {
  std::ostringstream os;
  os << '(' << a[0] << ',' << a[1] << ',' << a[2] << ')';
  return os.str();
}

void throw_shape(const std::string& what, const Dims& a, const Dims& b) {
  throw ShapeError(what + ": " + to_string(a) + " vs " + to_string(b));
}

std::size_t volume_of(const Dims& d) {
  return std::accumulate(d.begin(), d.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(const Dims& dims, double fill) : dims_(dims), data_(volume_of(dims), fill) {}

Tensor::Tensor(const Dims& dims, const std::vector<double>& data) : dims_(dims), data_(data.begin(), data.end()) {
  if (data_.size() != volume_of(dims_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match dims " + to_string(dims_));
  }
}

Tensor Tensor::uninitialized(const Dims& dims) {
  Tensor t;
  t.dims_ = dims;
  t.data_.resize(volume_of(dims));
  return t;
}

void Tensor::zero_grad() {
  if (grad_.size() != data_.size()) {
    grad_.assign(data_.size(), 0.0);
  } else {
    std::fill(grad_.begin(), grad_.end(), 0.0);
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) throw_shape("max_abs_diff", a.dims(), b.dims());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::uint64_t fingerprint(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  };
  for (auto d : t.dims()) mix(d);
  for (double v : t.data()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

}  // namespace hive
