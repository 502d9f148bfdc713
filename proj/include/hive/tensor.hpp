#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hive {

/// (N, C, D, H, W)
using Dims = std::array<std::size_t, 5>;

/// Per-axis (depth, height, width) integers: windows, factors, padding.
using Axis3 = std::array<int, 3>;

std::string to_string(const Dims& d);
std::string to_string(const Axis3& a);

/// Thrown when tensor shapes do not line up. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] void throw_shape(const std::string& what, const Dims& a, const Dims& b);

/// Allocator whose value-initialization is a no-op, so storage for outputs
/// that are fully overwritten is not zeroed first.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

/// Dense 5-axis tensor of doubles, row-major with W innermost. The gradient
/// buffer is optional and, when present, has the same length as the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Dims& dims, double fill = 0.0);
  Tensor(const Dims& dims, const std::vector<double>& data);
  /// Storage left uninitialized; the caller must write every element.
  static Tensor uninitialized(const Dims& dims);

  const Dims& dims() const { return dims_; }
  std::size_t n() const { return dims_[0]; }
  std::size_t c() const { return dims_[1]; }
  std::size_t d() const { return dims_[2]; }
  std::size_t h() const { return dims_[3]; }
  std::size_t w() const { return dims_[4]; }
  std::size_t spatial() const { return dims_[2] * dims_[3] * dims_[4]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t d, std::size_t h,
                    std::size_t w) const {
    return (((n * dims_[1] + c) * dims_[2] + d) * dims_[3] + h) * dims_[4] + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
    return data_[index(n, c, d, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
    return data_[index(n, c, d, h, w)];
  }

  /// Pointer to the start of the (n, c) spatial block.
  double* channel(std::size_t n, std::size_t c) { return data_.data() + (n * dims_[1] + c) * spatial(); }
  const double* channel(std::size_t n, std::size_t c) const {
    return data_.data() + (n * dims_[1] + c) * spatial();
  }

  bool has_grad() const { return !grad_.empty() && grad_.size() == data_.size(); }
  void enable_grad() { grad_.assign(data_.size(), 0.0); }
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }
  void zero_grad();
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  void fill(double v);
  bool all_finite() const;
  double sum() const;

 private:
  Dims dims_{0, 0, 0, 0, 0};
  std::vector<double, DefaultInitAllocator<double>> data_;
  std::vector<double> grad_;
};

std::size_t volume_of(const Dims& d);

/// Same dims, same bits.
bool bit_equal(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);
/// 64-bit hash of dims and raw value bits; equal for bit_equal tensors.
std::uint64_t fingerprint(const Tensor& t);

}  // namespace hive
