#pragma once

// Plain 3D grid (D, H, W) with W innermost; the common currency of the
// evaluation, phantom and centerline code.

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hive {

using Shape3 = std::array<std::size_t, 3>;
using Coord3 = std::array<long, 3>;

template <class T>
struct Volume {
  Shape3 shape{0, 0, 0};
  std::vector<T> data;

  Volume() = default;
  explicit Volume(const Shape3& s, T fill = T{}) : shape(s), data(s[0] * s[1] * s[2], fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(std::size_t d, std::size_t h, std::size_t w) const { return (d * shape[1] + h) * shape[2] + w; }
  T& operator()(std::size_t d, std::size_t h, std::size_t w) { return data[index(d, h, w)]; }
  const T& operator()(std::size_t d, std::size_t h, std::size_t w) const { return data[index(d, h, w)]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool contains(const Coord3& c) const {
    return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && std::size_t(c[0]) < shape[0] && std::size_t(c[1]) < shape[1] &&
           std::size_t(c[2]) < shape[2];
  }
};

inline std::string shape_string(const Shape3& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

template <class A, class B>
void require_same_shape(const Volume<A>& a, const Volume<B>& b, const char* what) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(what) + ": shape " + shape_string(a.shape) + " vs " +
                                shape_string(b.shape));
}

}  // namespace hive
