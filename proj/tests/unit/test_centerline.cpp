#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hive/centerline.hpp"

using namespace hive;

namespace {

// O(N * M) reference.
Volume<double> brute_distance(const Shape3& s, const CenterlineSet& c) {
  Volume<double> out(s, std::numeric_limits<double>::infinity());
  for (std::size_t d = 0; d < s[0]; ++d)
    for (std::size_t h = 0; h < s[1]; ++h)
      for (std::size_t w = 0; w < s[2]; ++w) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& v : c.voxels) {
          const double a = (double(d) - v[0]) * c.spacing[0], b = (double(h) - v[1]) * c.spacing[1],
                       e = (double(w) - v[2]) * c.spacing[2];
          best = std::min(best, std::sqrt(a * a + b * b + e * e));
        }
        out(d, h, w) = best;
      }
  return out;
}

CenterlineSet random_set(std::mt19937_64& g, const Shape3& s, int count) {
  CenterlineSet c;
  for (int i = 0; i < count; ++i)
    c.voxels.push_back({long(g() % s[0]), long(g() % s[1]), long(g() % s[2])});
  return c;
}

double max_diff(const Volume<double>& a, const Volume<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("distance anchors") {
  CenterlineSet c;
  c.voxels = {{0, 0, 0}};
  auto d = distance_transform({1, 4, 5}, c);
  CHECK(d(0, 3, 4) == 5.0);
  CHECK(d(0, 0, 0) == 0.0);
  auto e = distance_transform({3, 3, 3}, CenterlineSet{});
  for (double v : e.data) CHECK(std::isinf(v));
  CHECK_THROWS_AS(distance_transform({3, 3, 3}, CenterlineSet{{{3, 0, 0}}, {1, 1, 1}}), std::out_of_range);
}

TEST_CASE("1D envelope matches brute force with gaps") {
  std::mt19937_64 g(1);
  const double inf = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + g() % 20;
    std::vector<double> f(n), out(n);
    for (auto& v : f) v = (g() % 3 == 0) ? double(g() % 50) : inf;
    const double s = 0.5 + (g() % 4);
    edt_1d(f.data(), out.data(), n, s);
    for (std::size_t p = 0; p < n; ++p) {
      double best = inf;
      for (std::size_t q = 0; q < n; ++q) best = std::min(best, f[q] + s * s * (double(p) - q) * (double(p) - q));
      CHECK(out[p] == best);
    }
  }
}

TEST_CASE("exact transform equals brute force") {
  for (int seed = 0; seed < 60; ++seed) {
    std::mt19937_64 g(seed);
    Shape3 s{1 + g() % 20, 1 + g() % 20, 1 + g() % 20};
    auto c = random_set(g, s, 1 + int(g() % 12));
    if (seed % 3 == 1) c.spacing = {2.5, 1.0, 1.0};
    if (seed % 3 == 2) c.spacing = {1.0, 0.7, 1.3};
    CHECK(max_diff(distance_transform(s, c), brute_distance(s, c)) < 1e-9);
  }
  std::mt19937_64 g(99);
  Shape3 s{16, 16, 16};
  auto c = random_set(g, s, 10);
  CHECK(max_diff(distance_transform(s, c), brute_distance(s, c)) < 1e-9);
}

TEST_CASE("proximity values") {
  ProximityConfig cfg;
  CHECK(proximity_value(0.0, cfg) == doctest::Approx(std::exp(3.0) - 1.0).epsilon(1e-14));
  CHECK(proximity_value(0.0, cfg) == doctest::Approx(19.0855).epsilon(1e-5));
  CHECK(proximity_value(15.0, cfg) == 0.0);
  CHECK(proximity_value(40.0, cfg) == 0.0);
  CHECK(proximity_value(std::numeric_limits<double>::infinity(), cfg) == 0.0);
  CHECK(proximity_value(5.0, cfg) == doctest::Approx(std::exp(2.0) - 1.0).epsilon(1e-14));
  CHECK(proximity_value(5.0, cfg) == doctest::Approx(6.3891).epsilon(1e-4));
  for (double d = 0.0; d + 0.1 < 15.0; d += 0.1) CHECK(proximity_value(d, cfg) > proximity_value(d + 0.1, cfg));
  CHECK_THROWS(ProximityConfig{0.0, 15.0}.validate());
  CHECK_THROWS(ProximityConfig{3.0, -1.0}.validate());
}

TEST_CASE("normalization round trip") {
  ProximityConfig cfg;
  Volume<double> m({1, 1, 3});
  m[0] = cfg.peak();
  m[1] = 0.0;
  m[2] = std::exp(2.0) - 1.0;
  auto u = normalize_proximity(m, cfg);
  CHECK(u[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(u[1] == 0.0);
  CHECK(u[2] == doctest::Approx(0.33477).epsilon(1e-4));
  auto back = denormalize_proximity(u, cfg);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(m[i]).epsilon(1e-14));
}

TEST_CASE("proximity map range and translation equivariance") {
  ProximityConfig cfg;
  std::mt19937_64 g(5);
  Shape3 s{20, 24, 24};
  CenterlineSet c;
  for (int i = 0; i < 6; ++i) c.voxels.push_back({long(4 + g() % 8), long(4 + g() % 10), long(4 + g() % 10)});
  auto m = proximity_map(distance_transform(s, c), cfg);
  CenterlineSet shifted = c;
  for (auto& v : shifted.voxels) v = {v[0] + 3, v[1] + 2, v[2] + 5};
  auto ms = proximity_map(distance_transform({23, 26, 29}, shifted), cfg);
  for (std::size_t d = 0; d < s[0]; ++d)
    for (std::size_t h = 0; h < s[1]; ++h)
      for (std::size_t w = 0; w < s[2]; ++w) CHECK(ms(d + 3, h + 2, w + 5) == m(d, h, w));
  for (double v : m.data) {
    CHECK(v >= 0.0);
    CHECK(v <= cfg.peak());
  }
  for (const auto& v : c.voxels) CHECK(m(v[0], v[1], v[2]) == doctest::Approx(std::expm1(3.0)).epsilon(1e-15));
}

TEST_CASE("side file round trip") {
  CenterlineSet c;
  c.voxels = {{0, 1, 2}, {3, 4, 5}};
  std::stringstream ss;
  write_centerline(ss, c);
  auto r = read_centerline(ss, {4, 5, 6});
  CHECK(r.voxels == c.voxels);
  std::istringstream in("# header\n\n1 2 3  # trailing\n  0 0 0\n");
  CHECK(read_centerline(in, {2, 3, 4}).voxels.size() == 2);
  std::istringstream bad("1 2\n");
  CHECK_THROWS_AS(read_centerline(bad, {2, 3, 4}), std::runtime_error);
  std::istringstream outside("9 9 9\n");
  CHECK_THROWS_AS(read_centerline(outside, {2, 3, 4}), std::out_of_range);
}
