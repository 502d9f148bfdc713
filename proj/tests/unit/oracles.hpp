#pragma once

// Slow reference implementations used only by tests.

#include <cmath>
#include <random>

#include "hive/ops.hpp"
#include "hive/tensor.hpp"

namespace oracle {

inline hive::Tensor random_tensor(const hive::Dims& d, std::mt19937_64& g, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  hive::Tensor t(d);
  for (auto& v : t.data()) v = nd(g);
  return t;
}

inline hive::ops::ConvKernel random_kernel(hive::ops::Orientation o, std::size_t cin,
                                           std::size_t cout, std::mt19937_64& g) {
  auto k = hive::ops::ConvKernel::zeros(o, cin, cout);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (auto& v : k.weight.data()) v = nd(g);
  for (auto& v : k.bias.data()) v = nd(g);
  return k;
}

// Seven nested loops over (n, co, od, oh, ow, ci, taps) with explicit bounds checks.
inline hive::Tensor conv_brute(const hive::Tensor& x, const hive::ops::ConvKernel& k,
                               const hive::Axis3& pad) {
  const long N = x.n(), Ci = x.c(), D = x.d(), H = x.h(), W = x.w();
  const long Co = k.cout(), kd = k.weight.dims()[2], kh = k.weight.dims()[3],
             kw = k.weight.dims()[4];
  const long Do = D + 2 * pad[0] - kd + 1, Ho = H + 2 * pad[1] - kh + 1, Wo = W + 2 * pad[2] - kw + 1;
  hive::Tensor y({std::size_t(N), std::size_t(Co), std::size_t(Do), std::size_t(Ho), std::size_t(Wo)});
  for (long n = 0; n < N; ++n)
    for (long co = 0; co < Co; ++co)
      for (long od = 0; od < Do; ++od)
        for (long oh = 0; oh < Ho; ++oh)
          for (long ow = 0; ow < Wo; ++ow) {
            double s = k.bias[co];
            for (long ci = 0; ci < Ci; ++ci)
              for (long a = 0; a < kd; ++a)
                for (long b = 0; b < kh; ++b)
                  for (long c = 0; c < kw; ++c) {
                    long id = od + a - pad[0], ih = oh + b - pad[1], iw = ow + c - pad[2];
                    if (id < 0 || ih < 0 || iw < 0 || id >= D || ih >= H || iw >= W) continue;
                    s += k.weight.at(co, ci, a, b, c) * x.at(n, ci, id, ih, iw);
                  }
            y.at(n, co, od, oh, ow) = s;
          }
  return y;
}

}  // namespace oracle

namespace oracle {

inline hive::Tensor norm_brute(const hive::Tensor& x, const hive::ops::NormState& s) {
  hive::Tensor y(x.dims());
  const std::size_t M = x.spatial();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < M; ++i) mean += x.channel(n, c)[i];
      mean /= double(M);
      for (std::size_t i = 0; i < M; ++i) sq += std::pow(x.channel(n, c)[i] - mean, 2);
      double sd = std::sqrt(sq / double(M) + s.epsilon);
      for (std::size_t i = 0; i < M; ++i)
        y.channel(n, c)[i] = s.scale[c] * (x.channel(n, c)[i] - mean) / sd + s.shift[c];
    }
  return y;
}

inline hive::Tensor relu_brute(hive::Tensor x) {
  for (auto& v : x.data()) v = std::max(v, 0.0);
  return x;
}

inline hive::Tensor pool_brute(const hive::Tensor& x, const hive::Axis3& f) {
  auto up = [](std::size_t n, int k) { return (n + k - 1) / k; };
  hive::Tensor y({x.n(), x.c(), up(x.d(), f[0]), up(x.h(), f[1]), up(x.w(), f[2])}, -1e300);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t d = 0; d < x.d(); ++d)
        for (std::size_t h = 0; h < x.h(); ++h)
          for (std::size_t w = 0; w < x.w(); ++w) {
            double& o = y.at(n, c, d / f[0], h / f[1], w / f[2]);
            o = std::max(o, x.at(n, c, d, h, w));
          }
  return y;
}

inline double sample_axis(double o, std::size_t out, std::size_t n, std::size_t& i0, std::size_t& i1) {
  double s = (o + 0.5) * double(n) / double(out) - 0.5;
  if (s < 0) s = 0;
  if (s > double(n - 1)) s = double(n - 1);
  i0 = std::size_t(std::floor(s));
  i1 = std::min(i0 + 1, n - 1);
  return s - double(i0);
}

inline hive::Tensor resize_brute(const hive::Tensor& x, const hive::Dims& out) {
  hive::Tensor y({x.n(), x.c(), out[2], out[3], out[4]});
  for (std::size_t n = 0; n < y.n(); ++n)
    for (std::size_t c = 0; c < y.c(); ++c)
      for (std::size_t d = 0; d < y.d(); ++d)
        for (std::size_t h = 0; h < y.h(); ++h)
          for (std::size_t w = 0; w < y.w(); ++w) {
            std::size_t d0, d1, h0, h1, w0, w1;
            double td = sample_axis(double(d), y.d(), x.d(), d0, d1);
            double th = sample_axis(double(h), y.h(), x.h(), h0, h1);
            double tw = sample_axis(double(w), y.w(), x.w(), w0, w1);
            double v = 0.0;
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e)
                  v += (a ? td : 1 - td) * (b ? th : 1 - th) * (e ? tw : 1 - tw) *
                       x.at(n, c, a ? d1 : d0, b ? h1 : h0, e ? w1 : w0);
            y.at(n, c, d, h, w) = v;
          }
  return y;
}

inline hive::Tensor channels(const hive::Tensor& x, std::size_t c0, std::size_t nc) {
  hive::Tensor y({x.n(), nc, x.d(), x.h(), x.w()});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < x.spatial(); ++i) y.channel(n, c)[i] = x.channel(n, c0 + c)[i];
  return y;
}

inline hive::Tensor plus(hive::Tensor a, const hive::Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace oracle
