#include "hive/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace hive::ops {

namespace {

struct Lerp {
  std::size_t i0, i1;
  double t;
};

std::vector<Lerp> lerp_table(std::size_t in, std::size_t out) {
  std::vector<Lerp> tab(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    auto i0 = static_cast<std::size_t>(std::floor(src));
    std::size_t i1 = std::min(i0 + 1, in - 1);
    tab[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return tab;
}

void check_factor(const Axis3& f, const char* what) {
  for (int v : f)
    if (v < 1) throw std::invalid_argument(std::string(what) + ": factor must be >= 1, got " + to_string(f));
}

}  // namespace

const char* name_of(Orientation o) {
  switch (o) {
    case Orientation::XY: return "XY";
    case Orientation::XZ: return "XZ";
    case Orientation::YZ: return "YZ";
    case Orientation::Point: return "POINT";
    case Orientation::Generic: return "GENERIC";
  }
  return "?";
}

Orientation orientation_from_name(const std::string& s) {
  if (s == "XY") return Orientation::XY;
  if (s == "XZ") return Orientation::XZ;
  if (s == "YZ") return Orientation::YZ;
  if (s == "POINT") return Orientation::Point;
  if (s == "GENERIC") return Orientation::Generic;
  throw std::invalid_argument("unknown orientation '" + s + "'");
}

Axis3 extent_of(Orientation o) {
  switch (o) {
    case Orientation::XY: return {1, 3, 3};
    case Orientation::XZ: return {3, 1, 3};
    case Orientation::YZ: return {3, 3, 1};
    case Orientation::Point: return {1, 1, 1};
    case Orientation::Generic: break;
  }
  throw std::invalid_argument("generic orientation has no implied extent");
}

ConvKernel ConvKernel::zeros(Orientation o, std::size_t cin, std::size_t cout) {
  ConvKernel k = zeros_generic(cin, cout, extent_of(o));
  k.orientation = o;
  return k;
}

ConvKernel ConvKernel::zeros_generic(std::size_t cin, std::size_t cout, const Axis3& e) {
  if (cin == 0 || cout == 0) throw std::invalid_argument("conv kernel needs cin, cout >= 1");
  for (int v : e)
    if (v < 1) throw std::invalid_argument("conv kernel extent must be >= 1, got " + to_string(e));
  ConvKernel k;
  k.orientation = Orientation::Generic;
  k.weight = Tensor({cout, cin, static_cast<std::size_t>(e[0]), static_cast<std::size_t>(e[1]),
                     static_cast<std::size_t>(e[2])});
  k.bias = Tensor({cout, 1, 1, 1, 1});
  return k;
}

void ConvKernel::validate() const {
  if (bias.dims() != Dims{cout(), 1, 1, 1, 1}) throw_shape("conv bias", bias.dims(), {cout(), 1, 1, 1, 1});
  if (orientation == Orientation::Generic) return;
  if (extent() != extent_of(orientation))
    throw std::invalid_argument(std::string("conv kernel tagged ") + name_of(orientation) +
                                " has extent " + to_string(extent()));
}

double conv_macs(const ConvKernel& k, const Dims& x) {
  const auto e = k.extent();
  return double(x[0]) * double(k.cout()) * double(k.cin()) * e[0] * e[1] * e[2] * double(x[2]) * x[3] * x[4];
}

Axis3 same_padding(const ConvKernel& k) {
  Axis3 e = k.extent();
  return {(e[0] - 1) / 2, (e[1] - 1) / 2, (e[2] - 1) / 2};
}

namespace {

struct ConvGeom {
  std::size_t N, Ci, Co, D, H, W, Do, Ho, Wo, kd, kh, kw;
  long pd, ph, pw;
};

ConvGeom geometry(const Dims& xd, const ConvKernel& k, const Axis3& pad) {
  if (xd[1] != k.cin()) throw_shape("conv input channels", xd, k.weight.dims());
  ConvGeom g{};
  g.N = xd[0]; g.Ci = xd[1]; g.Co = k.cout();
  g.D = xd[2]; g.H = xd[3]; g.W = xd[4];
  g.kd = k.weight.dims()[2]; g.kh = k.weight.dims()[3]; g.kw = k.weight.dims()[4];
  g.pd = pad[0]; g.ph = pad[1]; g.pw = pad[2];
  long Do = static_cast<long>(g.D) + 2 * g.pd - static_cast<long>(g.kd) + 1;
  long Ho = static_cast<long>(g.H) + 2 * g.ph - static_cast<long>(g.kh) + 1;
  long Wo = static_cast<long>(g.W) + 2 * g.pw - static_cast<long>(g.kw) + 1;
  if (Do < 1 || Ho < 1 || Wo < 1) throw_shape("conv output would be empty", xd, k.weight.dims());
  g.Do = Do; g.Ho = Ho; g.Wo = Wo;
  return g;
}

// Valid output range [lo, hi) for tap offset a with padding p so that the
// input coordinate o + a - p stays in [0, in).
inline void tap_range(long a, long p, std::size_t in, std::size_t out, std::size_t& lo,
                      std::size_t& hi) {
  long l = std::max(0L, p - a);
  long h = std::min(static_cast<long>(out), static_cast<long>(in) + p - a);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(l, h));
}

}  // namespace

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<>;
using MatView = Eigen::Map<RowMat, 0, Strided>;
using ConstMatView = Eigen::Map<const RowMat, 0, Strided>;

// Output depth slices handled per im2col chunk, sized to keep the column
// buffer near 1M doubles.
std::size_t chunk_depth(const ConvGeom& g) {
  const std::size_t K = g.Ci * g.kd * g.kh * g.kw;
  const std::size_t per_slice = std::max<std::size_t>(1, K * g.Ho * g.Wo);
  return std::clamp<std::size_t>((std::size_t{1} << 20) / per_slice, 1, g.Do);
}

// cols(ci * taps + t, j) for output slices [od0, od0 + nd).
void im2col(const ConvGeom& g, const double* x, std::size_t od0, std::size_t nd, double* cols) {
  const std::size_t plane = g.Ho * g.Wo, M = nd * plane;
  for (std::size_t ci = 0; ci < g.Ci; ++ci) {
    const double* in = x + ci * g.D * g.H * g.W;
    for (std::size_t a = 0; a < g.kd; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t c = 0; c < g.kw; ++c) {
          double* row = cols + (((ci * g.kd + a) * g.kh + b) * g.kw + c) * M;
          std::size_t h0, h1, w0, w1;
          tap_range(b, g.ph, g.H, g.Ho, h0, h1);
          tap_range(c, g.pw, g.W, g.Wo, w0, w1);
          for (std::size_t od = od0; od < od0 + nd; ++od) {
            double* dst = row + (od - od0) * plane;
            const long id = static_cast<long>(od + a) - g.pd;
            if (id < 0 || id >= static_cast<long>(g.D) || h0 >= h1 || w0 >= w1) {
              std::fill(dst, dst + plane, 0.0);
              continue;
            }
            for (std::size_t oh = 0; oh < g.Ho; ++oh) {
              double* d = dst + oh * g.Wo;
              if (oh < h0 || oh >= h1) {
                std::fill(d, d + g.Wo, 0.0);
                continue;
              }
              const double* s = in + (id * g.H + (oh + b - g.ph)) * g.W + (static_cast<long>(c) - g.pw);
              std::fill(d, d + w0, 0.0);
              std::copy(s + w0, s + w1, d + w0);
              std::fill(d + w1, d + g.Wo, 0.0);
            }
          }
        }
  }
}

// Transpose of im2col: scatter-add column rows back into the input gradient.
void col2im(const ConvGeom& g, const double* cols, std::size_t od0, std::size_t nd, double* gx) {
  const std::size_t plane = g.Ho * g.Wo, M = nd * plane;
  for (std::size_t ci = 0; ci < g.Ci; ++ci) {
    double* out = gx + ci * g.D * g.H * g.W;
    for (std::size_t a = 0; a < g.kd; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t c = 0; c < g.kw; ++c) {
          const double* row = cols + (((ci * g.kd + a) * g.kh + b) * g.kw + c) * M;
          std::size_t h0, h1, w0, w1;
          tap_range(b, g.ph, g.H, g.Ho, h0, h1);
          tap_range(c, g.pw, g.W, g.Wo, w0, w1);
          for (std::size_t od = od0; od < od0 + nd; ++od) {
            const long id = static_cast<long>(od + a) - g.pd;
            if (id < 0 || id >= static_cast<long>(g.D)) continue;
            const double* src = row + (od - od0) * plane;
            for (std::size_t oh = h0; oh < h1; ++oh) {
              const double* s = src + oh * g.Wo;
              double* d = out + (id * g.H + (oh + b - g.ph)) * g.W + (static_cast<long>(c) - g.pw);
              for (std::size_t ow = w0; ow < w1; ++ow) d[ow] += s[ow];
            }
          }
        }
  }
}

// Direct loops; faster than im2col when there are few output channels.
void conv_direct_forward(const ConvGeom& g, const Tensor& x, const ConvKernel& k, Tensor& y) {
  const double* wt = k.weight.data().data();
  const std::size_t taps = g.kd * g.kh * g.kw;
  for (std::size_t n = 0; n < g.N; ++n)
    for (std::size_t co = 0; co < g.Co; ++co) {
      double* out = y.channel(n, co);
      for (std::size_t ci = 0; ci < g.Ci; ++ci) {
        const double* in = x.channel(n, ci);
        const double* wk = wt + (co * g.Ci + ci) * taps;
        for (std::size_t a = 0; a < g.kd; ++a) {
          std::size_t d0, d1;
          tap_range(a, g.pd, g.D, g.Do, d0, d1);
          for (std::size_t b = 0; b < g.kh; ++b) {
            std::size_t h0, h1;
            tap_range(b, g.ph, g.H, g.Ho, h0, h1);
            for (std::size_t c = 0; c < g.kw; ++c) {
              std::size_t w0, w1;
              tap_range(c, g.pw, g.W, g.Wo, w0, w1);
              const double wv = wk[(a * g.kh + b) * g.kw + c];
              const long shift = static_cast<long>(c) - g.pw;
              for (std::size_t od = d0; od < d1; ++od) {
                const std::size_t id = od + a - g.pd;
                for (std::size_t oh = h0; oh < h1; ++oh) {
                  const std::size_t ih = oh + b - g.ph;
                  double* orow = out + (od * g.Ho + oh) * g.Wo;
                  const double* irow = in + (id * g.H + ih) * g.W + shift;
                  for (std::size_t ow = w0; ow < w1; ++ow) orow[ow] += wv * irow[ow];
                }
              }
            }
          }
        }
      }
    }
}

void conv_direct_backward(const ConvGeom& g, const Tensor& x, const ConvKernel& k, const Tensor& gy,
                          ConvGrads& r) {
  const double* wt = k.weight.data().data();
  double* gw = r.weight.data().data();
  const std::size_t taps = g.kd * g.kh * g.kw;
  std::vector<double> lanes(g.Wo);
  for (std::size_t n = 0; n < g.N; ++n)
    for (std::size_t co = 0; co < g.Co; ++co) {
      const double* go = gy.channel(n, co);
      for (std::size_t ci = 0; ci < g.Ci; ++ci) {
        const double* in = x.channel(n, ci);
        double* gin = r.x.channel(n, ci);
        const double* wk = wt + (co * g.Ci + ci) * taps;
        double* gwk = gw + (co * g.Ci + ci) * taps;
        for (std::size_t a = 0; a < g.kd; ++a) {
          std::size_t d0, d1;
          tap_range(a, g.pd, g.D, g.Do, d0, d1);
          for (std::size_t b = 0; b < g.kh; ++b) {
            std::size_t h0, h1;
            tap_range(b, g.ph, g.H, g.Ho, h0, h1);
            for (std::size_t c = 0; c < g.kw; ++c) {
              std::size_t w0, w1;
              tap_range(c, g.pw, g.W, g.Wo, w0, w1);
              const std::size_t t = (a * g.kh + b) * g.kw + c;
              const double wv = wk[t];
              const long shift = static_cast<long>(c) - g.pw;
              // Per-lane partial sums keep the reduction vectorizable.
              std::fill(lanes.begin(), lanes.end(), 0.0);
              double* __restrict acc = lanes.data();
              for (std::size_t od = d0; od < d1; ++od) {
                const std::size_t id = od + a - g.pd;
                for (std::size_t oh = h0; oh < h1; ++oh) {
                  const std::size_t ih = oh + b - g.ph;
                  const double* __restrict grow = go + (od * g.Ho + oh) * g.Wo;
                  const std::size_t ioff = (id * g.H + ih) * g.W;
                  const double* __restrict irow = in + ioff + shift;
                  double* __restrict girow = gin + ioff + shift;
                  for (std::size_t ow = w0; ow < w1; ++ow) {
                    acc[ow] += grow[ow] * irow[ow];
                    girow[ow] += wv * grow[ow];
                  }
                }
              }
              double s = 0.0;
              for (double v : lanes) s += v;
              gwk[t] += s;
            }
          }
        }
      }
    }
}

constexpr std::size_t kGemmMinCout = 8;

// Sum with eight interleaved accumulators; fixed order, so deterministic.
double lane_sum(const double* p, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += p[i + j];
  double s = 0.0;
  for (; i < n; ++i) s += p[i];
  for (double v : acc) s += v;
  return s;
}

}  // namespace

Tensor conv3d_forward(const Tensor& x, const ConvKernel& k, const Axis3& pad) {
  ConvGeom g = geometry(x.dims(), k, pad);
  Tensor y = Tensor::uninitialized({g.N, g.Co, g.Do, g.Ho, g.Wo});
  const std::size_t K = g.Ci * g.kd * g.kh * g.kw;
  const std::size_t out_sp = g.Do * g.Ho * g.Wo, plane = g.Ho * g.Wo;
  const bool point = K == g.Ci && g.pd == 0 && g.ph == 0 && g.pw == 0;
  for (std::size_t n = 0; n < g.N; ++n)
    for (std::size_t co = 0; co < g.Co; ++co) std::fill_n(y.channel(n, co), out_sp, k.bias[co]);
  if (!point && g.Co < kGemmMinCout) {
    conv_direct_forward(g, x, k, y);
    return y;
  }
  ConstMatView wm(k.weight.data().data(), g.Co, K, Strided(K));
  const std::size_t cd = chunk_depth(g);
  std::vector<double> cols(point ? 0 : K * cd * plane);

  for (std::size_t n = 0; n < g.N; ++n) {
    if (point) {
      ConstMatView xm(x.channel(n, 0), g.Ci, out_sp, Strided(out_sp));
      MatView ym(y.channel(n, 0), g.Co, out_sp, Strided(out_sp));
      ym.noalias() += wm * xm;
      continue;
    }
    for (std::size_t od0 = 0; od0 < g.Do; od0 += cd) {
      const std::size_t nd = std::min(cd, g.Do - od0), M = nd * plane;
      im2col(g, x.channel(n, 0), od0, nd, cols.data());
      ConstMatView cm(cols.data(), K, M, Strided(M));
      MatView ym(y.channel(n, 0) + od0 * plane, g.Co, M, Strided(out_sp));
      ym.noalias() += wm * cm;
    }
  }
  return y;
}

ConvGrads conv3d_backward(const Tensor& x, const ConvKernel& k, const Tensor& gy, const Axis3& pad) {
  ConvGeom g = geometry(x.dims(), k, pad);
  Dims ydims{g.N, g.Co, g.Do, g.Ho, g.Wo};
  if (gy.dims() != ydims) throw_shape("conv grad_out", gy.dims(), ydims);
  ConvGrads r{Tensor(x.dims()), Tensor(k.weight.dims()), Tensor(k.bias.dims())};
  const std::size_t K = g.Ci * g.kd * g.kh * g.kw;
  const std::size_t in_sp = g.D * g.H * g.W, out_sp = g.Do * g.Ho * g.Wo, plane = g.Ho * g.Wo;
  const bool point = K == g.Ci && g.pd == 0 && g.ph == 0 && g.pw == 0;
  ConstMatView wm(k.weight.data().data(), g.Co, K, Strided(K));
  MatView gwm(r.weight.data().data(), g.Co, K, Strided(K));
  const std::size_t cd = chunk_depth(g);
  const bool direct = !point && g.Co < kGemmMinCout;
  const std::size_t buf = point || direct ? 0 : K * cd * plane;
  std::vector<double> cols(buf), gcols(buf);

  for (std::size_t n = 0; n < g.N; ++n) {
    for (std::size_t co = 0; co < g.Co; ++co) {
      const double* go = gy.channel(n, co);
      r.bias[co] += lane_sum(go, out_sp);
    }
    if (direct) continue;
    if (point) {
      ConstMatView xm(x.channel(n, 0), g.Ci, in_sp, Strided(in_sp));
      ConstMatView gm(gy.channel(n, 0), g.Co, out_sp, Strided(out_sp));
      MatView gxm(r.x.channel(n, 0), g.Ci, in_sp, Strided(in_sp));
      gwm.noalias() += gm * xm.transpose();
      gxm.noalias() += wm.transpose() * gm;
      continue;
    }
    for (std::size_t od0 = 0; od0 < g.Do; od0 += cd) {
      const std::size_t nd = std::min(cd, g.Do - od0), M = nd * plane;
      im2col(g, x.channel(n, 0), od0, nd, cols.data());
      ConstMatView cm(cols.data(), K, M, Strided(M));
      ConstMatView gm(gy.channel(n, 0) + od0 * plane, g.Co, M, Strided(out_sp));
      gwm.noalias() += gm * cm.transpose();
      MatView gcm(gcols.data(), K, M, Strided(M));
      gcm.noalias() = wm.transpose() * gm;
      col2im(g, gcols.data(), od0, nd, r.x.channel(n, 0));
    }
  }
  if (direct) conv_direct_backward(g, x, k, gy, r);
  return r;
}

PoolResult max_pool(const Tensor& x, const Axis3& win, bool ceil_mode) {
  check_factor(win, "max_pool");
  const auto [N, C, D, H, W] = x.dims();
  const std::size_t wd = win[0], wh = win[1], ww = win[2];
  if (!ceil_mode && (D % wd || H % wh || W % ww))
    throw ShapeError("max_pool: dims " + to_string(x.dims()) + " not divisible by window " + to_string(win));
  const std::size_t Do = (D + wd - 1) / wd, Ho = (H + wh - 1) / wh, Wo = (W + ww - 1) / ww;
  PoolResult r{Tensor({N, C, Do, Ho, Wo}), {}};
  r.argmax.resize(r.out.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t od = 0; od < Do; ++od)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t bi = x.index(n, c, od * wd, oh * wh, ow * ww);
            for (std::size_t d = od * wd; d < std::min(D, od * wd + wd); ++d)
              for (std::size_t h = oh * wh; h < std::min(H, oh * wh + wh); ++h)
                for (std::size_t w = ow * ww; w < std::min(W, ow * ww + ww); ++w) {
                  std::size_t i = x.index(n, c, d, h, w);
                  if (x[i] > best) { best = x[i]; bi = i; }
                }
            r.out[o] = x[bi];
            r.argmax[o] = bi;
          }
  return r;
}

Tensor max_pool_backward(const Tensor& gy, std::span<const std::size_t> argmax, const Dims& in) {
  if (argmax.size() != gy.size())
    throw ShapeError("max_pool_backward: argmax length " + std::to_string(argmax.size()) +
                     " vs grad " + to_string(gy.dims()));
  Tensor gx(in);
  for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
  return gx;
}

namespace {

// Linear resampling along one axis of data laid out as [outer][len][inner].
void resample_axis(const double* in, double* out, std::size_t outer, std::size_t len, std::size_t out_len,
                   std::size_t inner) {
  const auto tab = lerp_table(len, out_len);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = in + o * len * inner;
    double* dst = out + o * out_len * inner;
    if (inner == 1) {
      for (std::size_t j = 0; j < out_len; ++j) {
        const Lerp& l = tab[j];
        dst[j] = (1 - l.t) * src[l.i0] + l.t * src[l.i1];
      }
      continue;
    }
    for (std::size_t j = 0; j < out_len; ++j) {
      const Lerp& l = tab[j];
      const double* __restrict a = src + l.i0 * inner;
      const double* __restrict b = src + l.i1 * inner;
      double* __restrict d = dst + j * inner;
      const double u = 1 - l.t, t = l.t;
      for (std::size_t i = 0; i < inner; ++i) d[i] = u * a[i] + t * b[i];
    }
  }
}

// Transpose of resample_axis; gin must be zeroed. Along the contiguous axis
// the scatter is rewritten as a gather so no store feeds the next load.
void resample_axis_backward(const double* g, double* gin, std::size_t outer, std::size_t len, std::size_t out_len,
                            std::size_t inner) {
  const auto tab = lerp_table(len, out_len);
  if (inner == 1) {
    struct Tap {
      std::size_t j;
      double w;
    };
    std::vector<std::vector<Tap>> into(len);
    for (std::size_t j = 0; j < out_len; ++j) {
      into[tab[j].i0].push_back({j, 1 - tab[j].t});
      into[tab[j].i1].push_back({j, tab[j].t});
    }
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = g + o * out_len;
      double* dst = gin + o * len;
      for (std::size_t i = 0; i < len; ++i) {
        double acc = 0.0;
        for (const Tap& tp : into[i]) acc += tp.w * src[tp.j];
        dst[i] = acc;
      }
    }
    return;
  }
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = g + o * out_len * inner;
    double* dst = gin + o * len * inner;
    for (std::size_t j = 0; j < out_len; ++j) {
      const Lerp& l = tab[j];
      const double* __restrict gs = src + j * inner;
      double* a = dst + l.i0 * inner;
      double* b = dst + l.i1 * inner;
      const double u = 1 - l.t, t = l.t;
      for (std::size_t i = 0; i < inner; ++i) a[i] += u * gs[i];
      for (std::size_t i = 0; i < inner; ++i) b[i] += t * gs[i];
    }
  }
}

}  // namespace

// Trilinear weights factor per axis, so the resize runs as three 1D passes
// (W, then H, then D); passes with unchanged length are skipped.
Tensor resize_trilinear(const Tensor& x, const Axis3& size) {
  check_factor(size, "resize");
  const auto [N, C, D, H, W] = x.dims();
  if (x.spatial() == 0) throw ShapeError("resize of empty volume " + to_string(x.dims()));
  const std::size_t Do = size[0], Ho = size[1], Wo = size[2], NC = N * C;
  Tensor cur = x;
  if (Wo != W) {
    auto t = Tensor::uninitialized({N, C, D, H, Wo});
    resample_axis(cur.data().data(), t.data().data(), NC * D * H, W, Wo, 1);
    cur = std::move(t);
  }
  if (Ho != H) {
    auto t = Tensor::uninitialized({N, C, D, Ho, Wo});
    resample_axis(cur.data().data(), t.data().data(), NC * D, H, Ho, Wo);
    cur = std::move(t);
  }
  if (Do != D) {
    auto t = Tensor::uninitialized({N, C, Do, Ho, Wo});
    resample_axis(cur.data().data(), t.data().data(), NC, D, Do, Ho * Wo);
    cur = std::move(t);
  }
  return cur;
}

Tensor resize_trilinear_backward(const Tensor& gy, const Dims& in_dims) {
  const auto [N, C, D, H, W] = in_dims;
  const std::size_t Do = gy.d(), Ho = gy.h(), Wo = gy.w(), NC = N * C;
  if (gy.n() != N || gy.c() != C) throw_shape("resize grad_out", gy.dims(), in_dims);
  Tensor cur = gy;
  if (Do != D) {
    Tensor t({N, C, D, Ho, Wo});
    resample_axis_backward(cur.data().data(), t.data().data(), NC, D, Do, Ho * Wo);
    cur = std::move(t);
  }
  if (Ho != H) {
    Tensor t({N, C, D, H, Wo});
    resample_axis_backward(cur.data().data(), t.data().data(), NC * D, H, Ho, Wo);
    cur = std::move(t);
  }
  if (Wo != W) {
    Tensor t({N, C, D, H, W});
    resample_axis_backward(cur.data().data(), t.data().data(), NC * D * H, W, Wo, 1);
    cur = std::move(t);
  }
  return cur;
}

Tensor upsample_trilinear(const Tensor& x, const Axis3& f) {
  check_factor(f, "upsample");
  return resize_trilinear(x, {static_cast<int>(x.d()) * f[0], static_cast<int>(x.h()) * f[1],
                              static_cast<int>(x.w()) * f[2]});
}

Tensor upsample_trilinear_backward(const Tensor& gy, const Dims& in_dims, const Axis3& f) {
  check_factor(f, "upsample_backward");
  Dims expect{in_dims[0], in_dims[1], in_dims[2] * f[0], in_dims[3] * f[1], in_dims[4] * f[2]};
  if (gy.dims() != expect) throw_shape("upsample grad_out", gy.dims(), expect);
  return resize_trilinear_backward(gy, in_dims);
}

NormState NormState::identity(std::size_t channels, double epsilon) {
  return {Tensor({channels, 1, 1, 1, 1}, 1.0), Tensor({channels, 1, 1, 1, 1}, 0.0), epsilon};
}

Tensor instance_norm(const Tensor& x, const NormState& s, NormCache* cache) {
  const std::size_t N = x.n(), C = x.c(), M = x.spatial();
  if (s.channels() != C) throw_shape("instance_norm channels", x.dims(), s.scale.dims());
  if (M == 0) throw ShapeError("instance_norm on empty spatial extent " + to_string(x.dims()));
  Tensor y = Tensor::uninitialized(x.dims());
  if (cache) {
    cache->inv_std.assign(N * C, 0.0);
    cache->normalized = Tensor::uninitialized(x.dims());
  }
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* in = x.channel(n, c);
      double mean = 0.0;
      for (std::size_t i = 0; i < M; ++i) mean += in[i];
      mean /= static_cast<double>(M);
      double var = 0.0;
      for (std::size_t i = 0; i < M; ++i) var += (in[i] - mean) * (in[i] - mean);
      var /= static_cast<double>(M);
      const double inv = 1.0 / std::sqrt(var + s.epsilon);
      const double g = s.scale[c], b = s.shift[c];
      double* out = y.channel(n, c);
      double* xh = cache ? cache->normalized.channel(n, c) : nullptr;
      for (std::size_t i = 0; i < M; ++i) {
        const double h = (in[i] - mean) * inv;
        if (xh) xh[i] = h;
        out[i] = g * h + b;
      }
      if (cache) cache->inv_std[n * C + c] = inv;
    }
  return y;
}

NormGrads instance_norm_backward(const Tensor& gy, const NormState& s, const NormCache& cache) {
  const Tensor& xh = cache.normalized;
  if (gy.dims() != xh.dims()) throw_shape("instance_norm grad_out", gy.dims(), xh.dims());
  const std::size_t N = gy.n(), C = gy.c(), M = gy.spatial();
  NormGrads r{Tensor::uninitialized(gy.dims()), Tensor(s.scale.dims()), Tensor(s.shift.dims())};
  const double Md = static_cast<double>(M);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* g = gy.channel(n, c);
      const double* h = xh.channel(n, c);
      double sg = 0.0, sgh = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        sg += g[i];
        sgh += g[i] * h[i];
      }
      r.shift[c] += sg;
      r.scale[c] += sgh;
      const double k = s.scale[c] * cache.inv_std[n * C + c] / Md;
      double* gx = r.x.channel(n, c);
      for (std::size_t i = 0; i < M; ++i) gx[i] = k * (Md * g[i] - sg - h[i] * sgh);
    }
  return r;
}

Tensor activate(const Tensor& x, Activation kind) {
  Tensor y = Tensor::uninitialized(x.dims());
  if (kind == Activation::ReLU) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      if (v >= 0.0) {
        y[i] = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        y[i] = e / (1.0 + e);
      }
    }
  }
  return y;
}

Tensor activate_backward(const Tensor& gy, const Tensor& y, Activation kind) {
  if (gy.dims() != y.dims()) throw_shape("activate_backward", gy.dims(), y.dims());
  Tensor gx = Tensor::uninitialized(y.dims());
  if (kind == Activation::ReLU) {
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = y[i] > 0.0 ? gy[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (1.0 - y[i]);
  }
  return gx;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  add_inplace(r, b);
  return r;
}

void add_inplace(Tensor& acc, const Tensor& b) {
  if (acc.dims() != b.dims()) throw_shape("add", acc.dims(), b.dims());
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Dims d = xs[0].dims();
  std::size_t C = 0;
  for (const Tensor& t : xs) {
    Dims td = t.dims();
    if (td[0] != d[0] || td[2] != d[2] || td[3] != d[3] || td[4] != d[4])
      throw_shape("concat_channels", td, d);
    C += td[1];
  }
  Dims od = d;
  od[1] = C;
  Tensor y = Tensor::uninitialized(od);
  const std::size_t M = y.spatial();
  for (std::size_t n = 0; n < d[0]; ++n) {
    std::size_t co = 0;
    for (const Tensor& t : xs)
      for (std::size_t c = 0; c < t.c(); ++c, ++co) std::copy_n(t.channel(n, c), M, y.channel(n, co));
  }
  return y;
}

std::vector<Tensor> split_channels_by(const Tensor& x, std::span<const std::size_t> sizes) {
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != x.c())
    throw ShapeError("split_channels: sizes sum to " + std::to_string(total) + " but tensor " +
                     to_string(x.dims()));
  std::vector<Tensor> out;
  out.reserve(sizes.size());
  const std::size_t M = x.spatial();
  std::size_t c0 = 0;
  for (std::size_t s : sizes) {
    auto t = Tensor::uninitialized({x.n(), s, x.d(), x.h(), x.w()});
    for (std::size_t n = 0; n < x.n(); ++n)
      for (std::size_t c = 0; c < s; ++c) std::copy_n(x.channel(n, c0 + c), M, t.channel(n, c));
    out.push_back(std::move(t));
    c0 += s;
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, std::size_t groups) {
  if (groups == 0 || x.c() % groups)
    throw ShapeError("split_channels: " + std::to_string(x.c()) + " channels into " +
                     std::to_string(groups) + " groups");
  std::vector<std::size_t> sizes(groups, x.c() / groups);
  return split_channels_by(x, sizes);
}

double weighted_sum(const Tensor& y, const Tensor& w) {
  if (y.dims() != w.dims()) throw_shape("weighted_sum", y.dims(), w.dims());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           std::span<const double> analytic, const GradCheckOptions& opt) {
  if (analytic.size() != x.size())
    throw ShapeError("grad_check: analytic length " + std::to_string(analytic.size()) +
                     " vs tensor " + to_string(x.dims()));
  GradCheckReport rep;
  std::size_t stride = 1;
  if (opt.max_entries && x.size() > opt.max_entries) stride = (x.size() + opt.max_entries - 1) / opt.max_entries;
  Tensor probe = x;
  auto central = [&](std::size_t i, double h) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    return (fp - fm) / (2.0 * h);
  };
  auto rel_of = [&](double a, double num) {
    return std::abs(a - num) / std::max({std::abs(a), std::abs(num), opt.floor});
  };
  for (std::size_t i = 0; i < x.size(); i += stride) {
    const double a = analytic[i];
    double num = central(i, opt.h);
    double rel = rel_of(a, num);
    if (rel > opt.tol && opt.kink_retry) {
      const double num2 = central(i, opt.h / 100.0);
      const double rel2 = rel_of(a, num2);
      if (rel2 <= opt.tol) {
        num = num2;
        rel = rel2;
        ++rep.retried;
      }
    }
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(a - num));
    if (rel > rep.max_rel_error || rep.checked == 0) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
    ++rep.checked;
  }
  rep.passed = rep.max_rel_error <= opt.tol;
  return rep;
}

}  // namespace hive::ops
