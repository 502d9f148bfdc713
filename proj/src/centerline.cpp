#include "hive/centerline.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inside(const Shape3& shape, const Coord3& v) {
  if (v[0] < 0 || v[1] < 0 || v[2] < 0 || std::size_t(v[0]) >= shape[0] || std::size_t(v[1]) >= shape[1] ||
      std::size_t(v[2]) >= shape[2])
    throw std::out_of_range("centerline voxel (" + std::to_string(v[0]) + "," + std::to_string(v[1]) + "," +
                            std::to_string(v[2]) + ") outside volume " + shape_string(shape));
}

}  // namespace

void ProximityConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("proximity alpha must be positive");
  if (!(d_max > 0.0)) throw std::invalid_argument("proximity d_M must be positive");
}

double ProximityConfig::peak() const { return std::expm1(alpha); }

void edt_1d(const double* f, double* out, std::size_t n, double s) {
  // Lower envelope over the finite samples only.
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  long k = -1;
  const double s2 = s * s;
  for (std::size_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    auto cross = [&](std::size_t p) {
      const double qd = double(q), pd = double(p);
      return ((f[q] + s2 * qd * qd) - (f[p] + s2 * pd * pd)) / (2.0 * s2 * (qd - pd));
    };
    double sep = cross(v[k]);
    while (sep <= z[k]) sep = cross(v[--k]);  // z[0] = -inf stops this
    ++k;
    v[k] = q;
    z[k] = sep;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (std::size_t p = 0; p < n; ++p) out[p] = kInf;
    return;
  }
  long j = 0;
  for (std::size_t p = 0; p < n; ++p) {
    while (z[j + 1] < double(p)) ++j;
    const double d = s * (double(p) - double(v[j]));
    out[p] = f[v[j]] + d * d;
  }
}

Volume<double> distance_transform(const Shape3& shape, const CenterlineSet& c) {
  for (double s : c.spacing)
    if (!(s > 0.0)) throw std::invalid_argument("centerline spacing must be positive");
  Volume<double> g(shape, kInf);
  for (const auto& v : c.voxels) {
    check_inside(shape, v);
    g(v[0], v[1], v[2]) = 0.0;
  }
  const std::size_t D = shape[0], H = shape[1], W = shape[2];
  if (g.size() == 0) return g;
  const std::size_t longest = std::max({D, H, W});
  std::vector<double> f(longest), o(longest);
  // W lines are contiguous.
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h) {
      double* row = &g(d, h, 0);
      std::copy(row, row + W, f.begin());
      edt_1d(f.data(), row, W, c.spacing[2]);
    }
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t h = 0; h < H; ++h) f[h] = g(d, h, w);
      edt_1d(f.data(), o.data(), H, c.spacing[1]);
      for (std::size_t h = 0; h < H; ++h) g(d, h, w) = o[h];
    }
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t d = 0; d < D; ++d) f[d] = g(d, h, w);
      edt_1d(f.data(), o.data(), D, c.spacing[0]);
      for (std::size_t d = 0; d < D; ++d) g(d, h, w) = o[d];
    }
  for (auto& v : g.data) v = std::sqrt(v);
  return g;
}

double proximity_value(double dist, const ProximityConfig& cfg) {
  if (!(dist < cfg.d_max)) return 0.0;
  return std::expm1(cfg.alpha * (1.0 - dist / cfg.d_max));
}

Volume<double> proximity_map(const Volume<double>& dist, const ProximityConfig& cfg) {
  cfg.validate();
  Volume<double> m(dist.shape);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] < 0.0) throw std::invalid_argument("proximity_map: negative distance");
    m[i] = proximity_value(dist[i], cfg);
  }
  return m;
}

Volume<double> normalize_proximity(const Volume<double>& map, const ProximityConfig& cfg) {
  cfg.validate();
  Volume<double> r(map.shape);
  const double p = cfg.peak();
  for (std::size_t i = 0; i < map.size(); ++i) r[i] = map[i] / p;
  return r;
}

Volume<double> denormalize_proximity(const Volume<double>& unit, const ProximityConfig& cfg) {
  cfg.validate();
  Volume<double> r(unit.shape);
  const double p = cfg.peak();
  for (std::size_t i = 0; i < unit.size(); ++i) r[i] = unit[i] * p;
  return r;
}

CenterlineSet read_centerline(std::istream& in, const Shape3& shape) {
  CenterlineSet c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Coord3 v;
    if (!(ls >> v[0])) continue;  // blank or comment-only
    std::string rest;
    if (!(ls >> v[1] >> v[2]) || (ls >> rest))
      throw std::runtime_error("centerline line " + std::to_string(lineno) + ": expected three integers");
    check_inside(shape, v);
    c.voxels.push_back(v);
  }
  return c;
}

CenterlineSet read_centerline_file(const std::string& path, const Shape3& shape) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open centerline file " + path);
  return read_centerline(f, shape);
}

void write_centerline(std::ostream& out, const CenterlineSet& c) {
  out << "# d h w\n";
  for (const auto& v : c.voxels) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
}

}  // namespace hive
