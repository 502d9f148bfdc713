#include "hive/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hive {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (auto& x : v) x /= n;
  return v;
}

Vec3 random_direction(Rng& rng) {
  Vec3 v;
  do {
    v = {rng.normal(), rng.normal(), rng.normal()};
  } while (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] < 1e-12);
  return normalized(v);
}

struct TubePoint {
  Vec3 p;
  double r;
};

// Random smooth curve that stays at least r + 1 voxels from every face.
std::vector<TubePoint> trace_tube(const PhantomConfig& cfg, Rng& rng) {
  const double r0 = rng.uniform(cfg.min_radius, cfg.max_radius);
  const double margin = r0 * 1.25 + 1.0;
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = margin;
    hi[a] = double(cfg.dims[a]) - 1.0 - margin;
  }
  for (int a = 0; a < 3; ++a)
    if (hi[a] < lo[a]) return {};
  Vec3 p;
  for (int a = 0; a < 3; ++a) p[a] = rng.uniform(lo[a], hi[a]);
  Vec3 dir = random_direction(rng);
  dir[0] *= 0.5;  // flatter in depth, like organelles in anisotropic stacks
  dir = normalized(dir);
  const double length = rng.uniform(6.0 * r0, 16.0 * r0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double step = 0.5;
  std::vector<TubePoint> pts;
  for (double s = 0.0; s <= length; s += step) {
    const double r = r0 * (1.0 + 0.2 * std::sin(phase + s / (2.0 * r0)));
    pts.push_back({p, std::max(1.0, r)});
    Vec3 turn = random_direction(rng);
    for (int a = 0; a < 3; ++a) dir[a] += cfg.curvature * step * turn[a];
    dir = normalized(dir);
    Vec3 next;
    for (int a = 0; a < 3; ++a) next[a] = p[a] + step * dir[a];
    bool inside = true;
    for (int a = 0; a < 3; ++a) inside &= next[a] >= lo[a] && next[a] <= hi[a];
    if (!inside) break;
    p = next;
  }
  return pts;
}

// Voxels within the local radius of any curve sample.
std::vector<std::size_t> rasterize(const std::vector<TubePoint>& pts, const Shape3& dims) {
  std::vector<std::size_t> out;
  std::vector<std::uint8_t> mark(dims[0] * dims[1] * dims[2], 0);
  for (const auto& tp : pts) {
    long lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0L, long(std::floor(tp.p[a] - tp.r)));
      hi[a] = std::min(long(dims[a]) - 1, long(std::ceil(tp.p[a] + tp.r)));
    }
    for (long d = lo[0]; d <= hi[0]; ++d)
      for (long h = lo[1]; h <= hi[1]; ++h)
        for (long w = lo[2]; w <= hi[2]; ++w) {
          const double x = d - tp.p[0], y = h - tp.p[1], z = w - tp.p[2];
          if (x * x + y * y + z * z > tp.r * tp.r) continue;
          const std::size_t i = (std::size_t(d) * dims[1] + std::size_t(h)) * dims[2] + std::size_t(w);
          if (!mark[i]) {
            mark[i] = 1;
            out.push_back(i);
          }
        }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Smooth background texture: a few random plane waves.
Volume<double> texture(const Shape3& dims, Rng& rng) {
  struct Wave {
    Vec3 k;
    double phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    Vec3 dir = random_direction(rng);
    const double freq = rng.uniform(0.05, 0.3);
    for (auto& x : dir) x *= freq;
    waves.push_back({dir, rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.02, 0.06)});
  }
  Volume<double> t(dims);
  for (std::size_t d = 0; d < dims[0]; ++d)
    for (std::size_t h = 0; h < dims[1]; ++h)
      for (std::size_t w = 0; w < dims[2]; ++w) {
        double v = 0.3;
        for (const auto& wv : waves) v += wv.amp * std::sin(wv.k[0] * d + wv.k[1] * h + wv.k[2] * w + wv.phase);
        t(d, h, w) = v;
      }
  return t;
}

}  // namespace

void PhantomConfig::validate() const {
  for (auto d : dims)
    if (d < 16) throw std::invalid_argument("phantom dims must be >= 16 per axis, got " + shape_string(dims));
  if (min_instances < 0 || max_instances < min_instances)
    throw std::invalid_argument("phantom instance range must satisfy 0 <= min <= max");
  if (!(min_radius >= 1.0) || max_radius < min_radius)
    throw std::invalid_argument("phantom radii must satisfy 1 <= min <= max");
  if (curvature < 0.0 || noise < 0.0 || clutter < 0.0 || clutter > 1.0)
    throw std::invalid_argument("phantom curvature, noise and clutter must be non-negative (clutter <= 1)");
  if (!(contrast > 0.0)) throw std::invalid_argument("phantom contrast must be positive");
  for (double s : spacing)
    if (!(s > 0.0)) throw std::invalid_argument("phantom spacing must be positive");
  if (max_attempts < 1) throw std::invalid_argument("phantom max_attempts must be >= 1");
}

CenterlineSet LabeledVolume::all_centerlines() const {
  CenterlineSet all;
  all.spacing = spacing;
  for (const auto& c : centerlines) all.voxels.insert(all.voxels.end(), c.voxels.begin(), c.voxels.end());
  return all;
}

LabeledVolume generate(const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Shape3 dims = cfg.dims;
  LabeledVolume v;
  v.spacing = cfg.spacing;
  v.instances.ids = LabelVolume(dims, 0);
  // Occupied voxels grown by one so instances never touch, even diagonally.
  Mask halo(dims, 0);
  Volume<double> profile(dims, 0.0);
  const int count = cfg.min_instances + int(rng.below(std::uint64_t(cfg.max_instances - cfg.min_instances + 1)));
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      auto pts = trace_tube(cfg, rng);
      if (pts.size() < 4) continue;
      auto vox = rasterize(pts, dims);
      bool clash = false;
      for (auto i : vox)
        if (halo[i]) {
          clash = true;
          break;
        }
      if (clash) continue;
      const std::int32_t id = ++v.instances.count;
      for (auto i : vox) v.instances.ids[i] = id;
      for (auto i : vox) {
        const long d = long(i / (dims[1] * dims[2])), h = long((i / dims[2]) % dims[1]), w = long(i % dims[2]);
        for (long a = -1; a <= 1; ++a)
          for (long b = -1; b <= 1; ++b)
            for (long c = -1; c <= 1; ++c) {
              const Coord3 n{d + a, h + b, w + c};
              if (halo.contains(n)) halo(n[0], n[1], n[2]) = 1;
            }
      }
      // Centerline: the voxel nearest each curve sample.
      CenterlineSet cl;
      cl.spacing = cfg.spacing;
      for (const auto& tp : pts) {
        const Coord3 c{long(std::lround(tp.p[0])), long(std::lround(tp.p[1])), long(std::lround(tp.p[2]))};
        if (cl.voxels.empty() || cl.voxels.back() != c) cl.voxels.push_back(c);
      }
      std::sort(cl.voxels.begin(), cl.voxels.end());
      cl.voxels.erase(std::unique(cl.voxels.begin(), cl.voxels.end()), cl.voxels.end());
      v.centerlines.push_back(std::move(cl));
      // Intensity profile: brighter towards the axis.
      for (const auto& tp : pts) {
        long lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::max(0L, long(std::floor(tp.p[a] - tp.r)));
          hi[a] = std::min(long(dims[a]) - 1, long(std::ceil(tp.p[a] + tp.r)));
        }
        for (long d = lo[0]; d <= hi[0]; ++d)
          for (long h = lo[1]; h <= hi[1]; ++h)
            for (long w = lo[2]; w <= hi[2]; ++w) {
              const double x = d - tp.p[0], y = h - tp.p[1], z = w - tp.p[2];
              const double q = std::sqrt(x * x + y * y + z * z) / tp.r;
              if (q > 1.0) continue;
              double& pr = profile(d, h, w);
              pr = std::max(pr, 1.0 - 0.4 * q * q);
            }
      }
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("phantom: could not place instance " + std::to_string(k + 1) + " of " +
                               std::to_string(count) + " after " + std::to_string(cfg.max_attempts) +
                               " attempts; lower the instance count or radius, or enlarge the volume");
  }

  v.labels = Mask(dims, 0);
  for (std::size_t i = 0; i < v.labels.size(); ++i) v.labels[i] = v.instances.ids[i] != 0;

  Volume<double> img = texture(dims, rng);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] += cfg.contrast * profile[i];
  // Distractor spots: small, dimmer than the tubes, away from them.
  const std::size_t spots = std::size_t(cfg.clutter * double(img.size()));
  for (std::size_t s = 0; s < spots; ++s) {
    const std::size_t i = rng.below(img.size());
    if (v.labels[i]) continue;
    img[i] += 0.35 * cfg.contrast;
  }
  if (cfg.noise > 0.0)
    for (auto& x : img.data) x += cfg.noise * rng.normal();
  const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
  const double lo = *mn, span = *mx - *mn;
  for (auto& x : img.data) x = span > 0.0 ? (x - lo) / span : 0.0;
  v.image = std::move(img);
  return v;
}

Sample make_sample(const LabeledVolume& v, const ProximityConfig& pc) {
  Sample s;
  s.image = v.image;
  s.label = v.labels;
  s.proximity = normalize_proximity(proximity_map(distance_transform(v.image.shape, v.all_centerlines()), pc), pc);
  return s;
}

namespace {

template <class T>
Volume<T> crop_volume(const Volume<T>& v, const Shape3& c, const Shape3& size) {
  Volume<T> out(size);
  for (std::size_t d = 0; d < size[0]; ++d)
    for (std::size_t h = 0; h < size[1]; ++h) {
      const T* src = &v(c[0] + d, c[1] + h, c[2]);
      std::copy(src, src + size[2], &out(d, h, 0));
    }
  return out;
}

}  // namespace

Sample crop(const Sample& s, const Shape3& corner, const Shape3& size) {
  for (int a = 0; a < 3; ++a)
    if (size[a] == 0 || corner[a] + size[a] > s.image.shape[a])
      throw std::invalid_argument("crop " + shape_string(size) + " at " + shape_string(corner) +
                                  " exceeds volume " + shape_string(s.image.shape));
  return {crop_volume(s.image, corner, size), crop_volume(s.label, corner, size),
          crop_volume(s.proximity, corner, size)};
}

Sample random_crop(const Sample& s, const Shape3& size, Rng& rng, Shape3* corner) {
  Shape3 c{};
  for (int a = 0; a < 3; ++a) {
    if (size[a] > s.image.shape[a])
      throw std::invalid_argument("crop " + shape_string(size) + " larger than volume " +
                                  shape_string(s.image.shape));
    c[a] = rng.below(s.image.shape[a] - size[a] + 1);
  }
  if (corner) *corner = c;
  return crop(s, c, size);
}

template <class T>
Volume<T> augment_volume(const Volume<T>& v, Augment op, int k) {
  const auto [D, H, W] = v.shape;
  if (op == Augment::FlipW) {
    Volume<T> out(v.shape);
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) out(d, h, w) = v(d, h, W - 1 - w);
    return out;
  }
  if (H != W)
    throw std::invalid_argument("transpose and rot90 need a square H-W plane, got " + shape_string(v.shape));
  if (op == Augment::TransposeHW) {
    Volume<T> out(v.shape);
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) out(d, h, w) = v(d, w, h);
    return out;
  }
  const int turns = ((k % 4) + 4) % 4;
  Volume<T> cur = v;
  for (int t = 0; t < turns; ++t) {
    Volume<T> out(v.shape);
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) out(d, h, w) = cur(d, W - 1 - w, h);
    cur = std::move(out);
  }
  return cur;
}

template Volume<double> augment_volume(const Volume<double>&, Augment, int);
template Volume<std::uint8_t> augment_volume(const Volume<std::uint8_t>&, Augment, int);
template Volume<std::int32_t> augment_volume(const Volume<std::int32_t>&, Augment, int);

Sample augment(const Sample& s, Augment op, int k) {
  return {augment_volume(s.image, op, k), augment_volume(s.label, op, k), augment_volume(s.proximity, op, k)};
}

Sample random_augment(const Sample& s, Rng& rng) {
  Sample out = s;
  if (rng.below(2)) out = augment(out, Augment::FlipW);
  const bool square = s.image.shape[1] == s.image.shape[2];
  const bool transpose = rng.below(2) == 1;
  const int turns = int(rng.below(4));
  if (square) {
    if (transpose) out = augment(out, Augment::TransposeHW);
    if (turns) out = augment(out, Augment::Rot90, turns);
  }
  return out;
}

}  // namespace hive
