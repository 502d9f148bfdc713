#include "hive/hvec.hpp"

#include <stdexcept>

namespace hive {

namespace {

constexpr ops::Orientation kBranchOrient[4] = {ops::Orientation::XY, ops::Orientation::XZ,
                                               ops::Orientation::YZ, ops::Orientation::XY};

double vol(const Axis3& s) { return double(s[0]) * s[1] * s[2]; }

}  // namespace

void HvecConfig::validate() const {
  if (in_channels == 0 || in_channels % 4)
    throw std::invalid_argument("hvec in_channels must be a positive multiple of 4, got " +
                                std::to_string(in_channels));
  if (out_channels == 0 || out_channels % 4)
    throw std::invalid_argument("hvec out_channels must be a positive multiple of 4, got " +
                                std::to_string(out_channels));
  for (int f : focal_factor)
    if (f < 1) throw std::invalid_argument("hvec focal factor must be >= 1, got " + to_string(focal_factor));
}

HvecConfig HvecConfig::with_channels(std::size_t cin, std::size_t cout) const {
  HvecConfig c = *this;
  c.in_channels = cin;
  c.out_channels = cout;
  return c;
}

HvecConfig apply_variant(HvecConfig cfg, char v) {
  switch (v) {
    case 'A': cfg.inter_branch = false; cfg.focal_branch = false; break;
    case 'B': cfg.inter_branch = false; cfg.focal_branch = true; break;
    case 'C': cfg.inter_branch = true; cfg.focal_branch = false; break;
    case 'D': cfg.inter_branch = true; cfg.focal_branch = true; break;
    default: throw std::invalid_argument(std::string("unknown ablation variant '") + v + "'");
  }
  return cfg;
}

char variant_of(const HvecConfig& cfg) {
  if (cfg.inter_branch) return cfg.focal_branch ? 'D' : 'C';
  return cfg.focal_branch ? 'B' : 'A';
}

HvecParams HvecParams::zeros(const HvecConfig& cfg) {
  cfg.validate();
  const std::size_t q = cfg.in_channels / 4, r = cfg.out_channels / 4;
  HvecParams p;
  for (int i = 0; i < 4; ++i) p.branch[i] = ConvUnit::zeros(kBranchOrient[i], q, r);
  if (q != r)
    for (auto& pr : p.project) pr = ops::ConvKernel::zeros(ops::Orientation::Point, r, q);
  p.fuse = ConvUnit::zeros(ops::Orientation::Point, cfg.out_channels, cfg.out_channels);
  return p;
}

std::size_t HvecParams::param_count() const {
  std::size_t n = fuse.param_count();
  for (const auto& b : branch) n += b.param_count();
  for (const auto& pr : project)
    if (pr) n += pr->param_count();
  return n;
}

void HvecParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (int i = 0; i < 4; ++i) branch[i].visit(prefix + ".branch" + std::to_string(i), fn);
  for (int i = 0; i < 3; ++i)
    if (project[i]) visit_conv(prefix + ".project" + std::to_string(i + 1), *project[i], fn);
  fuse.visit(prefix + ".fuse", fn);
}

std::size_t hvec_param_count(const HvecConfig& cfg) {
  cfg.validate();
  const std::size_t q = cfg.in_channels / 4, r = cfg.out_channels / 4, c = cfg.out_channels;
  std::size_t n = 4 * (r * q * 9 + r + 2 * r);
  if (q != r) n += 3 * (q * r + q);
  n += c * c + c + 2 * c;
  return n;
}

Tensor hvec_forward(const Tensor& x, const HvecConfig& cfg, const HvecParams& p, HvecCache* cache) {
  cfg.validate();
  if (x.c() != cfg.in_channels)
    throw ShapeError("hvec input has " + std::to_string(x.c()) + " channels, block expects " +
                     std::to_string(cfg.in_channels) + " " + to_string(x.dims()));
  auto groups = ops::split_channels(x, 4);
  std::vector<Tensor> outs(4);
  for (int i = 0; i < 4; ++i) {
    Tensor in = std::move(groups[i]);
    if (cfg.inter_branch && i > 0) {
      const Tensor& prev = outs[i - 1];
      if (p.project[i - 1]) {
        ops::add_inplace(in, linear_forward(*p.project[i - 1], prev,
                                            cache ? &cache->project_input[i - 1] : nullptr));
      } else {
        ops::add_inplace(in, prev);
      }
    }
    ConvUnitCache* bc = cache ? &cache->branch[i] : nullptr;
    if (i == 3 && cfg.focal_branch) {
      auto pooled = ops::max_pool(in, cfg.focal_factor, /*ceil_mode=*/true);
      if (cache) {
        cache->pool_argmax = std::move(pooled.argmax);
        cache->pool_input_dims = in.dims();
      }
      Tensor low = conv_unit_forward(p.branch[i], pooled.out, cfg.normalize, bc);
      outs[i] = ops::resize_trilinear(
          low, {static_cast<int>(in.d()), static_cast<int>(in.h()), static_cast<int>(in.w())});
    } else {
      outs[i] = conv_unit_forward(p.branch[i], in, cfg.normalize, bc);
    }
  }
  Tensor cat = ops::concat_channels(outs);
  return conv_unit_forward(p.fuse, cat, cfg.normalize, cache ? &cache->fuse : nullptr);
}

Tensor hvec_backward(const Tensor& gy, const HvecConfig& cfg, HvecParams& p, const HvecCache& c) {
  Tensor gcat = conv_unit_backward(p.fuse, gy, c.fuse, cfg.normalize);
  auto gb = ops::split_channels(gcat, 4);
  std::vector<Tensor> gin(4);
  for (int i = 3; i >= 0; --i) {
    Tensor g;
    if (i == 3 && cfg.focal_branch) {
      const Tensor& low_out = c.branch[i].out;
      Tensor glow = ops::resize_trilinear_backward(gb[i], low_out.dims());
      Tensor gpool = conv_unit_backward(p.branch[i], glow, c.branch[i], cfg.normalize);
      g = ops::max_pool_backward(gpool, c.pool_argmax, c.pool_input_dims);
    } else {
      g = conv_unit_backward(p.branch[i], gb[i], c.branch[i], cfg.normalize);
    }
    if (cfg.inter_branch && i > 0) {
      if (p.project[i - 1]) {
        ops::add_inplace(gb[i - 1], linear_backward(*p.project[i - 1], g, c.project_input[i - 1]));
      } else {
        ops::add_inplace(gb[i - 1], g);
      }
    }
    gin[i] = std::move(g);
  }
  return ops::concat_channels(gin);
}

HvecModuleParams HvecModuleParams::zeros(const HvecConfig& cfg) {
  HvecModuleParams m;
  m.first = HvecParams::zeros(cfg);
  m.second = HvecParams::zeros(cfg.with_channels(cfg.out_channels, cfg.out_channels));
  if (cfg.in_channels != cfg.out_channels)
    m.shortcut = ops::ConvKernel::zeros(ops::Orientation::Point, cfg.in_channels, cfg.out_channels);
  return m;
}

std::size_t HvecModuleParams::param_count() const {
  return first.param_count() + second.param_count() + (shortcut ? shortcut->param_count() : 0);
}

void HvecModuleParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  first.visit(prefix + ".block0", fn);
  second.visit(prefix + ".block1", fn);
  if (shortcut) visit_conv(prefix + ".shortcut", *shortcut, fn);
}

std::size_t hvec_module_param_count(const HvecConfig& cfg) {
  std::size_t n = hvec_param_count(cfg) +
                  hvec_param_count(cfg.with_channels(cfg.out_channels, cfg.out_channels));
  if (cfg.in_channels != cfg.out_channels) n += cfg.in_channels * cfg.out_channels + cfg.out_channels;
  return n;
}

Tensor hvec_module_forward(const Tensor& x, const HvecConfig& cfg, const HvecModuleParams& p,
                           HvecModuleCache* cache) {
  HvecConfig second = cfg.with_channels(cfg.out_channels, cfg.out_channels);
  Tensor h = hvec_forward(x, cfg, p.first, cache ? &cache->first : nullptr);
  Tensor y = hvec_forward(h, second, p.second, cache ? &cache->second : nullptr);
  if (p.shortcut) {
    ops::add_inplace(y, linear_forward(*p.shortcut, x, cache ? &cache->shortcut_input : nullptr));
  } else {
    ops::add_inplace(y, x);
  }
  return y;
}

Tensor hvec_module_backward(const Tensor& gy, const HvecConfig& cfg, HvecModuleParams& p,
                            const HvecModuleCache& c) {
  HvecConfig second = cfg.with_channels(cfg.out_channels, cfg.out_channels);
  Tensor gh = hvec_backward(gy, second, p.second, c.second);
  Tensor gx = hvec_backward(gh, cfg, p.first, c.first);
  if (p.shortcut) {
    ops::add_inplace(gx, linear_backward(*p.shortcut, gy, c.shortcut_input));
  } else {
    ops::add_inplace(gx, gy);
  }
  return gx;
}

OpCount hvec_op_count(const HvecConfig& cfg, const Axis3& s) {
  cfg.validate();
  const double q = cfg.in_channels / 4, r = cfg.out_channels / 4, c = cfg.out_channels;
  const double v = vol(s);
  const Axis3& f = cfg.focal_factor;
  auto ceil_div = [](int n, int k) { return double((n + k - 1) / k); };
  const double fv = ceil_div(s[0], f[0]) * ceil_div(s[1], f[1]) * ceil_div(s[2], f[2]);
  OpCount n;
  for (int b = 0; b < 4; ++b) {
    if (b > 0 && cfg.inter_branch) {
      if (q != r) n.macs += r * q * v;
      n.elementwise += q * v;
    }
    const bool focal = b == 3 && cfg.focal_branch;
    const double bv = focal ? fv : v;
    if (focal) n.elementwise += q * v;  // pooling reads
    n.macs += r * q * 9 * bv;
    n.elementwise += 2 * r * bv;  // norm + activation
    if (focal) n.elementwise += r * v;  // upsampling writes
  }
  n.macs += c * c * v;
  n.elementwise += 2 * c * v;
  return n;
}

OpCount hvec_module_op_count(const HvecConfig& cfg, const Axis3& s) {
  OpCount n = hvec_op_count(cfg, s);
  n += hvec_op_count(cfg.with_channels(cfg.out_channels, cfg.out_channels), s);
  const double v = vol(s);
  if (cfg.in_channels != cfg.out_channels) n.macs += double(cfg.in_channels) * cfg.out_channels * v;
  n.elementwise += cfg.out_channels * v;  // residual add
  return n;
}

}  // namespace hive
