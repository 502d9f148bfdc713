#include "hive/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hive/rng.hpp"

namespace hive {

namespace {

using ops::ConvKernel;
using ops::Orientation;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("network config: " + what);
}

HvecConfig module_cfg(const NetworkConfig& c, std::size_t cin, std::size_t cout) {
  return c.hvec.with_channels(cin, cout);
}

Axis3 spatial_of(const Tensor& t) {
  return {static_cast<int>(t.d()), static_cast<int>(t.h()), static_cast<int>(t.w())};
}

std::string list(const auto& xs) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  os << ']';
  return os.str();
}

Network::Decoder make_decoder(const NetworkConfig& c, const std::array<std::size_t, 3>& w) {
  Network::Decoder d;
  std::size_t prev = c.encoder[3];
  for (int s = 2; s >= 0; --s) {
    d.stage[s] = HvecModuleParams::zeros(module_cfg(c, prev, w[s]));
    if (c.encoder[s] != w[s]) d.skip[s] = ConvKernel::zeros(Orientation::Point, c.encoder[s], w[s]);
    prev = w[s];
  }
  return d;
}

void visit_decoder(const std::string& p, Network::Decoder& d, const ParamVisitor& fn) {
  for (int s = 2; s >= 0; --s) {
    d.stage[s].visit(p + ".stage" + std::to_string(s), fn);
    if (d.skip[s]) visit_conv(p + ".skip" + std::to_string(s), *d.skip[s], fn);
  }
}

Tensor decoder_forward(const NetworkConfig& c, const Network::Decoder& d,
                       const std::array<Tensor, 4>& enc, const std::array<std::size_t, 3>& w,
                       DecoderCache* cache) {
  Tensor prev = enc[3];
  if (cache)
    for (int s = 0; s < 4; ++s) cache->consumed[s] = fingerprint(enc[s]);
  for (int s = 2; s >= 0; --s) {
    if (cache) cache->up_input[s] = prev.dims();
    Tensor up = ops::upsample_trilinear(prev, c.pools[s]);
    Tensor y = hvec_module_forward(up, module_cfg(c, prev.c(), w[s]), d.stage[s],
                                   cache ? &cache->stage[s] : nullptr);
    if (d.skip[s]) {
      ops::add_inplace(y, linear_forward(*d.skip[s], enc[s], cache ? &cache->skip_input[s] : nullptr));
    } else {
      ops::add_inplace(y, enc[s]);
    }
    prev = std::move(y);
  }
  return prev;
}

// Returns gradients for encoder outputs E0..E3 contributed by this decoder.
std::array<Tensor, 4> decoder_backward(const NetworkConfig& c, Network::Decoder& d, Tensor g,
                                       const std::array<std::size_t, 3>& w, const DecoderCache& cache) {
  std::array<Tensor, 4> ge;
  for (int s = 0; s <= 2; ++s) {
    ge[s] = d.skip[s] ? linear_backward(*d.skip[s], g, cache.skip_input[s]) : g;
    const std::size_t cin = cache.up_input[s][1];
    Tensor gup = hvec_module_backward(g, module_cfg(c, cin, w[s]), d.stage[s], cache.stage[s]);
    g = ops::upsample_trilinear_backward(gup, cache.up_input[s], c.pools[s]);
  }
  ge[3] = std::move(g);
  return ge;
}

std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t taps) {
  return cin * cout * taps + cout;
}

}  // namespace

void NetworkConfig::validate() const {
  for (std::size_t s = 0; s < 4; ++s)
    require(encoder[s] > 0 && encoder[s] % 4 == 0,
            "encoder width " + std::to_string(encoder[s]) + " at stage " + std::to_string(s) +
                " must be a positive multiple of 4");
  for (std::size_t s = 0; s < 3; ++s) {
    require(seg_decoder[s] > 0 && seg_decoder[s] % 4 == 0,
            "segmentation decoder width " + std::to_string(seg_decoder[s]) + " must be a positive multiple of 4");
    if (multitask)
      require(det_decoder[s] > 0 && det_decoder[s] % 4 == 0,
              "detection decoder width " + std::to_string(det_decoder[s]) + " must be a positive multiple of 4");
    for (int a = 0; a < 3; ++a) require(pools[s][a] >= 1, "pool windows must be >= 1");
  }
  Axis3 f = downsampling();
  for (int a = 0; a < 3; ++a)
    require(crop[a] > 0 && crop[a] % f[a] == 0,
            "crop " + to_string(crop) + " must be divisible by the total downsampling " + to_string(f));
  hvec.with_channels(4, 4).validate();
}

Axis3 NetworkConfig::downsampling() const {
  Axis3 f{1, 1, 1};
  for (const auto& p : pools)
    for (int a = 0; a < 3; ++a) f[a] *= p[a];
  return f;
}

NetworkConfig NetworkConfig::standard() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::reduced(std::size_t stage2, std::size_t stage3) {
  NetworkConfig c;
  c.encoder = {32, 192, stage2, stage3};
  c.seg_decoder = {32, 96, stage2 / 2};
  c.det_decoder = {8, 48, stage2 * 3 / 8};
  return c;
}

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.encoder = {8, 16, 16, 16};
  c.seg_decoder = {8, 8, 8};
  c.det_decoder = {4, 4, 4};
  c.crop = {8, 16, 16};
  return c;
}

NetworkConfig NetworkConfig::quarter() {
  NetworkConfig c;
  auto q = [](std::size_t v) { return std::max<std::size_t>(4, v / 4); };
  for (auto& v : c.encoder) v = q(v);
  for (auto& v : c.seg_decoder) v = q(v);
  for (auto& v : c.det_decoder) v = q(v);
  c.crop = {24, 64, 64};
  return c;
}

std::string describe(const NetworkConfig& c) {
  std::ostringstream os;
  os << "encoder=" << list(c.encoder) << " seg_decoder=" << list(c.seg_decoder);
  if (c.multitask) os << " det_decoder=" << list(c.det_decoder);
  os << " pools=" << to_string(c.pools[0]) << to_string(c.pools[1]) << to_string(c.pools[2])
     << " variant=" << variant_of(c.hvec) << " focal=" << to_string(c.hvec.focal_factor)
     << " multitask=" << (c.multitask ? 1 : 0) << " crop=" << to_string(c.crop);
  return os.str();
}

void Network::visit(const ParamVisitor& fn) {
  stem.visit("stem", fn);
  for (int s = 0; s < 4; ++s) {
    if (s == 3) visit_conv("enc3.expand", expand, fn);
    encoder[s].visit("enc" + std::to_string(s), fn);
  }
  visit_decoder("seg", seg, fn);
  if (det) visit_decoder("det", *det, fn);
  merge.visit("merge", fn);
  visit_conv("seg.head", seg_head, fn);
  if (det_head) visit_conv("det.head", *det_head, fn);
}

void Network::visit(const ConstParamVisitor& fn) const {
  const_cast<Network*>(this)->visit(ParamVisitor([&](const std::string& n, Tensor& t) { fn(n, t); }));
}

void Network::zero_grad() {
  visit(ParamVisitor([](const std::string&, Tensor& t) { t.zero_grad(); }));
}

Network make_network(const NetworkConfig& cfg) {
  cfg.validate();
  Network n;
  n.cfg = cfg;
  const auto& e = cfg.encoder;
  n.stem = ConvUnit::zeros(Orientation::XY, 1, e[0]);
  n.encoder[0] = HvecModuleParams::zeros(module_cfg(cfg, e[0], e[0]));
  n.encoder[1] = HvecModuleParams::zeros(module_cfg(cfg, e[0], e[1]));
  n.encoder[2] = HvecModuleParams::zeros(module_cfg(cfg, e[1], e[2]));
  n.expand = ConvKernel::zeros(Orientation::Point, e[2], e[3]);
  n.encoder[3] = HvecModuleParams::zeros(module_cfg(cfg, e[3], e[3]));
  n.seg = make_decoder(cfg, cfg.seg_decoder);
  const std::size_t s0 = cfg.seg_decoder[0];
  if (cfg.multitask) {
    n.det = make_decoder(cfg, cfg.det_decoder);
    n.merge = HvecModuleParams::zeros(module_cfg(cfg, s0 + cfg.det_decoder[0], s0));
    n.det_head = ConvKernel::zeros(Orientation::Point, cfg.det_decoder[0], 1);
  } else {
    n.merge = HvecModuleParams::zeros(module_cfg(cfg, s0, s0));
  }
  n.seg_head = ConvKernel::zeros(Orientation::Point, s0, 1);
  return n;
}

Network build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  Network n = make_network(cfg);
  Rng rng(seed);
  n.visit(ParamVisitor([&](const std::string& name, Tensor& t) {
    auto ends = [&](const char* suf) {
      std::string s(suf);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends(".scale")) {
      t.fill(1.0);
    } else if (ends(".shift") || ends(".bias")) {
      t.fill(0.0);
    } else {
      // Weights feeding a relu (inside conv units) get gain 2; linear maps 1.
      const bool relu_follows = ends(".conv.weight");
      const Dims& d = t.dims();
      const double fan_in = double(d[1] * d[2] * d[3] * d[4]);
      const double sd = std::sqrt((relu_follows ? 2.0 : 1.0) / fan_in);
      for (auto& v : t.data()) v = sd * rng.normal();
    }
  }));
  return n;
}

std::size_t count_params(const Network& net) {
  std::size_t n = 0;
  net.visit(ConstParamVisitor([&](const std::string&, const Tensor& t) { n += t.size(); }));
  return n;
}

std::size_t count_params(const NetworkConfig& c) {
  c.validate();
  auto mod = [&](std::size_t a, std::size_t b) { return hvec_module_param_count(module_cfg(c, a, b)); };
  const auto& e = c.encoder;
  std::size_t n = conv_params(1, e[0], 9) + 2 * e[0];
  n += mod(e[0], e[0]) + mod(e[0], e[1]) + mod(e[1], e[2]) + conv_params(e[2], e[3], 1) + mod(e[3], e[3]);
  auto dec = [&](const std::array<std::size_t, 3>& w) {
    std::size_t k = 0, prev = e[3];
    for (int s = 2; s >= 0; --s) {
      k += mod(prev, w[s]);
      if (e[s] != w[s]) k += conv_params(e[s], w[s], 1);
      prev = w[s];
    }
    return k;
  };
  const std::size_t s0 = c.seg_decoder[0];
  n += dec(c.seg_decoder) + conv_params(s0, 1, 1);
  if (c.multitask) {
    n += dec(c.det_decoder) + mod(s0 + c.det_decoder[0], s0) + conv_params(c.det_decoder[0], 1, 1);
  } else {
    n += mod(s0, s0);
  }
  return n;
}

FlopReport count_flops(const NetworkConfig& c, const Axis3& input) {
  c.validate();
  std::array<Axis3, 4> sp{input};
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 3; ++a) sp[s + 1][a] = sp[s][a] / c.pools[s][a];
  auto vol = [&](int s) { return double(sp[s][0]) * sp[s][1] * sp[s][2]; };
  OpCount n;
  auto conv = [&](std::size_t cin, std::size_t cout, double taps, int s) {
    n.macs += double(cin) * cout * taps * vol(s);
  };
  auto mod = [&](std::size_t a, std::size_t b, int s) { n += hvec_module_op_count(module_cfg(c, a, b), sp[s]); };
  const auto& e = c.encoder;
  conv(1, e[0], 9, 0);
  n.elementwise += 2.0 * e[0] * vol(0);
  mod(e[0], e[0], 0);
  for (int s = 1; s <= 3; ++s) {
    n.elementwise += double(e[s - 1]) * vol(s - 1);  // pooling reads
    if (s < 3) {
      mod(e[s - 1], e[s], s);
    } else {
      conv(e[2], e[3], 1, 3);
      mod(e[3], e[3], 3);
    }
  }
  auto dec = [&](const std::array<std::size_t, 3>& w) {
    std::size_t prev = e[3];
    for (int s = 2; s >= 0; --s) {
      n.elementwise += double(prev) * vol(s);  // upsampling writes
      mod(prev, w[s], s);
      if (e[s] != w[s]) conv(e[s], w[s], 1, s);
      n.elementwise += double(w[s]) * vol(s);  // skip add
      prev = w[s];
    }
  };
  const std::size_t s0 = c.seg_decoder[0];
  dec(c.seg_decoder);
  if (c.multitask) {
    dec(c.det_decoder);
    mod(s0 + c.det_decoder[0], s0, 0);
    conv(c.det_decoder[0], 1, 1, 0);
    n.elementwise += vol(0);
  } else {
    mod(s0, s0, 0);
  }
  conv(s0, 1, 1, 0);
  n.elementwise += vol(0);
  return {n.macs, n.elementwise};
}

NetworkOutput forward(const Network& net, const Tensor& x, NetworkCache* cache) {
  const NetworkConfig& c = net.cfg;
  if (x.c() != 1) throw ShapeError("network input must have 1 channel, got " + to_string(x.dims()));
  const Axis3 f = c.downsampling();
  const Axis3 s = spatial_of(x);
  for (int a = 0; a < 3; ++a)
    if (s[a] % f[a])
      throw ShapeError("network input " + to_string(x.dims()) + " not divisible by total downsampling " +
                       to_string(f));
  const auto& e = c.encoder;
  std::array<Tensor, 4> enc;
  Tensor h = conv_unit_forward(net.stem, x, true, cache ? &cache->stem : nullptr);
  enc[0] = hvec_module_forward(h, module_cfg(c, e[0], e[0]), net.encoder[0], cache ? &cache->encoder[0] : nullptr);
  for (int st = 1; st <= 3; ++st) {
    auto pooled = ops::max_pool(enc[st - 1], c.pools[st - 1]);
    if (cache) {
      cache->pool_argmax[st - 1] = std::move(pooled.argmax);
      cache->pool_input[st - 1] = enc[st - 1].dims();
    }
    Tensor in = std::move(pooled.out);
    if (st == 3) in = linear_forward(net.expand, in, cache ? &cache->expand_input : nullptr);
    const std::size_t cin = st == 3 ? e[3] : e[st - 1];
    enc[st] = hvec_module_forward(in, module_cfg(c, cin, e[st]), net.encoder[st],
                                  cache ? &cache->encoder[st] : nullptr);
  }

  NetworkOutput out;
  Tensor seg0 = decoder_forward(c, net.seg, enc, c.seg_decoder, cache ? &cache->seg : nullptr);
  const std::size_t s0 = c.seg_decoder[0];
  Tensor merged;
  if (c.multitask) {
    Tensor det0 = decoder_forward(c, *net.det, enc, c.det_decoder, cache ? &cache->det : nullptr);
    Tensor z = linear_forward(*net.det_head, det0, cache ? &cache->det_head_input : nullptr);
    out.prox = ops::activate(z, ops::Activation::Sigmoid);
    std::vector<Tensor> parts{std::move(seg0), std::move(det0)};
    if (cache) cache->merge_split = {parts[0].c(), parts[1].c()};
    merged = hvec_module_forward(ops::concat_channels(parts), module_cfg(c, s0 + c.det_decoder[0], s0), net.merge,
                                 cache ? &cache->merge : nullptr);
  } else {
    merged = hvec_module_forward(seg0, module_cfg(c, s0, s0), net.merge, cache ? &cache->merge : nullptr);
  }
  Tensor z = linear_forward(net.seg_head, merged, cache ? &cache->seg_head_input : nullptr);
  out.prob = ops::activate(z, ops::Activation::Sigmoid);
  if (cache) {
    cache->prob = out.prob;
    if (out.prox) cache->prox = *out.prox;
  }
  return out;
}

Tensor backward(Network& net, const Tensor& grad_prob, const Tensor* grad_prox, const NetworkCache& cache) {
  const NetworkConfig& c = net.cfg;
  const auto& e = c.encoder;
  const std::size_t s0 = c.seg_decoder[0];
  Tensor gz = ops::activate_backward(grad_prob, cache.prob, ops::Activation::Sigmoid);
  Tensor gm = linear_backward(net.seg_head, gz, cache.seg_head_input);

  Tensor gseg0, gdet0;
  if (c.multitask) {
    Tensor gcat = hvec_module_backward(gm, module_cfg(c, s0 + c.det_decoder[0], s0), net.merge, cache.merge);
    auto parts = ops::split_channels_by(gcat, cache.merge_split);
    gseg0 = std::move(parts[0]);
    gdet0 = std::move(parts[1]);
    if (grad_prox) {
      Tensor gd = ops::activate_backward(*grad_prox, cache.prox, ops::Activation::Sigmoid);
      ops::add_inplace(gdet0, linear_backward(*net.det_head, gd, cache.det_head_input));
    } else {
      // No regression supervision: the head still receives a zero gradient so
      // every parameter has a defined gradient buffer.
      linear_backward(*net.det_head, Tensor(cache.prox.dims()), cache.det_head_input);
    }
  } else {
    gseg0 = hvec_module_backward(gm, module_cfg(c, s0, s0), net.merge, cache.merge);
  }

  std::array<Tensor, 4> genc = decoder_backward(c, net.seg, std::move(gseg0), c.seg_decoder, cache.seg);
  if (c.multitask) {
    auto gd = decoder_backward(c, *net.det, std::move(gdet0), c.det_decoder, cache.det);
    for (int s = 0; s < 4; ++s) ops::add_inplace(genc[s], gd[s]);
  }

  for (int st = 3; st >= 1; --st) {
    const std::size_t cin = st == 3 ? e[3] : e[st - 1];
    Tensor g = hvec_module_backward(genc[st], module_cfg(c, cin, e[st]), net.encoder[st], cache.encoder[st]);
    if (st == 3) g = linear_backward(net.expand, g, cache.expand_input);
    ops::add_inplace(genc[st - 1], ops::max_pool_backward(g, cache.pool_argmax[st - 1], cache.pool_input[st - 1]));
  }
  Tensor g0 = hvec_module_backward(genc[0], module_cfg(c, e[0], e[0]), net.encoder[0], cache.encoder[0]);
  return conv_unit_backward(net.stem, g0, cache.stem, true);
}

}  // namespace hive
