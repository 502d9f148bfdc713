#include <random>

#include "doctest.h"
#include "hive/hvec.hpp"
#include "oracles.hpp"

using namespace hive;
using namespace hive::ops;

namespace {

void randomize(const std::function<void(const ParamVisitor&)>& visit, std::mt19937_64& g) {
  std::normal_distribution<double> nd(0.0, 0.4);
  visit([&](const std::string& name, Tensor& t) {
    bool scale = name.size() >= 6 && name.compare(name.size() - 6, 6, ".scale") == 0;
    for (auto& v : t.data()) v = (scale ? 1.0 : 0.0) + nd(g);
  });
}

void fill_all(const std::function<void(const ParamVisitor&)>& visit, double w) {
  visit([&](const std::string&, Tensor& t) { t.fill(w); });
}

std::size_t enumerate(const std::function<void(const ParamVisitor&)>& visit) {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor& t) { n += t.size(); });
  return n;
}

// Straight-line evaluation of one block, written out branch by branch.
Tensor block_reference(const Tensor& x, const HvecConfig& cfg, const HvecParams& p) {
  const std::size_t q = cfg.in_channels / 4, r = cfg.out_channels / 4;
  auto unit = [&](const ConvUnit& u, const Tensor& in) {
    Tensor z = oracle::conv_brute(in, u.conv, same_padding(u.conv));
    if (cfg.normalize) z = oracle::norm_brute(z, u.norm);
    return oracle::relu_brute(z);
  };
  Tensor b[4];
  for (int i = 0; i < 4; ++i) {
    Tensor in = oracle::channels(x, i * q, q);
    if (cfg.inter_branch && i > 0) {
      Tensor prev = b[i - 1];
      if (q != r) prev = oracle::conv_brute(prev, *p.project[i - 1], {0, 0, 0});
      in = oracle::plus(in, prev);
    }
    if (i == 3 && cfg.focal_branch) {
      b[i] = oracle::resize_brute(unit(p.branch[i], oracle::pool_brute(in, cfg.focal_factor)), in.dims());
    } else {
      b[i] = unit(p.branch[i], in);
    }
  }
  Tensor cat({x.n(), cfg.out_channels, x.d(), x.h(), x.w()});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (int i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < r; ++c)
        for (std::size_t s = 0; s < x.spatial(); ++s) cat.channel(n, i * r + c)[s] = b[i].channel(n, c)[s];
  return unit(p.fuse, cat);
}

HvecConfig config(std::size_t cin, std::size_t cout, char variant) {
  HvecConfig c;
  c.in_channels = cin;
  c.out_channels = cout;
  return apply_variant(c, variant);
}

}  // namespace

TEST_CASE("variant letters map to flag pairs") {
  HvecConfig c;
  CHECK(variant_of(apply_variant(c, 'A')) == 'A');
  CHECK_FALSE(apply_variant(c, 'A').inter_branch);
  CHECK_FALSE(apply_variant(c, 'A').focal_branch);
  CHECK(apply_variant(c, 'B').focal_branch);
  CHECK_FALSE(apply_variant(c, 'B').inter_branch);
  CHECK(apply_variant(c, 'C').inter_branch);
  CHECK_FALSE(apply_variant(c, 'C').focal_branch);
  CHECK(variant_of(apply_variant(c, 'D')) == 'D');
  CHECK_THROWS(apply_variant(c, 'E'));
}

TEST_CASE("channel counts must be multiples of four") {
  CHECK_THROWS(config(6, 8, 'D').validate());
  CHECK_THROWS(config(8, 10, 'D').validate());
  CHECK_THROWS(HvecParams::zeros(config(4, 0, 'D')));
}

TEST_CASE("block matches the straight-line reference for every variant") {
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    for (char v : {'A', 'B', 'C', 'D'})
      for (auto [cin, cout] : {std::pair<std::size_t, std::size_t>{8, 8}, {8, 12}, {12, 4}}) {
        std::mt19937_64 g(seed * 31 + v);
        HvecConfig cfg = config(cin, cout, v);
        HvecParams p = HvecParams::zeros(cfg);
        randomize([&](const ParamVisitor& f) { p.visit("b", f); }, g);
        for (Dims xd : {Dims{1, cin, 3, 4, 6}, Dims{1, cin, 2, 5, 3}}) {
          Tensor x = oracle::random_tensor(xd, g);
          Tensor y = hvec_forward(x, cfg, p);
          CHECK(y.dims() == Dims{1, cout, xd[2], xd[3], xd[4]});
          CHECK(max_abs_diff(y, block_reference(x, cfg, p)) < 1e-10);
        }
      }
}

TEST_CASE("zero input gives shift constants through the fusion norm") {
  std::mt19937_64 g(4);
  HvecConfig cfg = config(8, 8, 'D');
  HvecParams p = HvecParams::zeros(cfg);
  randomize([&](const ParamVisitor& f) { p.visit("b", f); }, g);
  for (auto& b : p.branch) {
    b.conv.bias.fill(0.0);
    b.norm.shift.fill(0.0);
  }
  Tensor x({1, 8, 2, 4, 4});
  Tensor y = hvec_forward(x, cfg, p);
  CHECK(max_abs_diff(y, block_reference(x, cfg, p)) < 1e-12);
  // Branch outputs vanish; the fusion sees its own bias only, a constant
  // channel that normalizes to zero, so the output is relu(shift).
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t i = 0; i < y.spatial(); ++i)
      CHECK(y.channel(0, c)[i] == doctest::Approx(std::max(p.fuse.norm.shift[c], 0.0)));
}

TEST_CASE("variant A is four independent oriented convolutions") {
  std::mt19937_64 g(12);
  HvecConfig cfg = config(8, 8, 'A');
  cfg.normalize = false;
  HvecParams p = HvecParams::zeros(cfg);
  randomize([&](const ParamVisitor& f) { p.visit("b", f); }, g);
  // Identity fusion exposes the concatenated branch outputs directly.
  p.fuse.conv.weight.fill(0.0);
  p.fuse.conv.bias.fill(0.0);
  for (std::size_t c = 0; c < 8; ++c) p.fuse.conv.weight.at(c, c, 0, 0, 0) = 1.0;
  Tensor x = oracle::random_tensor({1, 8, 3, 4, 4}, g);
  Tensor y = hvec_forward(x, cfg, p);
  const Orientation orient[4] = {Orientation::XY, Orientation::XZ, Orientation::YZ, Orientation::XY};
  for (int i = 0; i < 4; ++i) {
    CHECK(p.branch[i].conv.orientation == orient[i]);
    Tensor ref = oracle::relu_brute(
        oracle::conv_brute(oracle::channels(x, 2 * i, 2), p.branch[i].conv, same_padding(p.branch[i].conv)));
    CHECK(max_abs_diff(oracle::channels(y, 2 * i, 2), ref) < 1e-12);
  }
}

TEST_CASE("view decomposition reduces to a single in-plane conv on group one") {
  std::mt19937_64 g(13);
  HvecConfig cfg = config(8, 8, 'D');
  cfg.normalize = false;
  HvecParams p = HvecParams::zeros(cfg);
  randomize([&](const ParamVisitor& f) { p.visit("b", f); }, g);
  for (int i = 1; i < 4; ++i) {
    p.branch[i].conv.weight.fill(0.0);
    p.branch[i].conv.bias.fill(0.0);
  }
  p.fuse.conv.weight.fill(0.0);
  p.fuse.conv.bias.fill(0.0);
  for (std::size_t c = 0; c < 2; ++c) p.fuse.conv.weight.at(c, c, 0, 0, 0) = 1.0;
  Tensor x = oracle::random_tensor({1, 8, 3, 4, 4}, g);
  Tensor y = hvec_forward(x, cfg, p);
  Tensor ref = oracle::relu_brute(
      oracle::conv_brute(oracle::channels(x, 0, 2), p.branch[0].conv, {0, 1, 1}));
  CHECK(max_abs_diff(oracle::channels(y, 0, 2), ref) < 1e-12);
  CHECK(oracle::channels(y, 2, 6).sum() == 0.0);
}

TEST_CASE("shape preservation for every flag combination") {
  for (char v : {'A', 'B', 'C', 'D'}) {
    HvecConfig cfg = config(64, 64, v);
    HvecParams p = HvecParams::zeros(cfg);
    Tensor y = hvec_forward(Tensor({1, 64, 8, 16, 16}), cfg, p);
    CHECK(y.dims() == Dims{1, 64, 8, 16, 16});
  }
  HvecConfig m = config(128, 128, 'D');
  auto mp = HvecModuleParams::zeros(m);
  CHECK(hvec_module_forward(Tensor({1, 128, 8, 16, 16}), m, mp).dims() == Dims{1, 128, 8, 16, 16});
}

TEST_CASE("closed-form parameter count equals enumeration") {
  HvecConfig c4 = config(4, 4, 'D');
  HvecParams p4 = HvecParams::zeros(c4);
  // 4 branches of (1,1,k) with 9 weights + 1 bias, 2 norm params each;
  // fusion 4*4 + 4 and its 8 norm params.
  CHECK(hvec_param_count(c4) == 4 * (9 + 1 + 2) + (16 + 4) + 8);
  CHECK(enumerate([&](const ParamVisitor& f) { p4.visit("b", f); }) == hvec_param_count(c4));
  for (auto [cin, cout] : {std::pair<std::size_t, std::size_t>{8, 8}, {8, 16}, {32, 12}, {64, 64}}) {
    for (char v : {'A', 'D'}) {
      HvecConfig c = config(cin, cout, v);
      HvecParams p = HvecParams::zeros(c);
      CHECK(p.param_count() == hvec_param_count(c));
      CHECK(enumerate([&](const ParamVisitor& f) { p.visit("b", f); }) == hvec_param_count(c));
      auto m = HvecModuleParams::zeros(c);
      CHECK(enumerate([&](const ParamVisitor& f) { m.visit("m", f); }) == hvec_module_param_count(c));
    }
    // Flags change wiring only, never kernel shapes.
    CHECK(hvec_param_count(config(cin, cout, 'A')) == hvec_param_count(config(cin, cout, 'D')));
  }
  auto branch_weights = [](std::size_t c) {
    HvecParams p = HvecParams::zeros(config(c, c, 'D'));
    std::size_t n = 0;
    for (auto& b : p.branch) n += b.conv.weight.size();
    return n;
  };
  CHECK(branch_weights(16) == 4 * branch_weights(8));
}

TEST_CASE("module with zero weights is the identity") {
  HvecConfig cfg = config(8, 8, 'D');
  auto p = HvecModuleParams::zeros(cfg);
  std::mt19937_64 g(3);
  Tensor x = oracle::random_tensor({1, 8, 2, 4, 4}, g);
  CHECK(bit_equal(hvec_module_forward(x, cfg, p), x));
}

TEST_CASE("module gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (char v : {'A', 'B', 'C', 'D'}) {
      std::mt19937_64 g(700 + seed * 7 + v);
      HvecConfig cfg = config(8, 12, v);
      auto p = HvecModuleParams::zeros(cfg);
      randomize([&](const ParamVisitor& f) { p.visit("m", f); }, g);
      Tensor x = oracle::random_tensor({1, 8, 2, 4, 4}, g);
      Tensor w = oracle::random_tensor({1, 12, 2, 4, 4}, g);
      HvecModuleCache cache;
      hvec_module_forward(x, cfg, p, &cache);
      Tensor gx = hvec_module_backward(w, cfg, p, cache);
      auto rx = grad_check([&](const Tensor& t) { return weighted_sum(hvec_module_forward(t, cfg, p), w); },
                           x, gx.data());
      CHECK(rx.max_rel_error < 1e-4);
      // Parameters: check every array against differences of the same loss.
      std::vector<std::pair<std::string, Tensor*>> params;
      p.visit("m", [&](const std::string& n, Tensor& t) { params.emplace_back(n, &t); });
      double worst = 0.0;
      std::string worst_name;
      for (auto& [name, t] : params) {
        if (!t->has_grad()) t->zero_grad();
        std::vector<double> analytic(t->grad().begin(), t->grad().end());
        Tensor saved = *t;
        GradCheckOptions opt;
        opt.max_entries = 12;
        auto rep = grad_check(
            [&](const Tensor& probe) {
              *t = probe;
              double l = weighted_sum(hvec_module_forward(x, cfg, p), w);
              *t = saved;
              return l;
            },
            saved, analytic, opt);
        if (rep.max_rel_error > worst) {
          worst = rep.max_rel_error;
          worst_name = name;
        }
      }
      INFO(worst_name);
      INFO(v);
      INFO(seed);
      CHECK(worst < 1e-4);
    }
}

TEST_CASE("inter-branch connections enlarge the impulse response") {
  auto support = [](char v) {
    HvecConfig cfg = config(8, 8, v);
    cfg.normalize = false;
    auto p = HvecModuleParams::zeros(cfg);
    fill_all([&](const ParamVisitor& f) { p.visit("m", f); }, 1.0);
    p.first.fuse.conv.bias.fill(0.0);
    p.second.fuse.conv.bias.fill(0.0);
    for (auto* b : {&p.first, &p.second})
      for (auto& u : b->branch) u.conv.bias.fill(0.0);
    Tensor x({1, 8, 15, 24, 24});
    for (std::size_t c = 0; c < 8; ++c) x.at(0, c, 7, 12, 12) = 1.0;
    Tensor y = hvec_module_forward(x, cfg, p);
    std::array<long, 3> lo{1 << 20, 1 << 20, 1 << 20}, hi{-1, -1, -1};
    for (std::size_t d = 0; d < y.d(); ++d)
      for (std::size_t h = 0; h < y.h(); ++h)
        for (std::size_t w = 0; w < y.w(); ++w)
          for (std::size_t c = 0; c < y.c(); ++c)
            if (y.at(0, c, d, h, w) != 0.0) {
              long idx[3] = {long(d), long(h), long(w)};
              for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], idx[a]);
                hi[a] = std::max(hi[a], idx[a]);
              }
            }
    return std::pair{lo, hi};
  };
  auto [lb, hb] = support('B');
  auto [ld, hd] = support('D');
  for (int a = 0; a < 3; ++a) {
    CHECK(ld[a] < lb[a]);
    CHECK(hd[a] > hb[a]);
  }
}
