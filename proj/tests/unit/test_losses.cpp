#include <random>

#include "doctest.h"
#include "hive/losses.hpp"
#include "hive/ops.hpp"
#include "oracles.hpp"

using namespace hive;

TEST_CASE("jaccard loss anchors") {
  Tensor y({1, 1, 1, 10, 10}, 1.0);
  CHECK(jaccard_loss(y, y).value == doctest::Approx(1.0 - 100.0 / (100.0 + 1e-5)).epsilon(1e-12));
  CHECK(jaccard_loss(y, y).value < 1e-6);

  Tensor y4({1, 1, 1, 1, 8});
  for (int i = 0; i < 4; ++i) y4[i] = 1.0;
  CHECK(jaccard_loss(Tensor(y4.dims()), y4).value == 1.0);
  Tensor half(y4.dims(), 0.5);
  CHECK(jaccard_loss(half, y4).value == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("jaccard loss rejects soft targets and shape mismatch") {
  Tensor p({1, 1, 1, 1, 2}, 0.5);
  Tensor soft({1, 1, 1, 1, 2}, 0.3);
  CHECK_THROWS_AS(jaccard_loss(p, soft), std::invalid_argument);
  CHECK_THROWS_AS(jaccard_loss(p, Tensor({1, 1, 1, 2, 1})), ShapeError);
  Tensor bad({1, 1, 1, 1, 2}, 1.5);
  CHECK_THROWS_AS(jaccard_loss(bad, Tensor({1, 1, 1, 1, 2})), std::invalid_argument);
}

TEST_CASE("jaccard loss stays in [0, 1] and its gradient matches differences") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor p({1, 1, 4, 4, 4}), y(p.dims());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = u(g);
      y[i] = u(g) < 0.4 ? 1.0 : 0.0;
    }
    auto l = jaccard_loss(p, y);
    CHECK(l.value >= 0.0);
    CHECK(l.value <= 1.0);
    ops::GradCheckOptions opt;
    opt.h = 1e-6;
    opt.tol = 1e-6;
    opt.kink_retry = false;
    auto rep = ops::grad_check([&](const Tensor& q) { return jaccard_loss(q, y).value; }, p, l.grad.data(), opt);
    CHECK(rep.max_rel_error < 1e-6);
  }
}

TEST_CASE("regression loss anchors and gradient") {
  Tensor a({1, 1, 2, 2, 2}, 0.3);
  CHECK(regression_loss(a, a).value == 0.0);
  CHECK(regression_loss(Tensor(a.dims(), 1.0), Tensor(a.dims())).value == 1.0);
  Tensor d({1, 1, 1, 1, 2}, std::vector<double>{0.2, 0.8});
  Tensor t({1, 1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  CHECK(regression_loss(d, t).value == doctest::Approx(0.04).epsilon(1e-12));
  std::mt19937_64 g(5);
  Tensor x = oracle::random_tensor({1, 1, 2, 3, 3}, g), tt = oracle::random_tensor(x.dims(), g);
  auto r = regression_loss(x, tt);
  CHECK(ops::grad_check([&](const Tensor& q) { return regression_loss(q, tt).value; }, x, r.grad.data())
            .max_rel_error < 1e-8);
}

TEST_CASE("total loss") {
  LossConfig one{1.0, 1e-5};
  CHECK(total_loss(0.3, 5.0, one) == 0.3);
  LossConfig c{0.7, 1e-5};
  CHECK(total_loss(0.2, 0.1, c) == doctest::Approx(0.17).epsilon(1e-14));
  LossConfig h{0.5, 1e-5};
  CHECK(total_loss(0.4, 0.4, h) == doctest::Approx(0.4));
  for (double lam : {0.1, 0.5, 0.9}) {
    LossConfig k{lam, 1e-5};
    CHECK(total_loss(0.3, 0.2, k) <= total_loss(0.31, 0.2, k));
    CHECK(total_loss(0.3, 0.2, k) <= total_loss(0.3, 0.21, k));
  }
  CHECK_THROWS(LossConfig{1.5, 1e-5}.validate());
  CHECK_THROWS(LossConfig{0.5, 0.0}.validate());
}
