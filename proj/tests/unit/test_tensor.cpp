#include <limits>

#include "doctest.h"
#include "hive/tensor.hpp"

using hive::Tensor;

TEST_CASE("tensor length matches dims and grad buffer is optional") {
  Tensor t({2, 3, 4, 5, 6}, 1.5);
  CHECK(t.size() == 720);
  CHECK_FALSE(t.has_grad());
  t.enable_grad();
  CHECK(t.has_grad());
  CHECK(t.grad().size() == t.size());
  t.drop_grad();
  CHECK_FALSE(t.has_grad());
  t.zero_grad();
  CHECK(t.has_grad());
}

TEST_CASE("row-major layout with W innermost") {
  Tensor t({2, 2, 2, 2, 3});
  CHECK(t.index(0, 0, 0, 0, 1) == 1);
  CHECK(t.index(0, 0, 0, 1, 0) == 3);
  CHECK(t.index(0, 0, 1, 0, 0) == 6);
  CHECK(t.index(0, 1, 0, 0, 0) == 12);
  CHECK(t.index(1, 0, 0, 0, 0) == 24);
  CHECK(t.channel(1, 1) == t.data().data() + 36);
}

TEST_CASE("data length is validated") {
  CHECK_THROWS_AS(Tensor({1, 1, 1, 2, 2}, std::vector<double>(3)), hive::ShapeError);
}

TEST_CASE("bit_equal and max_abs_diff") {
  Tensor a({1, 1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  Tensor b = a;
  CHECK(hive::bit_equal(a, b));
  b[2] = 3.5;
  CHECK_FALSE(hive::bit_equal(a, b));
  CHECK(hive::max_abs_diff(a, b) == 0.5);
  CHECK_THROWS_AS(hive::max_abs_diff(a, Tensor({1, 1, 1, 3, 1})), hive::ShapeError);
}

TEST_CASE("finite check") {
  Tensor t({1, 1, 1, 1, 2});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}
