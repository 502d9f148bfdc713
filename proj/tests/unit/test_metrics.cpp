#include <random>
#include <sstream>

#include "doctest.h"
#include "hive/metrics.hpp"
#include "metric_oracles.hpp"

using namespace hive;

namespace {

Labels labels_from(const Shape3& s, const std::vector<std::pair<std::size_t, std::int32_t>>& voxels) {
  LabelVolume v(s, 0);
  for (auto [i, id] : voxels) v[i] = id;
  return relabel(v);
}

// GT: ids over a 1x1xN line. Each list entry is a run [begin, end) -> id.
Labels line(std::size_t n, const std::vector<std::array<std::size_t, 3>>& runs) {
  LabelVolume v({1, 1, n}, 0);
  for (auto [b, e, id] : runs)
    for (std::size_t i = b; i < e; ++i) v[i] = std::int32_t(id);
  return relabel(v);
}

}  // namespace

TEST_CASE("connected components") {
  Mask m({4, 4, 8}, 0);
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 2; ++w) {
        m(d, h, w) = 1;
        m(d + 2, h + 2, w + 5) = 1;
      }
  CHECK(connected_components(m).count == 2);

  Mask diag({2, 2, 2}, 0);
  diag(0, 0, 0) = diag(1, 1, 1) = 1;
  CHECK(connected_components(diag, Connectivity::TwentySix).count == 1);
  CHECK(connected_components(diag, Connectivity::Six).count == 2);

  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 g(seed);
    Mask r({16, 16, 16}, 0);
    const double p = 0.2 + 0.3 * (seed % 3);
    for (auto& v : r.data) v = (g() % 1000) < p * 1000 ? 1 : 0;
    for (int conn : {6, 26}) {
      auto a = connected_components(r, conn == 6 ? Connectivity::Six : Connectivity::TwentySix);
      auto b = oracle::flood_fill(r, conn);
      CHECK(a.count == b.count);
      CHECK(a.ids.data == b.ids.data);
    }
  }
}

TEST_CASE("relabel compacts ids") {
  LabelVolume v({1, 1, 5}, 0);
  v[0] = 7;
  v[2] = 3;
  v[4] = 7;
  auto l = relabel(v);
  CHECK(l.count == 2);
  CHECK(l.ids.data == std::vector<std::int32_t>{1, 0, 2, 0, 1});
  v[1] = -1;
  CHECK_THROWS_AS(relabel(v), std::invalid_argument);
}

TEST_CASE("dsc and jac") {
  Mask p({1, 1, 20}, 0), y({1, 1, 20}, 0);
  CHECK(dsc_jac(p, y).dsc == 1.0);
  for (int i = 0; i < 10; ++i) y[i] = 1;
  CHECK(dsc_jac(p, y).jac == 0.0);
  CHECK(dsc_jac(y, y).dsc == 1.0);
  for (int i = 4; i < 12; ++i) p[i] = 1;  // |P| 8, overlap 6
  auto r = dsc_jac(p, y);
  CHECK(r.dsc == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.jac == doctest::Approx(0.5).epsilon(1e-15));
  Mask far({1, 1, 20}, 0);
  far[19] = 1;
  CHECK(dsc_jac(far, y).dsc == 0.0);
  CHECK_THROWS_AS(dsc_jac(Mask({1, 1, 3}), y), std::invalid_argument);
}

TEST_CASE("aji anchors") {
  auto gt = line(20, {{0, 10, 1}});
  CHECK(aji(gt, gt) == 1.0);
  auto pred = line(20, {{4, 12, 1}});
  CHECK(aji(gt, pred) == doctest::Approx(0.5).epsilon(1e-15));
  auto pred2 = line(20, {{4, 12, 1}, {15, 18, 2}});
  CHECK(aji(gt, pred2) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(aji(gt, line(20, {})) == 0.0);
}

TEST_CASE("pq anchors") {
  auto gt = line(30, {{0, 10, 1}});
  auto perfect = pq(gt, gt);
  CHECK(perfect.pq == 1.0);
  CHECK(perfect.sq == 1.0);
  CHECK(perfect.dq == 1.0);
  auto tp_fp = pq(gt, line(30, {{0, 8, 1}, {20, 25, 2}}));  // JAC 0.8 + FP
  CHECK(tp_fp.sq == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(tp_fp.dq == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(tp_fp.pq == doctest::Approx(0.8 * 2.0 / 3.0).epsilon(1e-15));
  CHECK(tp_fp.pq == doctest::Approx(0.5333).epsilon(1e-4));
  auto none = pq(gt, line(30, {}));
  CHECK(none.pq == 0.0);
  CHECK(none.sq == 0.0);
  CHECK(none.dq == 0.0);
}

TEST_CASE("f1 anchors") {
  // Nine exact matches, one miss, one spurious.
  std::vector<std::array<std::size_t, 3>> g, p;
  for (std::size_t i = 0; i < 10; ++i) g.push_back({i * 4, i * 4 + 3, i + 1});
  for (std::size_t i = 0; i < 9; ++i) p.push_back({i * 4, i * 4 + 3, i + 1});
  p.push_back({41, 43, 10});
  auto gt = line(44, g), pr = line(44, p);
  auto r = f1_at(gt, pr, 0.5);
  CHECK(r.match.tp() == 9);
  CHECK(r.match.fp() == 1);
  CHECK(r.match.fn() == 1);
  CHECK(r.f1 == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.sen == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.spe == doctest::Approx(0.9).epsilon(1e-15));
  auto perfect = f1_at(gt, gt, 0.75);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.sen == 1.0);
  CHECK(perfect.spe == 1.0);
  CHECK_THROWS_AS(f1_at(gt, gt, 0.4), std::invalid_argument);
  CHECK_THROWS_AS(f1_at(gt, gt, 1.0), std::invalid_argument);
}

TEST_CASE("ap anchors") {
  auto gt = line(40, {{0, 10, 1}, {20, 30, 2}});
  CHECK(ap_bbox(gt, gt, {0.3, 0.9}, 0.5) == 1.0);
  CHECK(ap_bbox(gt, gt, {0.3, 0.9}, 0.95) == 1.0);
  // One GT box 10 long, prediction 7 long inside it: IoU 0.7.
  auto one = line(40, {{0, 10, 1}});
  auto p = line(40, {{0, 7, 1}});
  CHECK(box_iou(bounding_boxes(one)[1], bounding_boxes(p)[1]) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(ap_bbox(one, p, {0.5}, 0.65) == 1.0);
  CHECK(ap_bbox(one, p, {0.5}, 0.75) == 0.0);
  CHECK_THROWS_AS(ap_bbox(one, p, {}, 0.5), std::invalid_argument);
  // A confident false positive ahead of the hit halves precision at recall 1.
  auto two = line(40, {{0, 7, 1}, {30, 35, 2}});
  CHECK(ap_bbox(one, two, {0.2, 0.9}, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("metrics equal voxel-set oracles on random scenes") {
  for (int seed = 0; seed < 120; ++seed) {
    std::mt19937_64 g(seed);
    auto [gt, pred] = oracle::random_scene(g);
    std::vector<double> scores(pred.count);
    for (auto& s : scores) s = double(g() % 1000) / 1000.0;
    INFO("seed " << seed);
    CHECK(aji(gt, pred) == doctest::Approx(oracle::aji(gt, pred)).epsilon(1e-9));
    auto a = pq(gt, pred);
    auto b = oracle::pq(gt, pred);
    CHECK(a.pq == doctest::Approx(b.pq).epsilon(1e-9));
    CHECK(a.sq == doctest::Approx(b.sq).epsilon(1e-9));
    CHECK(a.dq == doctest::Approx(b.dq).epsilon(1e-9));
    CHECK(a.pq <= a.sq + 1e-15);
    CHECK(a.pq <= a.dq + 1e-15);
    double prev = 2.0;
    for (double t : default_thresholds()) {
      const double f = f1_at(gt, pred, t).f1;
      CHECK(f == doctest::Approx(oracle::f1(gt, pred, t)).epsilon(1e-9));
      CHECK(f <= prev);
      prev = f;
      CHECK(ap_bbox(gt, pred, scores, t) == doctest::Approx(oracle::ap(gt, pred, scores, t)).epsilon(1e-9));
    }
    Mask pm(gt.ids.shape), gm(gt.ids.shape);
    std::size_t np = 0, ng = 0, both = 0;
    for (std::size_t i = 0; i < pm.size(); ++i) {
      pm[i] = pred.ids[i] != 0;
      gm[i] = gt.ids[i] != 0;
      np += pm[i];
      ng += gm[i];
      both += pm[i] && gm[i];
    }
    CHECK(dsc_jac(pm, gm).jac == doctest::Approx(double(both) / double(np + ng - both)).epsilon(1e-12));
  }
}

TEST_CASE("instance metrics ignore id permutations") {
  std::mt19937_64 g(77);
  auto [gt, pred] = oracle::random_scene(g);
  Labels perm = pred;
  for (auto& v : perm.ids.data)
    if (v) v = pred.count + 1 - v;
  CHECK(aji(gt, perm) == doctest::Approx(aji(gt, pred)).epsilon(1e-14));
  CHECK(pq(gt, perm).pq == doctest::Approx(pq(gt, pred).pq).epsilon(1e-14));
  CHECK(f1_at(gt, perm, 0.6).f1 == f1_at(gt, pred, 0.6).f1);
}

TEST_CASE("evaluate report") {
  std::mt19937_64 g(3);
  auto [gt, pred] = oracle::random_scene(g);
  Volume<double> prob(gt.ids.shape, 0.1);
  for (std::size_t i = 0; i < prob.size(); ++i)
    if (gt.ids[i]) prob[i] = 0.9;
  auto r = evaluate(prob, gt, Connectivity::TwentySix, true);
  CHECK(r.get("dsc") == 1.0);
  CHECK(r.get("sweep_f1_85") <= r.get("sweep_f1_50"));
  std::ostringstream kv, table;
  r.write_kv(kv);
  r.write_table(table);
  CHECK(kv.str().find("aji=") != std::string::npos);
  CHECK(table.str().find("positive predictive value") != std::string::npos);
  CHECK_THROWS_AS(r.get("nope"), std::out_of_range);
}
