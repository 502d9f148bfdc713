#include "hive/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace hive {

namespace {

struct DisjointSet {
  std::vector<std::uint32_t> parent;
  std::uint32_t make() {
    parent.push_back(static_cast<std::uint32_t>(parent.size()));
    return parent.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;  // smaller provisional label wins
  }
};

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void check_t(double t) {
  if (!(t >= 0.5 && t < 1.0))
    throw std::invalid_argument("overlap threshold must lie in [0.5, 1), got " + std::to_string(t));
}

}  // namespace

Labels connected_components(const Mask& mask, Connectivity conn) {
  const auto [D, H, W] = mask.shape;
  // Already-visited neighbours in scan order.
  std::vector<Coord3> back;
  for (long a = -1; a <= 0; ++a)
    for (long b = -1; b <= 1; ++b)
      for (long c = -1; c <= 1; ++c) {
        if (a == 0 && (b > 0 || (b == 0 && c >= 0))) continue;
        const int manhattan = int(std::abs(a) + std::abs(b) + std::abs(c));
        if (conn == Connectivity::Six && manhattan != 1) continue;
        back.push_back({a, b, c});
      }
  std::vector<std::uint32_t> prov(mask.size(), 0);  // provisional label + 1
  DisjointSet ds;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const std::size_t i = mask.index(d, h, w);
        if (!mask[i]) continue;
        std::uint32_t lab = 0;
        for (const auto& o : back) {
          const long nd = long(d) + o[0], nh = long(h) + o[1], nw = long(w) + o[2];
          if (nd < 0 || nh < 0 || nw < 0 || nh >= long(H) || nw >= long(W)) continue;
          const std::uint32_t q = prov[mask.index(nd, nh, nw)];
          if (!q) continue;
          if (!lab) {
            lab = q;
          } else if (q != lab) {
            ds.unite(lab - 1, q - 1);
          }
        }
        prov[i] = lab ? lab : ds.make() + 1;
      }
  Labels out{LabelVolume(mask.shape, 0), 0};
  std::vector<std::int32_t> final_id(ds.parent.size(), 0);
  for (std::size_t i = 0; i < prov.size(); ++i) {
    if (!prov[i]) continue;
    const std::uint32_t r = ds.find(prov[i] - 1);
    if (!final_id[r]) final_id[r] = ++out.count;
    out.ids[i] = final_id[r];
  }
  return out;
}

Labels relabel(const LabelVolume& ids) {
  Labels out{LabelVolume(ids.shape, 0), 0};
  std::unordered_map<std::int32_t, std::int32_t> map;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t v = ids[i];
    if (v < 0) throw std::invalid_argument("label volume contains negative id " + std::to_string(v));
    if (!v) continue;
    auto [it, fresh] = map.try_emplace(v, out.count + 1);
    if (fresh) ++out.count;
    out.ids[i] = it->second;
  }
  return out;
}

Mask threshold(const Volume<double>& prob, double t) {
  Mask m(prob.shape, 0);
  for (std::size_t i = 0; i < prob.size(); ++i) m[i] = prob[i] >= t ? 1 : 0;
  return m;
}

DscJac dsc_jac(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "dsc_jac");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p == 0 && g == 0) return {1.0, 1.0};
  return {2.0 * double(both) / double(p + g), double(both) / double(p + g - both)};
}

Contingency Contingency::build(const Labels& gt, const Labels& pred) {
  require_same_shape(gt.ids, pred.ids, "instance overlap");
  Contingency c;
  c.gt_size.assign(gt.count + 1, 0);
  c.pred_size.assign(pred.count + 1, 0);
  for (std::size_t i = 0; i < gt.ids.size(); ++i) {
    const std::int32_t g = gt.ids[i], p = pred.ids[i];
    if (g < 0 || g > gt.count || p < 0 || p > pred.count)
      throw std::invalid_argument("label id outside 0..count");
    if (g) ++c.gt_size[g];
    if (p) ++c.pred_size[p];
    if (g && p) ++c.inter[{g, p}];
  }
  return c;
}

std::size_t Contingency::overlap(std::int32_t g, std::int32_t p) const {
  auto it = inter.find({g, p});
  return it == inter.end() ? 0 : it->second;
}

double Contingency::jac(std::int32_t g, std::int32_t p) const {
  const double i = double(overlap(g, p));
  return ratio(i, double(gt_size[g] + pred_size[p]) - i);
}

double aji(const Labels& gt, const Labels& pred) {
  const Contingency c = Contingency::build(gt, pred);
  // Best JAC per GT; iterating the ordered map visits predictions by
  // ascending id, so strict > keeps the lower id on ties.
  std::vector<std::int32_t> best(gt.count + 1, 0);
  std::vector<double> best_jac(gt.count + 1, 0.0);
  for (const auto& [key, n] : c.inter) {
    const double j = c.jac(key.first, key.second);
    if (j > best_jac[key.first]) {
      best_jac[key.first] = j;
      best[key.first] = key.second;
    }
  }
  double num = 0.0, den = 0.0;
  std::vector<bool> used(pred.count + 1, false);
  for (std::int32_t g = 1; g <= gt.count; ++g) {
    const std::int32_t p = best[g];
    if (!p) {
      den += double(c.gt_size[g]);
      continue;
    }
    used[p] = true;
    const double i = double(c.overlap(g, p));
    num += i;
    den += double(c.gt_size[g] + c.pred_size[p]) - i;
  }
  for (std::int32_t p = 1; p <= pred.count; ++p)
    if (!used[p]) den += double(c.pred_size[p]);
  if (den == 0.0) return 1.0;  // both empty
  return num / den;
}

InstanceMatch match_instances(const Contingency& c, double t, bool strict) {
  std::vector<MatchPair> cand;
  for (const auto& [key, n] : c.inter) {
    const double j = c.jac(key.first, key.second);
    if (strict ? j > t : j >= t) cand.push_back({key.first, key.second, j});
  }
  std::sort(cand.begin(), cand.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.jac != b.jac) return a.jac > b.jac;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });
  const std::size_t G = c.gt_size.size() - 1, P = c.pred_size.size() - 1;
  std::vector<bool> gu(G + 1, false), pu(P + 1, false);
  InstanceMatch m;
  for (const auto& mp : cand) {
    if (gu[mp.gt] || pu[mp.pred]) continue;
    gu[mp.gt] = pu[mp.pred] = true;
    m.pairs.push_back(mp);
  }
  std::sort(m.pairs.begin(), m.pairs.end(), [](const MatchPair& a, const MatchPair& b) { return a.gt < b.gt; });
  for (std::size_t g = 1; g <= G; ++g)
    if (!gu[g]) m.fn_gt.push_back(std::int32_t(g));
  for (std::size_t p = 1; p <= P; ++p)
    if (!pu[p]) m.fp_pred.push_back(std::int32_t(p));
  return m;
}

namespace {
double detection_quality(const InstanceMatch& m) {
  return ratio(double(m.tp()), double(m.tp()) + 0.5 * double(m.fp()) + 0.5 * double(m.fn()));
}
}  // namespace

PqResult pq(const Labels& gt, const Labels& pred) {
  PqResult r;
  r.match = match_instances(Contingency::build(gt, pred), 0.5, /*strict=*/true);
  if (gt.count == 0 && pred.count == 0) {
    r.pq = r.sq = r.dq = 1.0;
    return r;
  }
  double s = 0.0;
  for (const auto& p : r.match.pairs) s += p.jac;
  r.sq = ratio(s, double(r.match.tp()));
  r.dq = detection_quality(r.match);
  r.pq = r.sq * r.dq;
  return r;
}

F1Result f1_at(const Contingency& c, double t) {
  check_t(t);
  F1Result r;
  r.match = match_instances(c, t, /*strict=*/false);
  const double tp = double(r.match.tp()), fp = double(r.match.fp()), fn = double(r.match.fn());
  if (tp + fp + fn == 0.0) {
    r.f1 = r.sen = r.spe = 1.0;
    return r;
  }
  r.f1 = detection_quality(r.match);
  r.sen = ratio(tp, tp + fn);
  r.spe = ratio(tp, tp + fp);
  return r;
}

F1Result f1_at(const Labels& gt, const Labels& pred, double t) {
  return f1_at(Contingency::build(gt, pred), t);
}

double Box::volume() const {
  double v = 1.0;
  for (int a = 0; a < 3; ++a) v *= double(std::max(0L, hi[a] - lo[a] + 1));
  return v;
}

std::vector<Box> bounding_boxes(const Labels& l) {
  std::vector<Box> b(l.count + 1);
  std::vector<bool> seen(l.count + 1, false);
  const auto [D, H, W] = l.ids.shape;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const std::int32_t id = l.ids(d, h, w);
        if (!id) continue;
        const Coord3 p{long(d), long(h), long(w)};
        if (!seen[id]) {
          seen[id] = true;
          b[id].lo = b[id].hi = p;
          continue;
        }
        for (int a = 0; a < 3; ++a) {
          b[id].lo[a] = std::min(b[id].lo[a], p[a]);
          b[id].hi[a] = std::max(b[id].hi[a], p[a]);
        }
      }
  return b;
}

double box_iou(const Box& a, const Box& b) {
  Box i;
  for (int k = 0; k < 3; ++k) {
    i.lo[k] = std::max(a.lo[k], b.lo[k]);
    i.hi[k] = std::min(a.hi[k], b.hi[k]);
  }
  const double inter = i.volume();
  return ratio(inter, a.volume() + b.volume() - inter);
}

std::vector<double> instance_scores(const Labels& pred, const Volume<double>& prob) {
  require_same_shape(pred.ids, prob, "instance_scores");
  std::vector<double> sum(pred.count + 1, 0.0), n(pred.count + 1, 0.0);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const std::int32_t id = pred.ids[i];
    if (!id) continue;
    sum[id] += prob[i];
    n[id] += 1.0;
  }
  std::vector<double> s(pred.count, 0.0);
  for (std::int32_t k = 1; k <= pred.count; ++k) s[k - 1] = ratio(sum[k], n[k]);
  return s;
}

double ap_bbox(const Labels& gt, const Labels& pred, const std::vector<double>& scores, double iou_t) {
  require_same_shape(gt.ids, pred.ids, "ap_bbox");
  if (scores.size() != std::size_t(pred.count))
    throw std::invalid_argument("ap_bbox: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(pred.count) + " predictions");
  if (gt.count == 0) return pred.count == 0 ? 1.0 : 0.0;
  const auto gb = bounding_boxes(gt), pb = bounding_boxes(pred);
  std::vector<std::int32_t> order(pred.count);
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int32_t a, std::int32_t b) { return scores[a - 1] > scores[b - 1]; });
  std::vector<bool> taken(gt.count + 1, false);
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::int32_t p = order[k];
    std::int32_t best = 0;
    double best_iou = -1.0;
    for (std::int32_t g = 1; g <= gt.count; ++g) {
      if (taken[g]) continue;
      const double iou = box_iou(pb[p], gb[g]);
      if (iou >= iou_t && iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best) {
      taken[best] = true;
      ++tp;
    }
    prec.push_back(double(tp) / double(k + 1));
    rec.push_back(double(tp) / double(gt.count));
  }
  // Precision envelope from the right, then integrate over recall steps.
  for (std::size_t k = prec.size(); k-- > 1;) prec[k - 1] = std::max(prec[k - 1], prec[k]);
  double ap = 0.0, r_prev = 0.0;
  for (std::size_t k = 0; k < prec.size(); ++k) {
    ap += (rec[k] - r_prev) * prec[k];
    r_prev = rec[k];
  }
  return ap;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int p = 50; p <= 85; p += 5) t.push_back(p / 100.0);
  return t;
}

std::vector<SweepPoint> sweep(const Labels& gt, const Labels& pred, const std::vector<double>& scores,
                              const std::vector<double>& thresholds) {
  const Contingency c = Contingency::build(gt, pred);
  std::vector<SweepPoint> out;
  for (double t : thresholds) out.push_back({t, f1_at(c, t).f1, ap_bbox(gt, pred, scores, t)});
  return out;
}

double MetricReport::get(const std::string& key) const {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  throw std::out_of_range("no metric named " + key);
}

void MetricReport::write_table(std::ostream& out) const {
  std::size_t width = 6;
  for (const auto& kv : values) width = std::max(width, kv.first.size());
  out << std::left << std::setw(int(width)) << "metric" << "  value\n";
  out << std::string(width, '-') << "  " << std::string(10, '-') << '\n';
  for (const auto& [k, v] : values)
    out << std::left << std::setw(int(width)) << k << "  " << std::fixed << std::setprecision(6) << v << '\n';
  out << "(spe is reported as positive predictive value: instance-level true negatives do not exist)\n";
  out.unsetf(std::ios::floatfield);
}

void MetricReport::write_kv(std::ostream& out) const {
  out << std::setprecision(17);
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

MetricReport evaluate(const Volume<double>& prob, const Labels& gt, Connectivity conn, bool with_sweep) {
  require_same_shape(prob, gt.ids, "evaluate");
  const Mask pm = threshold(prob, 0.5);
  Mask gm(gt.ids.shape, 0);
  for (std::size_t i = 0; i < gm.size(); ++i) gm[i] = gt.ids[i] != 0;
  const Labels pred = connected_components(pm, conn);
  MetricReport r;
  const DscJac dj = dsc_jac(pm, gm);
  r.add("dsc", dj.dsc);
  r.add("jac", dj.jac);
  r.add("aji", aji(gt, pred));
  const PqResult q = pq(gt, pred);
  r.add("pq", q.pq);
  r.add("sq", q.sq);
  r.add("dq", q.dq);
  const Contingency c = Contingency::build(gt, pred);
  const F1Result f = f1_at(c, 0.5);
  r.add("f1_50", f.f1);
  r.add("sen_50", f.sen);
  r.add("spe_50", f.spe);
  const auto s = instance_scores(pred, prob);
  r.add("ap_50", ap_bbox(gt, pred, s, 0.50));
  r.add("ap_75", ap_bbox(gt, pred, s, 0.75));
  r.add("gt_instances", gt.count);
  r.add("pred_instances", pred.count);
  if (with_sweep) {
    for (const auto& p : sweep(gt, pred, s)) {
      const std::string t = std::to_string(int(std::lround(p.t * 100)));
      r.add("sweep_f1_" + t, p.f1);
      r.add("sweep_ap_" + t, p.ap);
    }
  }
  return r;
}

}  // namespace hive
