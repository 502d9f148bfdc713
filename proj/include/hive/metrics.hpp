#pragma once

// Segmentation quality: voxel-level DSC/JAC, instance-level AJI and PQ,
// detection F1 at overlap thresholds and box AP.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hive/volume.hpp"

namespace hive {

using Mask = Volume<std::uint8_t>;
using LabelVolume = Volume<std::int32_t>;

enum class Connectivity { Six = 6, TwentySix = 26 };

struct Labels {
  LabelVolume ids;  // 0 background, 1..count instances
  std::int32_t count = 0;
};

/// Union-find labeling; ids follow the first voxel of each component in scan
/// order, so the result is deterministic.
Labels connected_components(const Mask& mask, Connectivity conn = Connectivity::TwentySix);

/// Maps arbitrary non-negative ids onto 1..K in order of first appearance.
/// Throws on negative ids.
Labels relabel(const LabelVolume& ids);

Mask threshold(const Volume<double>& prob, double t = 0.5);

struct DscJac {
  double dsc = 0.0;
  double jac = 0.0;
};
DscJac dsc_jac(const Mask& pred, const Mask& gt);

/// Sparse GT x prediction overlap table.
struct Contingency {
  std::vector<std::size_t> gt_size;    // index 0 unused
  std::vector<std::size_t> pred_size;  // index 0 unused
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> inter;

  static Contingency build(const Labels& gt, const Labels& pred);
  double jac(std::int32_t g, std::int32_t p) const;
  std::size_t overlap(std::int32_t g, std::int32_t p) const;
};

double aji(const Labels& gt, const Labels& pred);

struct MatchPair {
  std::int32_t gt = 0;
  std::int32_t pred = 0;
  double jac = 0.0;
};

struct InstanceMatch {
  std::vector<MatchPair> pairs;
  std::vector<std::int32_t> fp_pred;
  std::vector<std::int32_t> fn_gt;
  std::size_t tp() const { return pairs.size(); }
  std::size_t fp() const { return fp_pred.size(); }
  std::size_t fn() const { return fn_gt.size(); }
};

/// One-to-one matching of pairs whose JAC clears t (strictly when strict).
/// Candidates are taken greedily by descending JAC, then ascending ids.
InstanceMatch match_instances(const Contingency& table, double t, bool strict);

struct PqResult {
  double pq = 0.0, sq = 0.0, dq = 0.0;
  InstanceMatch match;
};
PqResult pq(const Labels& gt, const Labels& pred);

struct F1Result {
  double f1 = 0.0;
  double sen = 0.0;
  double spe = 0.0;  // reported as positive predictive value
  InstanceMatch match;
};
/// t must lie in [0.5, 1).
F1Result f1_at(const Labels& gt, const Labels& pred, double t);
F1Result f1_at(const Contingency& table, double t);

struct Box {
  Coord3 lo{0, 0, 0}, hi{-1, -1, -1};  // inclusive
  double volume() const;
};
std::vector<Box> bounding_boxes(const Labels& l);  // index 0 unused
double box_iou(const Box& a, const Box& b);

/// Mean of prob over each predicted instance; entry i is instance i + 1.
std::vector<double> instance_scores(const Labels& pred, const Volume<double>& prob);

/// All-point interpolated average precision at box IoU >= iou_t.
/// scores[i] belongs to prediction i + 1.
double ap_bbox(const Labels& gt, const Labels& pred, const std::vector<double>& scores, double iou_t);

struct SweepPoint {
  double t = 0.0;
  double f1 = 0.0;
  double ap = 0.0;
};
/// Thresholds 0.50, 0.55, ..., 0.85.
std::vector<double> default_thresholds();
std::vector<SweepPoint> sweep(const Labels& gt, const Labels& pred, const std::vector<double>& scores,
                              const std::vector<double>& thresholds = default_thresholds());

/// Ordered metric=value pairs.
struct MetricReport {
  std::vector<std::pair<std::string, double>> values;
  void add(const std::string& key, double v) { values.emplace_back(key, v); }
  double get(const std::string& key) const;
  void write_table(std::ostream& out) const;
  void write_kv(std::ostream& out) const;
};

/// Full evaluation of a probability map against GT labels: voxel metrics at
/// probability 0.5, instance metrics on components of the thresholded map.
MetricReport evaluate(const Volume<double>& prob, const Labels& gt, Connectivity conn = Connectivity::TwentySix,
                      bool with_sweep = false);

}  // namespace hive
