#pragma once

// Centerline proximity targets:
//
//   D(x) = exp(alpha * (1 - D_C(x) / d_M)) - 1   if D_C(x) < d_M
//        = 0                                     otherwise
//
// where D_C is the Euclidean distance to the nearest centerline voxel.

#include <iosfwd>
#include <string>

#include "hive/volume.hpp"

namespace hive {

struct CenterlineSet {
  std::vector<Coord3> voxels;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
};

struct ProximityConfig {
  double alpha = 3.0;
  double d_max = 15.0;  // voxel units (scaled by spacing)

  void validate() const;
  double peak() const;  // exp(alpha) - 1
};

/// Exact Euclidean distance from every voxel center to the nearest
/// centerline voxel, by separable lower envelopes of parabolas. +inf
/// everywhere when the set is empty.
Volume<double> distance_transform(const Shape3& shape, const CenterlineSet& c);

/// Squared-distance transform of one line: out[p] = min_q f[q] + (s (p - q))^2.
/// Entries of f may be +inf.
void edt_1d(const double* f, double* out, std::size_t n, double spacing);

Volume<double> proximity_map(const Volume<double>& dist, const ProximityConfig& cfg);
double proximity_value(double dist, const ProximityConfig& cfg);

/// Rescales into [0, 1] by the peak value, and back.
Volume<double> normalize_proximity(const Volume<double>& map, const ProximityConfig& cfg);
Volume<double> denormalize_proximity(const Volume<double>& unit, const ProximityConfig& cfg);

/// Side file: one "d h w" triple per line, '#' starts a comment.
CenterlineSet read_centerline(std::istream& in, const Shape3& shape);
CenterlineSet read_centerline_file(const std::string& path, const Shape3& shape);
void write_centerline(std::ostream& out, const CenterlineSet& c);

}  // namespace hive
