#pragma once

// Synthetic mitochondria-like volumes: smooth tubes of varying radius over a
// textured background, with exact labels, instance ids and centerlines, plus
// the crop and augmentation used for training.

#include <cstdint>

#include "hive/centerline.hpp"
#include "hive/metrics.hpp"
#include "hive/rng.hpp"

namespace hive {

struct PhantomConfig {
  Shape3 dims{48, 96, 96};
  int min_instances = 3;
  int max_instances = 6;
  double min_radius = 2.0;  // voxels
  double max_radius = 4.0;
  double curvature = 0.25;   // direction change per unit length (radians)
  double contrast = 0.6;     // foreground lift above the background
  double noise = 0.05;       // Gaussian std before normalization
  double clutter = 0.002;    // distractor spots per voxel
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::uint64_t seed = 1;
  int max_attempts = 500;    // placement tries per instance

  void validate() const;
};

struct LabeledVolume {
  Volume<double> image;  // in [0, 1]
  Mask labels;
  Labels instances;
  std::vector<CenterlineSet> centerlines;  // one per instance, index i -> id i + 1
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  CenterlineSet all_centerlines() const;
};

LabeledVolume generate(const PhantomConfig& cfg);

/// Training sample: image, binary label and normalized proximity target.
struct Sample {
  Volume<double> image;
  Mask label;
  Volume<double> proximity;
};

Sample make_sample(const LabeledVolume& v, const ProximityConfig& pc);

Sample crop(const Sample& s, const Shape3& corner, const Shape3& size);
/// Uniform corner over every valid position.
Sample random_crop(const Sample& s, const Shape3& size, Rng& rng, Shape3* corner = nullptr);

enum class Augment { FlipW, TransposeHW, Rot90 };

/// Applies one spatial map to image, label and target alike. Rot90 turns k
/// quarter turns in the H-W plane; transpose and rotation need H == W.
Sample augment(const Sample& s, Augment op, int k = 1);
template <class T>
Volume<T> augment_volume(const Volume<T>& v, Augment op, int k = 1);

/// Random flip, transpose and quarter turn, each drawn from rng.
Sample random_augment(const Sample& s, Rng& rng);

}  // namespace hive
