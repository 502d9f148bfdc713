#pragma once

// Forward and backward kernels for every operation the network graph uses.
// All functions are pure: inputs are never mutated and results do not depend
// on anything but the arguments.

#include <functional>
#include <span>
#include <vector>

#include "hive/tensor.hpp"

namespace hive::ops {

enum class Orientation { XY, XZ, YZ, Point, Generic };

const char* name_of(Orientation o);
Orientation orientation_from_name(const std::string& s);

/// Kernel extent (kd, kh, kw) implied by an orientation tag. Generic has no
/// implied extent and throws.
Axis3 extent_of(Orientation o);

struct ConvKernel {
  Orientation orientation = Orientation::Point;
  Tensor weight;  // (Cout, Cin, kd, kh, kw)
  Tensor bias;    // (Cout, 1, 1, 1, 1)

  static ConvKernel zeros(Orientation o, std::size_t cin, std::size_t cout);
  static ConvKernel zeros_generic(std::size_t cin, std::size_t cout, const Axis3& extent);

  std::size_t cout() const { return weight.dims()[0]; }
  std::size_t cin() const { return weight.dims()[1]; }
  Axis3 extent() const {
    return {static_cast<int>(weight.dims()[2]), static_cast<int>(weight.dims()[3]),
            static_cast<int>(weight.dims()[4])};
  }
  std::size_t param_count() const { return weight.size() + bias.size(); }

  /// Throws std::invalid_argument if the tag disagrees with the weight extent.
  void validate() const;
};

/// Zero "same" padding: (k - 1) / 2 per axis.
Axis3 same_padding(const ConvKernel& k);
/// Multiply-accumulates of a same-padded conv over input dims x.
double conv_macs(const ConvKernel& k, const Dims& x);

Tensor conv3d_forward(const Tensor& x, const ConvKernel& k, const Axis3& pad);
inline Tensor conv3d_forward(const Tensor& x, const ConvKernel& k) {
  return conv3d_forward(x, k, same_padding(k));
}

struct ConvGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};

ConvGrads conv3d_backward(const Tensor& x, const ConvKernel& k, const Tensor& grad_out,
                          const Axis3& pad);
inline ConvGrads conv3d_backward(const Tensor& x, const ConvKernel& k, const Tensor& grad_out) {
  return conv3d_backward(x, k, grad_out, same_padding(k));
}

struct PoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// With ceil_mode the output is ceil(n / window) per axis and edge windows
/// are clipped; otherwise every axis must be divisible by the window.
PoolResult max_pool(const Tensor& x, const Axis3& window, bool ceil_mode = false);
Tensor max_pool_backward(const Tensor& grad_out, std::span<const std::size_t> argmax,
                         const Dims& input_dims);

/// Trilinear resampling with half-pixel centers: the source coordinate of
/// output index o is (o + 0.5) * n_in / n_out - 0.5, clamped to [0, n_in - 1].
Tensor resize_trilinear(const Tensor& x, const Axis3& out_size);
Tensor resize_trilinear_backward(const Tensor& grad_out, const Dims& input_dims);

/// resize_trilinear to an integer multiple of the input size.
Tensor upsample_trilinear(const Tensor& x, const Axis3& factor);
Tensor upsample_trilinear_backward(const Tensor& grad_out, const Dims& input_dims,
                                   const Axis3& factor);

struct NormState {
  Tensor scale;  // (C, 1, 1, 1, 1)
  Tensor shift;  // (C, 1, 1, 1, 1)
  double epsilon = 1e-5;

  static NormState identity(std::size_t channels, double epsilon = 1e-5);
  std::size_t channels() const { return scale.dims()[0]; }
  std::size_t param_count() const { return scale.size() + shift.size(); }
};

struct NormCache {
  std::vector<double> inv_std;  // per (n, c)
  Tensor normalized;
};

/// Per (sample, channel) normalization over D*H*W with population variance,
/// followed by the learnable affine map.
Tensor instance_norm(const Tensor& x, const NormState& s, NormCache* cache = nullptr);

struct NormGrads {
  Tensor x;
  Tensor scale;
  Tensor shift;
};

NormGrads instance_norm_backward(const Tensor& grad_out, const NormState& s,
                                 const NormCache& cache);

enum class Activation { ReLU, Sigmoid };

Tensor activate(const Tensor& x, Activation kind);
/// Uses the forward *output* y: relu' = [y > 0], sigmoid' = y (1 - y).
Tensor activate_backward(const Tensor& grad_out, const Tensor& y, Activation kind);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& acc, const Tensor& b);
Tensor concat_channels(std::span<const Tensor> xs);
std::vector<Tensor> split_channels(const Tensor& x, std::size_t groups);
/// Contiguous channel partition with explicit sizes; the backward of concat.
std::vector<Tensor> split_channels_by(const Tensor& x, std::span<const std::size_t> sizes);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Entries that only agreed at the reduced step (a kink within h).
  std::size_t retried = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  /// Denominators below this are clamped, so entries with near-zero
  /// gradient are judged on absolute error scaled by this floor.
  double floor = 1e-4;
  /// Check at most this many entries (evenly strided); 0 means all.
  std::size_t max_entries = 0;
  /// On disagreement, retry the entry once with step h / 100. A relu or
  /// max-pool switch closer than h to the point spoils the wide stencil but
  /// not the narrow one; a wrong analytic gradient fails both.
  bool kink_retry = true;
};

/// Compares an analytic gradient of a scalar function of x against central
/// differences. rel = |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           std::span<const double> analytic, const GradCheckOptions& opt = {});

/// sum(weights * y), the usual scalar reduction used with grad_check.
double weighted_sum(const Tensor& y, const Tensor& weights);

}  // namespace hive::ops
