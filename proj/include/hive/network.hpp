#pragma once

// The multitask encoder-decoder:
//
//   stem (xy conv unit, 1 -> e0)
//   E0 = M(e0 -> e0)
//   E1 = M(pool(E0)),  E2 = M(pool(E1))
//   E3 = M(expand(pool(E2)))            expand: pointwise e2 -> e3
//
// Each decoder walks back up: d_s = M(up(d_{s+1})) + skip(E_s), where skip is
// the identity or a pointwise projection when widths differ. The
// segmentation path merges the detection features at stage 0:
//
//   P = sigmoid(head(M(concat(seg_0, det_0))))
//   D = sigmoid(head(det_0))
//
// With multitask off the detection decoder is dropped and the merge module
// sees seg_0 alone.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hive/hvec.hpp"

namespace hive {

struct NetworkConfig {
  std::array<std::size_t, 4> encoder{32, 192, 256, 512};
  /// Widths of decoder stages 0, 1, 2 (stage 3 is the shared bottleneck).
  std::array<std::size_t, 3> seg_decoder{32, 96, 128};
  std::array<std::size_t, 3> det_decoder{8, 48, 96};
  /// pools[s] maps stage s to stage s + 1.
  std::array<Axis3, 3> pools{Axis3{1, 2, 2}, Axis3{2, 2, 2}, Axis3{2, 2, 2}};
  HvecConfig hvec{};
  bool multitask = true;
  Axis3 crop{40, 136, 136};

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;
  /// Product of the pool windows per axis.
  Axis3 downsampling() const;

  /// Calibrated full-size configuration.
  static NetworkConfig standard();
  /// Full-size topology with stage-2 / stage-3 widths replaced; decoder
  /// stage-2 widths follow stage 2 in proportion.
  static NetworkConfig reduced(std::size_t stage2, std::size_t stage3);
  /// Gradient-check scale: encoder [8, 16, 16, 16], crop 8x16x16.
  static NetworkConfig tiny();
  /// Every width of standard() divided by four (min 4), crop 24x64x64.
  static NetworkConfig quarter();
};

std::string describe(const NetworkConfig& cfg);

struct Network {
  NetworkConfig cfg;
  ConvUnit stem;
  std::array<HvecModuleParams, 4> encoder;
  ops::ConvKernel expand;  // e2 -> e3 before the bottleneck module

  struct Decoder {
    std::array<HvecModuleParams, 3> stage;
    std::array<std::optional<ops::ConvKernel>, 3> skip;
  };
  Decoder seg;
  std::optional<Decoder> det;
  HvecModuleParams merge;
  ops::ConvKernel seg_head;
  std::optional<ops::ConvKernel> det_head;

  /// Every learnable array in a fixed order with stable names.
  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;
  void zero_grad();
};

/// Zero-initialized graph with the right shapes.
Network make_network(const NetworkConfig& cfg);
/// Seeded initialization: conv weights ~ N(0, gain / fan_in) with gain 2 ahead
/// of a relu and 1 for linear projections and heads; zero biases; norm
/// scale 1 and shift 0.
Network build_network(const NetworkConfig& cfg, std::uint64_t seed);

std::size_t count_params(const Network& net);
/// Closed form from the configuration alone.
std::size_t count_params(const NetworkConfig& cfg);

enum class FlopConvention { Mac, TwoMac };
struct FlopReport {
  double macs = 0.0;
  double elementwise = 0.0;
  double total(FlopConvention c) const { return (c == FlopConvention::Mac ? 1.0 : 2.0) * macs + elementwise; }
};
/// Analytic count for a D x H x W single-channel input.
FlopReport count_flops(const NetworkConfig& cfg, const Axis3& input);

struct NetworkOutput {
  Tensor prob;                  // (N, 1, D, H, W)
  std::optional<Tensor> prox;   // multitask only
};

struct DecoderCache {
  std::array<HvecModuleCache, 3> stage;
  std::array<Dims, 3> up_input{};
  std::array<Tensor, 3> skip_input;
  /// Fingerprints of E0..E3 as this decoder read them.
  std::array<std::uint64_t, 4> consumed{};
};

struct NetworkCache {
  ConvUnitCache stem;
  std::array<HvecModuleCache, 4> encoder;
  std::array<std::vector<std::size_t>, 3> pool_argmax;
  std::array<Dims, 3> pool_input{};
  Tensor expand_input;
  DecoderCache seg;
  DecoderCache det;
  std::array<std::size_t, 2> merge_split{};
  HvecModuleCache merge;
  Tensor seg_head_input, det_head_input;
  Tensor prob, prox;
};

NetworkOutput forward(const Network& net, const Tensor& x, NetworkCache* cache = nullptr);

/// Accumulates parameter gradients given dL/dP and (multitask) dL/dD, both
/// taken with respect to the sigmoid outputs. Returns dL/dx.
Tensor backward(Network& net, const Tensor& grad_prob, const Tensor* grad_prox,
                const NetworkCache& cache);

}  // namespace hive
