#pragma once

// Hierarchical view-ensemble convolution. The input channels are split into
// four groups, each processed by a differently oriented conv unit:
//
//   b1 = f_xy(g1)
//   b2 = f_xz(g2 + b1)
//   b3 = f_yz(g3 + b2)
//   b4 = up(f_xy(down(g4 + b3)))      (focal branch)
//
// then concatenated and fused by a pointwise conv unit. A module stacks two
// blocks with a residual shortcut. down is a max pool by the focal factor
// (edge windows clipped when the size is not a multiple) and up resamples
// back to the input size.

#include <array>
#include <optional>

#include "hive/layers.hpp"

namespace hive {

struct HvecConfig {
  std::size_t in_channels = 4;
  std::size_t out_channels = 4;
  bool inter_branch = true;
  bool focal_branch = true;
  Axis3 focal_factor{1, 2, 2};
  /// false only for receptive-field probes; the network always normalizes.
  bool normalize = true;

  void validate() const;
  HvecConfig with_channels(std::size_t cin, std::size_t cout) const;
};

/// Variant letters of the ablation table: A none, B focal only,
/// C inter-branch only, D both.
HvecConfig apply_variant(HvecConfig cfg, char variant);
char variant_of(const HvecConfig& cfg);

struct HvecParams {
  std::array<ConvUnit, 4> branch;
  /// Maps b_{i-1} (out/4 channels) onto group i (in/4 channels) when the
  /// widths differ. Present whenever in != out, whatever the flags.
  std::array<std::optional<ops::ConvKernel>, 3> project;
  ConvUnit fuse;

  static HvecParams zeros(const HvecConfig& cfg);
  std::size_t param_count() const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct HvecCache {
  std::array<ConvUnitCache, 4> branch;
  std::array<Tensor, 3> project_input;
  std::vector<std::size_t> pool_argmax;
  Dims pool_input_dims{};
  ConvUnitCache fuse;
};

Tensor hvec_forward(const Tensor& x, const HvecConfig& cfg, const HvecParams& p,
                    HvecCache* cache = nullptr);
Tensor hvec_backward(const Tensor& grad_out, const HvecConfig& cfg, HvecParams& p,
                     const HvecCache& cache);

/// Closed-form parameter count of one block.
std::size_t hvec_param_count(const HvecConfig& cfg);

struct HvecModuleParams {
  HvecParams first;
  HvecParams second;
  std::optional<ops::ConvKernel> shortcut;  // when in != out

  static HvecModuleParams zeros(const HvecConfig& cfg);
  std::size_t param_count() const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct HvecModuleCache {
  HvecCache first;
  HvecCache second;
  Tensor shortcut_input;
};

/// y = shortcut(x) + B2(B1(x)); cfg describes the module's in/out channels.
Tensor hvec_module_forward(const Tensor& x, const HvecConfig& cfg, const HvecModuleParams& p,
                           HvecModuleCache* cache = nullptr);
Tensor hvec_module_backward(const Tensor& grad_out, const HvecConfig& cfg, HvecModuleParams& p,
                            const HvecModuleCache& cache);

std::size_t hvec_module_param_count(const HvecConfig& cfg);

/// Multiply-accumulate count of one block / module on a D*H*W input, plus
/// elementwise operations (norm, activation, pooling, upsampling, adds) at
/// one per element.
struct OpCount {
  double macs = 0.0;
  double elementwise = 0.0;
  OpCount& operator+=(const OpCount& o) {
    macs += o.macs;
    elementwise += o.elementwise;
    return *this;
  }
};
OpCount hvec_op_count(const HvecConfig& cfg, const Axis3& spatial);
OpCount hvec_module_op_count(const HvecConfig& cfg, const Axis3& spatial);

}  // namespace hive
