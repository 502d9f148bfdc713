#pragma once

// Small building blocks shared by the HVEC block and the network: parameter
// visiting, gradient accumulation and the conv -> norm -> relu unit.

#include <functional>
#include <string>

#include "hive/ops.hpp"

namespace hive {

/// Called once per learnable array with a stable dotted name.
using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor& value)>;

/// Adds g into p's gradient buffer, allocating it on first use.
void accumulate_grad(Tensor& p, const Tensor& g);

void visit_conv(const std::string& prefix, ops::ConvKernel& k, const ParamVisitor& fn);
void visit_norm(const std::string& prefix, ops::NormState& s, const ParamVisitor& fn);

/// conv -> instance norm -> relu. With normalize = false the norm is skipped
/// (used only by receptive-field probes).
struct ConvUnit {
  ops::ConvKernel conv;
  ops::NormState norm;

  static ConvUnit zeros(ops::Orientation o, std::size_t cin, std::size_t cout);
  std::size_t param_count() const { return conv.param_count() + norm.param_count(); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct ConvUnitCache {
  Tensor input;
  ops::NormCache norm;
  Tensor out;
};

Tensor conv_unit_forward(const ConvUnit& u, const Tensor& x, bool normalize, ConvUnitCache* cache);
/// Accumulates parameter gradients into u and returns the input gradient.
Tensor conv_unit_backward(ConvUnit& u, const Tensor& grad_out, const ConvUnitCache& cache,
                          bool normalize);

/// Plain convolution with cached input; used for projections and heads.
Tensor linear_forward(const ops::ConvKernel& k, const Tensor& x, Tensor* cached_input);
Tensor linear_backward(ops::ConvKernel& k, const Tensor& grad_out, const Tensor& cached_input);

}  // namespace hive
