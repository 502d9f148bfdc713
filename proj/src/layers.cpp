#include "hive/layers.hpp"

namespace hive {

void accumulate_grad(Tensor& p, const Tensor& g) {
  if (p.dims() != g.dims()) throw_shape("gradient accumulation", p.dims(), g.dims());
  if (!p.has_grad()) p.zero_grad();
  auto dst = p.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void visit_conv(const std::string& prefix, ops::ConvKernel& k, const ParamVisitor& fn) {
  fn(prefix + ".weight", k.weight);
  fn(prefix + ".bias", k.bias);
}

void visit_norm(const std::string& prefix, ops::NormState& s, const ParamVisitor& fn) {
  fn(prefix + ".scale", s.scale);
  fn(prefix + ".shift", s.shift);
}

ConvUnit ConvUnit::zeros(ops::Orientation o, std::size_t cin, std::size_t cout) {
  return {ops::ConvKernel::zeros(o, cin, cout), ops::NormState::identity(cout)};
}

void ConvUnit::visit(const std::string& prefix, const ParamVisitor& fn) {
  visit_conv(prefix + ".conv", conv, fn);
  visit_norm(prefix + ".norm", norm, fn);
}

Tensor conv_unit_forward(const ConvUnit& u, const Tensor& x, bool normalize, ConvUnitCache* cache) {
  Tensor z = ops::conv3d_forward(x, u.conv);
  if (normalize) z = ops::instance_norm(z, u.norm, cache ? &cache->norm : nullptr);
  Tensor y = ops::activate(z, ops::Activation::ReLU);
  if (cache) {
    cache->input = x;
    cache->out = y;
  }
  return y;
}

Tensor conv_unit_backward(ConvUnit& u, const Tensor& gy, const ConvUnitCache& c, bool normalize) {
  Tensor g = ops::activate_backward(gy, c.out, ops::Activation::ReLU);
  if (normalize) {
    auto ng = ops::instance_norm_backward(g, u.norm, c.norm);
    accumulate_grad(u.norm.scale, ng.scale);
    accumulate_grad(u.norm.shift, ng.shift);
    g = std::move(ng.x);
  }
  auto cg = ops::conv3d_backward(c.input, u.conv, g);
  accumulate_grad(u.conv.weight, cg.weight);
  accumulate_grad(u.conv.bias, cg.bias);
  return std::move(cg.x);
}

Tensor linear_forward(const ops::ConvKernel& k, const Tensor& x, Tensor* cached_input) {
  if (cached_input) *cached_input = x;
  return ops::conv3d_forward(x, k);
}

Tensor linear_backward(ops::ConvKernel& k, const Tensor& gy, const Tensor& cached_input) {
  auto cg = ops::conv3d_backward(cached_input, k, gy);
  accumulate_grad(k.weight, cg.weight);
  accumulate_grad(k.bias, cg.bias);
  return std::move(cg.x);
}

}  // namespace hive
