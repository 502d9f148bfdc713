#include "hive/optim.hpp"

#include <cmath>

namespace hive {

void adam_step(const std::vector<Tensor*>& params, OptimState& s, const OptimConfig& cfg, double lr) {
  if (s.m.empty()) {
    s.m.resize(params.size());
    s.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      s.m[i].assign(params[i]->size(), 0.0);
      s.v[i].assign(params[i]->size(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw std::invalid_argument("optimizer state does not match parameter list");
  ++s.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = s.m[i];
    auto& v = s.v[i];
    if (m.size() != p.size() || v.size() != p.size())
      throw std::invalid_argument("optimizer moment " + std::to_string(i) + " does not match its parameter");
    auto x = p.data();
    const bool has = p.has_grad();
    auto g = p.grad();
    for (std::size_t j = 0; j < x.size(); ++j) {
      double gj = has ? g[j] : 0.0;
      if (!cfg.decoupled) gj += cfg.weight_decay * x[j];
      m[j] = cfg.beta1 * m[j] + (1 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1 - cfg.beta2) * gj * gj;
      const double mh = m[j] / c1, vh = v[j] / c2;
      if (cfg.decoupled) x[j] -= lr * cfg.weight_decay * x[j];
      x[j] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

std::vector<Tensor*> parameters(Network& net) {
  std::vector<Tensor*> out;
  net.visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

double grad_norm(const std::vector<Tensor*>& params) {
  double s = 0;
  for (const Tensor* p : params)
    if (p->has_grad())
      for (double g : p->grad()) s += g * g;
  return std::sqrt(s);
}

}  // namespace hive
