#include "dsanet/optim.hpp"

#include <cmath>

#include "dsanet/error.hpp"

namespace dsanet::ad {

Adam::Adam(std::vector<Parameter> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw ConfigError("Adam decay rates must lie in [0, 1)");
  }
  for (const Parameter& p : params_) {
    if (!p.value.requires_grad()) {
      throw ContractError("parameter '" + p.name + "' has no gradient accumulator");
    }
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  for (const Parameter& p : params_) {
    if (!p.value.requires_grad() || p.value.grad().size() != p.value.size()) {
      throw ContractError("parameter '" + p.name + "' is missing its gradient");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor value = params_[k].value;
    auto w = value.values();
    auto gr = value.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gr[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gr[i] * gr[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      if (params_[k].nonnegative && w[i] < 0.0) w[i] = 0.0;
    }
    value.zero_grad();
  }
}

void Adam::zero_grad() {
  for (Parameter& p : params_) p.value.zero_grad();
}

}  // namespace dsanet::ad
