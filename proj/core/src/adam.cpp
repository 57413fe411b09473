// SPDX-License-Identifier: Apache-2.0
#include "s2ag/adam.hpp"

#include <cmath>

namespace s2ag::diff {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  params.for_each([this](Parameter& p) {
    first_.emplace_back(p.value.shape());
    second_.emplace_back(p.value.shape());
  });
}

void Adam::step() {
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  std::size_t k = 0;
  params_->for_each([&](Parameter& p) {
    Tensor& m = first_[k];
    Tensor& v = second_[k];
    ++k;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      if (config_.float32_weights) p.value[i] = static_cast<double>(static_cast<float>(p.value[i]));
    }
    p.grad.fill(0.0);
  });
}

}  // namespace s2ag::diff
