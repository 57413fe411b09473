// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "s2ag/tensor.hpp"

namespace s2ag::diff {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Round updated weights to float so 32-bit checkpoints reload exactly.
  bool float32_weights = false;
};

/// Adam with bias correction over one ParameterSet. step() consumes and clears
/// the accumulated gradients.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  void step();
  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::int64_t step_ = 0;
};

}  // namespace s2ag::diff
