#pragma once

#include <vector>

#include "kbc/nn/tensor.hpp"

namespace kbc::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over every trainable parameter of a store. Moments are kept in store
// order, so the store must not gain parameters after the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update from the accumulated gradients, then zeroes them.
  // Throws before touching any value if a gradient is not finite.
  void step(ParameterStore& params);

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace kbc::nn
