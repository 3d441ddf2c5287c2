#pragma once

#include <cstdint>
#include <vector>

#include "convkit/nn/tensor.hpp"

namespace convkit::nn {

struct AdamConfig {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

// Scales all gradients so their global L2 norm is at most `clip`. Returns
// the norm before clipping. Throws NumericError naming the first parameter
// with a non-finite gradient.
double clip_gradients(ParamStore& store, double clip);

// Adaptive-moment optimizer with global-norm clipping. Gradients are zeroed
// after each step.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);
  double step();
  std::uint64_t steps() const { return t_; }

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Vec> m_, v_;
};

}  // namespace convkit::nn
