#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "convkit/nn/tensor.hpp"

namespace convkit::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst coordinate
  std::size_t checked = 0;
};

// `loss(true)` must return the loss and accumulate analytic gradients into
// the store; `loss(false)` only returns the loss. Compares every coordinate
// (or `max_per_param` sampled ones per parameter) against central
// differences. Relative error is |a - n| / max(|a|, |n|, 1e-5).
GradCheckResult finite_diff_check(const std::function<double(bool)>& loss, ParamStore& store,
                                  double epsilon = 1e-5, std::size_t max_per_param = 0,
                                  std::uint64_t seed = 1);

}  // namespace convkit::nn
