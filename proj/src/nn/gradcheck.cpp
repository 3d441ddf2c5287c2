#include "convkit/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace convkit::nn {

GradCheckResult finite_diff_check(const std::function<double(bool)>& loss, ParamStore& store,
                                  double epsilon, std::size_t max_per_param, std::uint64_t seed) {
  store.zero_grad();
  loss(true);
  std::vector<Tensor> analytic;
  for (std::size_t i = 0; i < store.count(); ++i) analytic.push_back(store.at(i).grad);
  store.zero_grad();

  GradCheckResult res;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto& p = store.at(i);
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_per_param && coords.size() > max_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_per_param);
    }
    for (auto k : coords) {
      const double orig = p.value.data[k];
      p.value.data[k] = orig + epsilon;
      const double up = loss(false);
      p.value.data[k] = orig - epsilon;
      const double down = loss(false);
      p.value.data[k] = orig;
      const double num = (up - down) / (2.0 * epsilon);
      const double a = analytic[i].data[k];
      const double denom = std::max({std::abs(a), std::abs(num), 1e-5});
      const double rel = std::abs(a - num) / denom;
      ++res.checked;
      if (rel > res.max_rel_error || !std::isfinite(rel)) {
        res.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        res.worst = p.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return res;
}

}  // namespace convkit::nn
