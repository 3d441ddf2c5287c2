#pragma once

#include <cmath>
#include <vector>

#include "convkit/nn/crf.hpp"

namespace convkit::testing {

// Exhaustive enumeration over all tag paths.
struct BruteCrf {
  double logz = -INFINITY;
  std::vector<std::size_t> best;
  double best_score = -INFINITY;
};

inline BruteCrf brute_force(const nn::Crf& crf, const std::vector<nn::Vec>& em) {
  const std::size_t L = em.size(), T = crf.tags();
  BruteCrf out;
  std::vector<std::size_t> path(L, 0);
  std::vector<double> scores;
  while (true) {
    double s = crf.start_allowed(path[0]) ? crf.start(path[0]) + em[0][path[0]] : -INFINITY;
    for (std::size_t t = 1; t < L && std::isfinite(s); ++t) {
      s = crf.allowed(path[t - 1], path[t]) ? s + crf.transition(path[t - 1], path[t]) + em[t][path[t]]
                                            : -INFINITY;
    }
    if (std::isfinite(s)) {
      s += crf.stop(path[L - 1]);
      scores.push_back(s);
      bool better = s > out.best_score;
      if (s == out.best_score) {
        // Tie: lower tag at the latest differing position wins.
        for (std::size_t t = L; t-- > 0;) {
          if (path[t] != out.best[t]) {
            better = path[t] < out.best[t];
            break;
          }
        }
      }
      if (better) {
        out.best_score = s;
        out.best = path;
      }
    }
    std::size_t k = 0;
    while (k < L && ++path[k] == T) path[k++] = 0;
    if (k == L) break;
  }
  double m = -INFINITY;
  for (double s : scores) m = std::max(m, s);
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - m);
  out.logz = m + std::log(acc);
  return out;
}

}  // namespace convkit::testing
