#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "convkit/nn/tensor.hpp"

namespace convkit::nn {

// Linear-chain CRF potentials: transition[i][j] scores tag i followed by
// tag j. Disallowed transitions (and disallowed start tags) are excluded
// from every sum and max, i.e. scored as -infinity.
class Crf {
 public:
  Crf() = default;
  Crf(ParamStore& store, const std::string& name, std::size_t tags);

  std::size_t tags() const { return tags_; }
  double transition(std::size_t i, std::size_t j) const { return trans_->value.at(i, j); }
  double start(std::size_t j) const { return start_->value.data[j]; }
  double stop(std::size_t j) const { return stop_->value.data[j]; }

  void set_allowed(std::size_t i, std::size_t j, bool ok) { allowed_[i * tags_ + j] = ok; }
  void set_start_allowed(std::size_t j, bool ok) { start_allowed_[j] = ok; }
  bool allowed(std::size_t i, std::size_t j) const { return allowed_[i * tags_ + j]; }
  bool start_allowed(std::size_t j) const { return start_allowed_[j]; }

  // Score of one path; -infinity if it uses a disallowed transition.
  double path_score(const std::vector<Vec>& emissions, const std::vector<std::size_t>& path) const;
  double log_partition(const std::vector<Vec>& emissions) const;
  // Best path and its score. Ties go to the lowest tag index at the latest
  // position where tied paths differ.
  std::pair<std::vector<std::size_t>, double> viterbi(const std::vector<Vec>& emissions) const;

  // Negative log-likelihood of `gold`; accumulates parameter gradients and
  // writes emission gradients into *demissions.
  double nll(const std::vector<Vec>& emissions, const std::vector<std::size_t>& gold,
             std::vector<Vec>* demissions) const;

  Param& transitions() const { return *trans_; }
  Param& starts() const { return *start_; }
  Param& stops() const { return *stop_; }

 private:
  void check(const std::vector<Vec>& emissions) const;

  std::size_t tags_ = 0;
  Param* trans_ = nullptr;
  Param* start_ = nullptr;
  Param* stop_ = nullptr;
  std::vector<char> allowed_, start_allowed_;
};

inline double crf_log_partition(const Crf& crf, const std::vector<Vec>& emissions) {
  return crf.log_partition(emissions);
}
inline std::pair<std::vector<std::size_t>, double> crf_viterbi(const Crf& crf,
                                                                const std::vector<Vec>& emissions) {
  return crf.viterbi(emissions);
}

}  // namespace convkit::nn
