#include "convkit/nn/crf.hpp"

#include <cmath>
#include <limits>

#include "convkit/nn/layers.hpp"

namespace convkit::nn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Crf::Crf(ParamStore& store, const std::string& name, std::size_t tags)
    : tags_(tags), allowed_(tags * tags, 1), start_allowed_(tags, 1) {
  trans_ = &store.add_zeros(name + ".transitions", {tags, tags});
  start_ = &store.add_zeros(name + ".start", {tags});
  stop_ = &store.add_zeros(name + ".stop", {tags});
}

void Crf::check(const std::vector<Vec>& emissions) const {
  if (emissions.empty()) throw NumericError("CRF needs at least one position");
  for (const auto& e : emissions) {
    if (e.size() != tags_) {
      throw NumericError("CRF emissions have " + std::to_string(e.size()) + " tags, expected " +
                         std::to_string(tags_));
    }
  }
}

double Crf::path_score(const std::vector<Vec>& em, const std::vector<std::size_t>& path) const {
  check(em);
  if (path.size() != em.size()) throw NumericError("CRF path length mismatch");
  if (!start_allowed(path[0])) return kNegInf;
  double s = start(path[0]) + em[0][path[0]];
  for (std::size_t t = 1; t < path.size(); ++t) {
    if (!allowed(path[t - 1], path[t])) return kNegInf;
    s += transition(path[t - 1], path[t]) + em[t][path[t]];
  }
  return s + stop(path.back());
}

double Crf::log_partition(const std::vector<Vec>& em) const {
  check(em);
  const std::size_t T = tags_;
  Vec alpha(T), next(T), terms;
  for (std::size_t j = 0; j < T; ++j) alpha[j] = start_allowed(j) ? start(j) + em[0][j] : kNegInf;
  for (std::size_t t = 1; t < em.size(); ++t) {
    for (std::size_t j = 0; j < T; ++j) {
      terms.clear();
      for (std::size_t i = 0; i < T; ++i) {
        if (allowed(i, j) && alpha[i] != kNegInf) terms.push_back(alpha[i] + transition(i, j));
      }
      next[j] = terms.empty() ? kNegInf : log_sum_exp(terms) + em[t][j];
    }
    alpha.swap(next);
  }
  for (std::size_t j = 0; j < T; ++j) alpha[j] += stop(j);
  return log_sum_exp(alpha);
}

std::pair<std::vector<std::size_t>, double> Crf::viterbi(const std::vector<Vec>& em) const {
  check(em);
  const std::size_t T = tags_, L = em.size();
  Vec delta(T), next(T);
  std::vector<std::vector<std::size_t>> back(L, std::vector<std::size_t>(T, 0));
  for (std::size_t j = 0; j < T; ++j) delta[j] = start_allowed(j) ? start(j) + em[0][j] : kNegInf;
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t j = 0; j < T; ++j) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < T; ++i) {
        if (!allowed(i, j) || delta[i] == kNegInf) continue;
        const double s = delta[i] + transition(i, j);
        if (s > best) {  // strict: the lowest index wins ties
          best = s;
          arg = i;
        }
      }
      next[j] = best == kNegInf ? kNegInf : best + em[t][j];
      back[t][j] = arg;
    }
    delta.swap(next);
  }
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t j = 0; j < T; ++j) {
    const double s = delta[j] + stop(j);
    if (s > best) {
      best = s;
      arg = j;
    }
  }
  std::vector<std::size_t> path(L);
  path[L - 1] = arg;
  for (std::size_t t = L - 1; t > 0; --t) path[t - 1] = back[t][path[t]];
  return {path, best};
}

double Crf::nll(const std::vector<Vec>& em, const std::vector<std::size_t>& gold,
                std::vector<Vec>* demissions) const {
  check(em);
  const std::size_t T = tags_, L = em.size();
  const double gold_score = path_score(em, gold);
  if (gold_score == kNegInf) throw NumericError("gold tag path uses a disallowed transition");

  // Forward and backward log-messages.
  std::vector<Vec> alpha(L, Vec(T, kNegInf)), beta(L, Vec(T, kNegInf));
  Vec terms;
  for (std::size_t j = 0; j < T; ++j) {
    if (start_allowed(j)) alpha[0][j] = start(j) + em[0][j];
  }
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t j = 0; j < T; ++j) {
      terms.clear();
      for (std::size_t i = 0; i < T; ++i) {
        if (allowed(i, j) && alpha[t - 1][i] != kNegInf) terms.push_back(alpha[t - 1][i] + transition(i, j));
      }
      if (!terms.empty()) alpha[t][j] = log_sum_exp(terms) + em[t][j];
    }
  }
  for (std::size_t j = 0; j < T; ++j) beta[L - 1][j] = stop(j);
  for (std::size_t t = L - 1; t > 0; --t) {
    for (std::size_t i = 0; i < T; ++i) {
      terms.clear();
      for (std::size_t j = 0; j < T; ++j) {
        if (allowed(i, j) && beta[t][j] != kNegInf) terms.push_back(transition(i, j) + em[t][j] + beta[t][j]);
      }
      beta[t - 1][i] = terms.empty() ? kNegInf : log_sum_exp(terms);
    }
  }
  Vec fin(T);
  for (std::size_t j = 0; j < T; ++j) fin[j] = alpha[L - 1][j] + stop(j);
  const double logz = log_sum_exp(fin);

  // d logZ = expected feature counts; d score(gold) = gold feature counts.
  if (demissions) demissions->assign(L, Vec(T, 0.0));
  auto marginal = [&](std::size_t t, std::size_t j) {
    if (alpha[t][j] == kNegInf || beta[t][j] == kNegInf) return 0.0;
    return std::exp(alpha[t][j] + beta[t][j] - logz);
  };
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t j = 0; j < T; ++j) {
      const double m = marginal(t, j);
      if (demissions) (*demissions)[t][j] += m;
      if (t == 0) start_->grad.data[j] += m;
      if (t == L - 1) stop_->grad.data[j] += m;
    }
  }
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t i = 0; i < T; ++i) {
      if (alpha[t - 1][i] == kNegInf) continue;
      for (std::size_t j = 0; j < T; ++j) {
        if (!allowed(i, j) || beta[t][j] == kNegInf) continue;
        const double p = std::exp(alpha[t - 1][i] + transition(i, j) + em[t][j] + beta[t][j] - logz);
        trans_->grad.at(i, j) += p;
      }
    }
  }
  start_->grad.data[gold[0]] -= 1.0;
  stop_->grad.data[gold[L - 1]] -= 1.0;
  for (std::size_t t = 0; t < L; ++t) {
    if (demissions) (*demissions)[t][gold[t]] -= 1.0;
    if (t) trans_->grad.at(gold[t - 1], gold[t]) -= 1.0;
  }
  return logz - gold_score;
}

}  // namespace convkit::nn
