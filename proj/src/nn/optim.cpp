#include "convkit/nn/optim.hpp"

#include <cmath>

namespace convkit::nn {

double clip_gradients(ParamStore& store, double clip) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto& p = store.at(i);
    for (double g : p.grad.data) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (clip > 0 && norm > clip) {
    const double s = clip / norm;
    for (std::size_t i = 0; i < store.count(); ++i) {
      for (double& g : store.at(i).grad.data) g *= s;
    }
  }
  return norm;
}

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
  for (std::size_t i = 0; i < store.count(); ++i) {
    m_.emplace_back(store.at(i).value.size(), 0.0);
    v_.emplace_back(store.at(i).value.size(), 0.0);
  }
}

double Adam::step() {
  const double norm = clip_gradients(store_, cfg_.clip_norm);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < store_.count(); ++i) {
    auto& p = store_.at(i);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      p.value.data[k] -= cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
    }
    p.grad.fill(0.0);
  }
  return norm;
}

}  // namespace convkit::nn
