#include "convkit/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace convkit::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

Param& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (find(name)) throw NumericError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(shape);
  params_.push_back(std::move(p));
  return *params_.back();
}

Param& ParamStore::add_uniform(const std::string& name, std::vector<std::size_t> shape,
                               std::size_t fan_in) {
  auto& p = add(name, std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : p.value.data) x = u(rng_);
  return p;
}

Param& ParamStore::add_zeros(const std::string& name, std::vector<std::size_t> shape) {
  return add(name, std::move(shape));
}

Param* ParamStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Param* ParamStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Param& ParamStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw NumericError("unknown parameter '" + std::string(name) + "'");
}

const Param& ParamStore::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw NumericError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.count() != count()) throw NumericError("parameter count mismatch");
  for (std::size_t i = 0; i < count(); ++i) {
    auto& dst = at(i);
    const auto& src = other.at(i);
    if (dst.name != src.name || dst.value.shape != src.value.shape) {
      throw NumericError("parameter mismatch at '" + dst.name + "'");
    }
    dst.value = src.value;
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

Vec concat(std::initializer_list<const Vec*> parts) {
  Vec out;
  std::size_t n = 0;
  for (const auto* p : parts) n += p->size();
  out.reserve(n);
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

void check_finite(const Vec& v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("non-finite value in " + std::string(what));
  }
}

}  // namespace convkit::nn
