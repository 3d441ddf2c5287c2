#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace convkit::nn {

using Vec = std::vector<double>;

// Non-finite values, shape mismatches and similar numeric contract breaks.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles. Matrices are [rows, cols].
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 0 : data.size() / shape[0]; }
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  void fill(double v);
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named parameters with gradient buffers. Parameters are initialized as
// they are added, from an rng seeded at construction, so a fixed seed and a
// fixed registration order give identical stores.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  // Weight matrix drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Param& add_uniform(const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in);
  Param& add_zeros(const std::string& name, std::vector<std::size_t> shape);

  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;

  std::size_t count() const { return params_.size(); }
  Param& at(std::size_t i) { return *params_[i]; }
  const Param& at(std::size_t i) const { return *params_[i]; }
  std::size_t num_values() const;
  std::uint64_t seed() const { return seed_; }

  void zero_grad();
  // Copies values (not gradients) from a store with identical names and shapes.
  void copy_values_from(const ParamStore& other);

 private:
  Param& add(const std::string& name, std::vector<std::size_t> shape);

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<Param>> params_;
};

// Small dense helpers used by the layers.
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
Vec concat(std::initializer_list<const Vec*> parts);
void check_finite(const Vec& v, std::string_view what);

}  // namespace convkit::nn
