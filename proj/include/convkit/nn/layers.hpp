#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "convkit/nn/tensor.hpp"

namespace convkit::nn {

// y = W x + b with W [out, in].
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias = true);

  Vec forward(const Vec& x) const;
  // Accumulates parameter gradients; adds W^T dy into *dx when given.
  void backward(const Vec& x, const Vec& dy, Vec* dx) const;

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, std::size_t rows, std::size_t dim);

  Vec lookup(std::size_t row) const;
  void backward(std::size_t row, const Vec& dy) const;
  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  Param& table() const { return *table_; }

 private:
  std::size_t rows_ = 0, dim_ = 0;
  Param* table_ = nullptr;
};

// Gated recurrent cell:
//   [i f g o] = W [x; h_prev] + b
//   c = sigmoid(f) * c_prev + sigmoid(i) * tanh(g)
//   h = sigmoid(o) * tanh(c)
// Runs from a zero state. The forget-gate bias starts at 1.
class Lstm {
 public:
  struct Cache {
    std::vector<Vec> x;
    std::vector<Vec> h, c;
    std::vector<Vec> gates;  // activated i, f, g, o per step
  };

  Lstm() = default;
  Lstm(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden);

  void forward(const std::vector<Vec>& xs, Cache& cache) const;
  // dh[t] is the loss gradient w.r.t. h[t] (may be empty for "none").
  // Adds input gradients into (*dx)[t] when dx is given.
  void backward(const Cache& cache, const std::vector<Vec>& dh, std::vector<Vec>* dx) const;

  std::size_t in() const { return in_; }
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t in_ = 0, hidden_ = 0;
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

enum class Direction { Forward, Backward, Bi };

// Sequence encoder over a forward and/or backward cell. Bi mode concatenates
// both directions per position; the final state is [fwd last; bwd first].
class SequenceEncoder {
 public:
  struct Cache {
    Lstm::Cache fwd, bwd;
    std::size_t length = 0;
  };

  SequenceEncoder() = default;
  SequenceEncoder(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                  Direction dir);

  // Returns per-position outputs; *final receives the final state.
  std::vector<Vec> forward(const std::vector<Vec>& xs, Cache& cache, Vec* final = nullptr) const;
  // dout: per-position output gradients (may be empty); dfinal: final-state
  // gradient (may be empty).
  void backward(const Cache& cache, const std::vector<Vec>& dout, const Vec& dfinal,
                std::vector<Vec>* dx) const;

  std::size_t out_dim() const { return dir_ == Direction::Bi ? 2 * hidden_ : hidden_; }
  std::size_t in() const { return in_; }

 private:
  std::size_t in_ = 0, hidden_ = 0;
  Direction dir_ = Direction::Forward;
  Lstm fwd_, bwd_;
};

Vec softmax(const Vec& logits);
// Returns -log softmax(logits)[gold]; writes p - onehot(gold) into *dlogits.
double softmax_cross_entropy(const Vec& logits, std::size_t gold, Vec* dlogits);
double sigmoid(double x);
double log_sum_exp(const Vec& v);

}  // namespace convkit::nn
