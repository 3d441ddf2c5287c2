#include "convkit/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace convkit::nn {

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias)
    : in_(in), out_(out) {
  w_ = &store.add_uniform(name + ".W", {out, in}, in);
  if (bias) b_ = &store.add_zeros(name + ".b", {out});
}

Vec Linear::forward(const Vec& x) const {
  if (x.size() != in_) {
    throw NumericError("linear layer expects input of size " + std::to_string(in_) + ", got " +
                       std::to_string(x.size()));
  }
  Vec y(out_);
  for (std::size_t r = 0; r < out_; ++r) {
    y[r] = dot(w_->value.row(r), x.data(), in_) + (b_ ? b_->value.data[r] : 0.0);
  }
  return y;
}

void Linear::backward(const Vec& x, const Vec& dy, Vec* dx) const {
  for (std::size_t r = 0; r < out_; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    axpy(g, x.data(), w_->grad.row(r), in_);
    if (b_) b_->grad.data[r] += g;
    if (dx) axpy(g, w_->value.row(r), dx->data(), in_);
  }
}

Embedding::Embedding(ParamStore& store, const std::string& name, std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim) {
  table_ = &store.add_uniform(name, {rows, dim}, dim);
}

Vec Embedding::lookup(std::size_t row) const {
  if (row >= rows_) throw NumericError("embedding row out of range");
  const double* p = table_->value.row(row);
  return Vec(p, p + dim_);
}

void Embedding::backward(std::size_t row, const Vec& dy) const {
  axpy(1.0, dy.data(), table_->grad.row(row), dim_);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Lstm::Lstm(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden)
    : in_(in), hidden_(hidden) {
  w_ = &store.add_uniform(name + ".W", {4 * hidden, in + hidden}, in + hidden);
  b_ = &store.add_zeros(name + ".b", {4 * hidden});
  for (std::size_t k = hidden; k < 2 * hidden; ++k) b_->value.data[k] = 1.0;
}

void Lstm::forward(const std::vector<Vec>& xs, Cache& cache) const {
  const std::size_t h = hidden_, L = xs.size(), cols = in_ + h;
  cache.x = xs;
  cache.h.assign(L, Vec(h));
  cache.c.assign(L, Vec(h));
  cache.gates.assign(L, Vec(4 * h));
  Vec xh(cols);
  Vec zero(h, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    if (xs[t].size() != in_) {
      throw NumericError("recurrent cell expects input of size " + std::to_string(in_) + ", got " +
                         std::to_string(xs[t].size()));
    }
    const Vec& hp = t ? cache.h[t - 1] : zero;
    const Vec& cp = t ? cache.c[t - 1] : zero;
    std::copy(xs[t].begin(), xs[t].end(), xh.begin());
    std::copy(hp.begin(), hp.end(), xh.begin() + static_cast<std::ptrdiff_t>(in_));
    Vec& g = cache.gates[t];
    for (std::size_t r = 0; r < 4 * h; ++r) g[r] = dot(w_->value.row(r), xh.data(), cols) + b_->value.data[r];
    for (std::size_t k = 0; k < h; ++k) {
      const double ig = sigmoid(g[k]);
      const double fg = sigmoid(g[h + k]);
      const double gg = std::tanh(g[2 * h + k]);
      const double og = sigmoid(g[3 * h + k]);
      g[k] = ig;
      g[h + k] = fg;
      g[2 * h + k] = gg;
      g[3 * h + k] = og;
      cache.c[t][k] = fg * cp[k] + ig * gg;
      cache.h[t][k] = og * std::tanh(cache.c[t][k]);
    }
  }
}

void Lstm::backward(const Cache& cache, const std::vector<Vec>& dh, std::vector<Vec>* dx) const {
  const std::size_t h = hidden_, L = cache.x.size(), cols = in_ + h;
  if (L == 0) return;
  Vec dh_next(h, 0.0), dc_next(h, 0.0), dz(4 * h), dxh(cols), xh(cols);
  Vec zero(h, 0.0);
  for (std::size_t t = L; t-- > 0;) {
    const Vec& g = cache.gates[t];
    const Vec& cp = t ? cache.c[t - 1] : zero;
    const Vec& hp = t ? cache.h[t - 1] : zero;
    for (std::size_t k = 0; k < h; ++k) {
      const double dht = dh_next[k] + (dh.empty() || dh[t].empty() ? 0.0 : dh[t][k]);
      const double ig = g[k], fg = g[h + k], gg = g[2 * h + k], og = g[3 * h + k];
      const double tc = std::tanh(cache.c[t][k]);
      const double dc = dht * og * (1.0 - tc * tc) + dc_next[k];
      dz[k] = dc * gg * ig * (1.0 - ig);
      dz[h + k] = dc * cp[k] * fg * (1.0 - fg);
      dz[2 * h + k] = dc * ig * (1.0 - gg * gg);
      dz[3 * h + k] = dht * tc * og * (1.0 - og);
      dc_next[k] = dc * fg;
    }
    std::copy(cache.x[t].begin(), cache.x[t].end(), xh.begin());
    std::copy(hp.begin(), hp.end(), xh.begin() + static_cast<std::ptrdiff_t>(in_));
    std::fill(dxh.begin(), dxh.end(), 0.0);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      const double d = dz[r];
      if (d == 0.0) continue;
      axpy(d, xh.data(), w_->grad.row(r), cols);
      b_->grad.data[r] += d;
      axpy(d, w_->value.row(r), dxh.data(), cols);
    }
    if (dx) {
      auto& dxt = (*dx)[t];
      if (dxt.size() != in_) dxt.assign(in_, 0.0);
      for (std::size_t k = 0; k < in_; ++k) dxt[k] += dxh[k];
    }
    std::copy(dxh.begin() + static_cast<std::ptrdiff_t>(in_), dxh.end(), dh_next.begin());
  }
}

SequenceEncoder::SequenceEncoder(ParamStore& store, const std::string& name, std::size_t in,
                                 std::size_t hidden, Direction dir)
    : in_(in), hidden_(hidden), dir_(dir) {
  if (dir != Direction::Backward) fwd_ = Lstm(store, name + ".fwd", in, hidden);
  if (dir != Direction::Forward) bwd_ = Lstm(store, name + ".bwd", in, hidden);
}

std::vector<Vec> SequenceEncoder::forward(const std::vector<Vec>& xs, Cache& cache, Vec* final) const {
  const std::size_t L = xs.size(), h = hidden_;
  cache.length = L;
  std::vector<Vec> out(L);
  if (final) final->assign(out_dim(), 0.0);
  std::size_t off = 0;
  if (dir_ != Direction::Backward) {
    fwd_.forward(xs, cache.fwd);
    for (std::size_t t = 0; t < L; ++t) out[t] = cache.fwd.h[t];
    if (final && L) std::copy(cache.fwd.h[L - 1].begin(), cache.fwd.h[L - 1].end(), final->begin());
    off = h;
  }
  if (dir_ != Direction::Forward) {
    std::vector<Vec> rev(xs.rbegin(), xs.rend());
    bwd_.forward(rev, cache.bwd);
    for (std::size_t t = 0; t < L; ++t) {
      const Vec& hb = cache.bwd.h[L - 1 - t];
      out[t].insert(out[t].end(), hb.begin(), hb.end());
    }
    if (final && L) {
      std::copy(cache.bwd.h[L - 1].begin(), cache.bwd.h[L - 1].end(),
                final->begin() + static_cast<std::ptrdiff_t>(off));
    }
  }
  return out;
}

void SequenceEncoder::backward(const Cache& cache, const std::vector<Vec>& dout, const Vec& dfinal,
                               std::vector<Vec>* dx) const {
  const std::size_t L = cache.length, h = hidden_;
  if (L == 0) return;
  if (dx && dx->size() != L) dx->resize(L);
  std::size_t off = 0;
  if (dir_ != Direction::Backward) {
    std::vector<Vec> dh(L, Vec(h, 0.0));
    if (!dout.empty()) {
      for (std::size_t t = 0; t < L; ++t) {
        if (!dout[t].empty()) std::copy(dout[t].begin(), dout[t].begin() + static_cast<std::ptrdiff_t>(h), dh[t].begin());
      }
    }
    if (!dfinal.empty()) axpy(1.0, dfinal.data(), dh[L - 1].data(), h);
    fwd_.backward(cache.fwd, dh, dx);
    off = h;
  }
  if (dir_ != Direction::Forward) {
    std::vector<Vec> dh(L, Vec(h, 0.0));
    if (!dout.empty()) {
      for (std::size_t t = 0; t < L; ++t) {
        if (dout[t].empty()) continue;
        auto src = dout[t].begin() + static_cast<std::ptrdiff_t>(off);
        std::copy(src, src + static_cast<std::ptrdiff_t>(h), dh[L - 1 - t].begin());
      }
    }
    if (!dfinal.empty()) axpy(1.0, dfinal.data() + off, dh[L - 1].data(), h);
    if (dx) {
      std::vector<Vec> dxr(L);
      bwd_.backward(cache.bwd, dh, &dxr);
      for (std::size_t t = 0; t < L; ++t) {
        auto& d = (*dx)[t];
        if (d.size() != in_) d.assign(in_, 0.0);
        axpy(1.0, dxr[L - 1 - t].data(), d.data(), in_);
      }
    } else {
      bwd_.backward(cache.bwd, dh, nullptr);
    }
  }
}

double log_sum_exp(const Vec& v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Vec softmax(const Vec& logits) {
  Vec p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - m));
  for (auto& x : p) x /= s;
  return p;
}

double softmax_cross_entropy(const Vec& logits, std::size_t gold, Vec* dlogits) {
  const double lse = log_sum_exp(logits);
  if (dlogits) {
    dlogits->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) (*dlogits)[i] = std::exp(logits[i] - lse);
    (*dlogits)[gold] -= 1.0;
  }
  return lse - logits[gold];
}

}  // namespace convkit::nn
