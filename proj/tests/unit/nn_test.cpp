#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "convkit/nn/checkpoint.hpp"
#include "convkit/nn/crf.hpp"
#include "convkit/nn/gradcheck.hpp"
#include "convkit/nn/layers.hpp"
#include "convkit/nn/optim.hpp"
#include "crf_oracle.hpp"

using namespace convkit::nn;
using convkit::testing::brute_force;

namespace {

Vec random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vec v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<Vec> random_seq(std::mt19937_64& rng, std::size_t len, std::size_t dim, double scale = 1.0) {
  std::vector<Vec> s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(random_vec(rng, dim));
  return s;
}

void randomize(Param& p, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& x : p.value.data) x = d(rng);
}

}  // namespace

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
  ParamStore store(3);
  Lstm cell(store, "c", 3, 4);
  for (std::size_t i = 0; i < store.count(); ++i) store.at(i).value.fill(0.0);
  std::mt19937_64 rng(1);
  Lstm::Cache cache;
  cell.forward(random_seq(rng, 5, 3), cache);
  for (const auto& h : cache.h) {
    for (double x : h) EXPECT_EQ(x, 0.0);
  }
}

TEST(Lstm, SingleStepMatchesHandEvaluation) {
  ParamStore store(0);
  Lstm cell(store, "c", 2, 2);
  // W rows: i0 i1 f0 f1 g0 g1 o0 o1; columns: x0 x1 h0 h1.
  auto& w = store.get("c.W").value;
  auto& b = store.get("c.b").value;
  const double W[8][4] = {{0.1, -0.2, 0.3, 0.0}, {0.4, 0.5, 0.0, 0.1}, {-0.3, 0.2, 0.1, 0.1},
                          {0.0, 0.1, 0.2, 0.3},  {0.5, -0.5, 0.0, 0.0}, {0.2, 0.2, 0.2, 0.2},
                          {-0.1, 0.0, 0.4, 0.0}, {0.3, 0.3, 0.0, -0.2}};
  const double B[8] = {0.0, 0.1, 1.0, 1.0, -0.1, 0.0, 0.2, 0.0};
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 4; ++c) w.at(r, c) = W[r][c];
    b.data[r] = B[r];
  }
  const double x0 = 1.0, x1 = -2.0;
  Lstm::Cache cache;
  cell.forward({{x0, x1}}, cache);
  // h_prev = c_prev = 0, so only the x columns matter.
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (int k = 0; k < 2; ++k) {
    double zi = W[k][0] * x0 + W[k][1] * x1 + B[k];
    double zg = W[4 + k][0] * x0 + W[4 + k][1] * x1 + B[4 + k];
    double zo = W[6 + k][0] * x0 + W[6 + k][1] * x1 + B[6 + k];
    double c = sig(zi) * std::tanh(zg);
    double h = sig(zo) * std::tanh(c);
    EXPECT_NEAR(cache.c[0][k], c, 1e-15);
    EXPECT_NEAR(cache.h[0][k], h, 1e-15);
  }
  // z_i = 0.5, z_g = 1.4, z_o = 0.1.
  EXPECT_NEAR(cache.h[0][0], 0.2631934527, 1e-10);
}

TEST(Lstm, ForgetBiasStartsAtOne) {
  ParamStore store(0);
  Lstm cell(store, "c", 3, 2);
  auto& b = store.get("c.b").value.data;
  EXPECT_EQ(b[0], 0.0);
  EXPECT_EQ(b[2], 1.0);
  EXPECT_EQ(b[3], 1.0);
  EXPECT_EQ(b[4], 0.0);
}

TEST(SequenceEncoder, BiShapesAndEmptyInput) {
  ParamStore store(2);
  SequenceEncoder enc(store, "e", 3, 5, Direction::Bi);
  std::mt19937_64 rng(4);
  SequenceEncoder::Cache cache;
  Vec fin;
  auto out = enc.forward(random_seq(rng, 3, 3), cache, &fin);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& o : out) EXPECT_EQ(o.size(), 10u);
  EXPECT_EQ(fin.size(), 10u);
  // Final state = [forward at last position; backward at first position].
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(fin[k], out[2][k]);
    EXPECT_EQ(fin[5 + k], out[0][5 + k]);
  }
  auto empty = enc.forward({}, cache, &fin);
  EXPECT_TRUE(empty.empty());
  EXPECT_EQ(fin, Vec(10, 0.0));
}

TEST(SequenceEncoder, DimensionMismatchThrows) {
  ParamStore store(2);
  SequenceEncoder enc(store, "e", 3, 2, Direction::Forward);
  SequenceEncoder::Cache cache;
  EXPECT_THROW(enc.forward({{1.0, 2.0}}, cache), NumericError);
}

TEST(Softmax, ClosedFormsAndNormalization) {
  auto p = softmax({std::log(2.0), 0.0});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  ParamStore store(1);
  Linear lin(store, "l", 4, 5);
  for (std::size_t i = 0; i < store.count(); ++i) store.at(i).value.fill(0.0);
  auto u = softmax(lin.forward({1, 2, 3, 4}));
  for (double x : u) EXPECT_DOUBLE_EQ(x, 0.2);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto q = softmax(random_vec(rng, 7, 30.0));
    double s = 0.0;
    for (double x : q) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Linear, DimensionMismatchThrows) {
  ParamStore store(1);
  Linear lin(store, "l", 4, 5);
  EXPECT_THROW(lin.forward({1, 2}), NumericError);
}

TEST(Crf, ZeroPotentialClosedForms) {
  ParamStore store;
  Crf crf(store, "crf", 2);
  EXPECT_NEAR(crf.log_partition({{0, 0}}), std::log(2.0), 1e-15);
  EXPECT_NEAR(crf.log_partition({{0, 0}, {0, 0}}), std::log(4.0), 1e-15);
  auto [path, score] = crf.viterbi({{0, 0}, {0, 0}, {0, 0}});
  EXPECT_EQ(path, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(score, 0.0);
}

TEST(Crf, ZeroTransitionsDecodePerPositionArgmax) {
  ParamStore store;
  Crf crf(store, "crf", 4);
  std::mt19937_64 rng(5);
  auto em = random_seq(rng, 6, 4);
  auto [path, score] = crf.viterbi(em);
  for (std::size_t t = 0; t < em.size(); ++t) {
    auto best = std::max_element(em[t].begin(), em[t].end()) - em[t].begin();
    EXPECT_EQ(path[t], static_cast<std::size_t>(best));
  }
}

TEST(Crf, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 4, L = 1 + rng() % 5;
    ParamStore store;
    Crf crf(store, "crf", T);
    randomize(crf.transitions(), rng);
    randomize(crf.starts(), rng);
    randomize(crf.stops(), rng);
    if (trial % 2 && T > 1) {
      // Masked variant: forbid a few transitions but keep tag 0 reachable.
      for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t j = 1; j < T; ++j) {
          if (rng() % 3 == 0) crf.set_allowed(i, j, false);
        }
      }
      crf.set_start_allowed(T - 1, false);
    }
    auto em = random_seq(rng, L, T);
    auto oracle = brute_force(crf, em);
    EXPECT_NEAR(crf.log_partition(em), oracle.logz, 1e-8) << "trial " << trial;
    auto [path, score] = crf.viterbi(em);
    EXPECT_EQ(path, oracle.best) << "trial " << trial;
    EXPECT_NEAR(score, crf.path_score(em, path), 1e-12);
    EXPECT_LE(score, crf.log_partition(em) + 1e-12);
  }
}

TEST(Crf, PartitionDominatesEveryPath) {
  std::mt19937_64 rng(77);
  ParamStore store;
  Crf crf(store, "crf", 3);
  randomize(crf.transitions(), rng, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto em = random_seq(rng, 4, 3, 3.0);
    const double z = crf.log_partition(em);
    std::vector<std::size_t> path(4);
    for (auto& t : path) t = rng() % 3;
    EXPECT_GE(z, crf.path_score(em, path));
  }
}

TEST(Crf, ShapeMismatchThrows) {
  ParamStore store;
  Crf crf(store, "crf", 3);
  EXPECT_THROW(crf.log_partition({{0, 0}}), NumericError);
  EXPECT_THROW(crf.viterbi({}), NumericError);
}

TEST(Optimizer, ZeroGradientLeavesParamsUnchanged) {
  ParamStore store(5);
  Linear lin(store, "l", 3, 2);
  auto before = store.get("l.W").value;
  Adam adam(store, {});
  adam.step();
  EXPECT_EQ(store.get("l.W").value, before);
}

TEST(Optimizer, SingleScalarStepByHand) {
  ParamStore store;
  auto& p = store.add_zeros("x", {1});
  p.value.data[0] = 0.5;
  p.grad.data[0] = 0.2;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.clip_norm = 0;
  Adam adam(store, cfg);
  adam.step();
  // m = 0.1*0.2, v = 0.001*0.04; bias-corrected m/sqrt(v) = 0.2/0.2 = 1.
  const double expect = 0.5 - 0.1 * (0.2 / (0.2 + 1e-8));
  EXPECT_NEAR(p.value.data[0], expect, 1e-15);
  EXPECT_EQ(p.grad.data[0], 0.0);
}

TEST(Optimizer, GlobalNormClipping) {
  ParamStore store;
  auto& a = store.add_zeros("a", {2});
  auto& b = store.add_zeros("b", {1});
  a.grad.data = {6.0, 0.0};
  b.grad.data = {8.0};
  const double norm = clip_gradients(store, 1.0);
  EXPECT_NEAR(norm, 10.0, 1e-12);
  const double applied = std::sqrt(a.grad.data[0] * a.grad.data[0] + b.grad.data[0] * b.grad.data[0]);
  EXPECT_NEAR(applied, 1.0, 1e-12);
}

TEST(Optimizer, NonFiniteGradientNamesParameter) {
  ParamStore store;
  store.add_zeros("fine", {1});
  auto& bad = store.add_zeros("broken", {2});
  bad.grad.data[1] = NAN;
  Adam adam(store, {});
  try {
    adam.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
}

TEST(GradCheck, QuadraticAndConstant) {
  ParamStore store(8);
  store.add_uniform("theta", {3, 4}, 4);
  auto quad = [&](bool grad) {
    double s = 0.0;
    auto& p = store.get("theta");
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      s += 0.5 * p.value.data[k] * p.value.data[k];
      if (grad) p.grad.data[k] += p.value.data[k];
    }
    return s;
  };
  EXPECT_LT(finite_diff_check(quad, store).max_rel_error, 1e-9);
  auto constant = [](bool) { return 3.0; };
  auto r = finite_diff_check(constant, store);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.checked, 12u);
}

TEST(GradCheck, LinearAndSoftmaxCrossEntropy) {
  ParamStore store(11);
  Linear lin(store, "l", 4, 3);
  std::mt19937_64 rng(1);
  auto x = random_vec(rng, 4);
  auto f = [&](bool grad) {
    auto y = lin.forward(x);
    Vec dy;
    double loss = softmax_cross_entropy(y, 2, grad ? &dy : nullptr);
    if (grad) lin.backward(x, dy, nullptr);
    return loss;
  };
  EXPECT_LT(finite_diff_check(f, store).max_rel_error, 1e-6);
}

TEST(GradCheck, EmbeddingThroughLinear) {
  ParamStore store(12);
  Embedding emb(store, "emb", 5, 3);
  Linear lin(store, "l", 3, 2);
  auto f = [&](bool grad) {
    double loss = 0.0;
    for (std::size_t row : {1u, 3u, 1u}) {
      auto x = emb.lookup(row);
      auto y = lin.forward(x);
      Vec dy;
      loss += softmax_cross_entropy(y, row % 2, grad ? &dy : nullptr);
      if (grad) {
        Vec dx(3, 0.0);
        lin.backward(x, dy, &dx);
        emb.backward(row, dx);
      }
    }
    return loss;
  };
  EXPECT_LT(finite_diff_check(f, store).max_rel_error, 1e-6);
}

TEST(GradCheck, RecurrentEncodersAllDirections) {
  for (auto dir : {Direction::Forward, Direction::Backward, Direction::Bi}) {
    ParamStore store(13);
    SequenceEncoder enc(store, "enc", 3, 4, dir);
    Linear head(store, "head", enc.out_dim(), 2);
    std::mt19937_64 rng(3);
    auto xs = random_seq(rng, 4, 3);
    auto f = [&](bool grad) {
      SequenceEncoder::Cache cache;
      Vec fin;
      auto out = enc.forward(xs, cache, &fin);
      double loss = 0.0;
      std::vector<Vec> dout(out.size());
      Vec dfin(fin.size(), 0.0);
      for (std::size_t t = 0; t < out.size(); ++t) {
        auto y = head.forward(out[t]);
        Vec dy;
        loss += softmax_cross_entropy(y, t % 2, grad ? &dy : nullptr);
        if (grad) {
          dout[t].assign(out[t].size(), 0.0);
          head.backward(out[t], dy, &dout[t]);
        }
      }
      // Also a loss on the final state.
      for (std::size_t k = 0; k < fin.size(); ++k) {
        loss += 0.5 * fin[k] * fin[k];
        dfin[k] = fin[k];
      }
      if (grad) enc.backward(cache, dout, dfin, nullptr);
      return loss;
    };
    EXPECT_LT(finite_diff_check(f, store).max_rel_error, 1e-4);
  }
}

TEST(GradCheck, RecurrentInputGradients) {
  ParamStore store(14);
  Embedding emb(store, "emb", 6, 3);
  SequenceEncoder enc(store, "enc", 3, 2, Direction::Bi);
  const std::vector<std::size_t> ids{0, 4, 2, 4};
  auto f = [&](bool grad) {
    std::vector<Vec> xs;
    for (auto i : ids) xs.push_back(emb.lookup(i));
    SequenceEncoder::Cache cache;
    Vec fin;
    enc.forward(xs, cache, &fin);
    double loss = 0.0;
    for (double v : fin) loss += v * 1.7 + v * v;
    if (grad) {
      Vec dfin(fin.size());
      for (std::size_t k = 0; k < fin.size(); ++k) dfin[k] = 1.7 + 2 * fin[k];
      std::vector<Vec> dx;
      enc.backward(cache, {}, dfin, &dx);
      for (std::size_t t = 0; t < ids.size(); ++t) emb.backward(ids[t], dx[t]);
    }
    return loss;
  };
  EXPECT_LT(finite_diff_check(f, store).max_rel_error, 1e-4);
}

TEST(GradCheck, CrfNegativeLogLikelihood) {
  ParamStore store(15);
  Crf crf(store, "crf", 3);
  Linear proj(store, "proj", 2, 3);
  std::mt19937_64 rng(6);
  randomize(crf.transitions(), rng);
  crf.set_allowed(0, 2, false);
  auto xs = random_seq(rng, 5, 2);
  const std::vector<std::size_t> gold{1, 2, 2, 0, 1};
  auto f = [&](bool grad) {
    std::vector<Vec> em;
    for (const auto& x : xs) em.push_back(proj.forward(x));
    std::vector<Vec> dem;
    double loss = crf.nll(em, gold, grad ? &dem : nullptr);
    if (grad) {
      for (std::size_t t = 0; t < xs.size(); ++t) proj.backward(xs[t], dem[t], nullptr);
    }
    return loss;
  };
  EXPECT_LT(finite_diff_check(f, store).max_rel_error, 1e-4);
}

TEST(Crf, NllEqualsPartitionMinusGoldScore) {
  ParamStore store(16);
  Crf crf(store, "crf", 4);
  std::mt19937_64 rng(7);
  randomize(crf.transitions(), rng);
  randomize(crf.starts(), rng);
  auto em = random_seq(rng, 5, 4);
  std::vector<std::size_t> gold{3, 1, 0, 0, 2};
  EXPECT_NEAR(crf.nll(em, gold, nullptr), crf.log_partition(em) - crf.path_score(em, gold), 1e-12);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  ParamStore store(21);
  Linear lin(store, "l", 3, 4);
  Lstm cell(store, "c", 2, 3);
  auto bytes = save_params(store);
  auto loaded = load_params(bytes);
  ASSERT_EQ(loaded.count(), store.count());
  for (std::size_t i = 0; i < store.count(); ++i) {
    EXPECT_EQ(loaded.at(i).name, store.at(i).name);
    EXPECT_EQ(loaded.at(i).value, store.at(i).value);
  }
  ParamStore other(99);
  Linear lin2(other, "l", 3, 4);
  Lstm cell2(other, "c", 2, 3);
  load_params_into(other, bytes);
  EXPECT_EQ(other.get("c.W").value, store.get("c.W").value);
  auto j = params_to_json(store);
  EXPECT_EQ(j["params"].size(), store.count());
}

TEST(Checkpoint, TruncatedAndVersionMismatch) {
  ParamStore store(21);
  Linear lin(store, "l", 3, 4);
  auto bytes = save_params(store);
  EXPECT_THROW(load_params(bytes.substr(0, bytes.size() - 9)), CheckpointError);
  auto flipped = bytes;
  flipped[40] ^= 0x5a;
  EXPECT_THROW(load_params(flipped), CheckpointError);
  auto ver = bytes;
  ver[4] = 9;
  try {
    load_params(ver);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  ParamStore wrong;
  Linear lin3(wrong, "l", 3, 5);
  EXPECT_THROW(load_params_into(wrong, bytes), CheckpointError);
}
