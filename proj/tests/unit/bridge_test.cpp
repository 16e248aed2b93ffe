//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gradcheck.h"
#include "madgen/bridge.h"
#include "madgen/error.h"

namespace {

using namespace madgen;
using nn::Mat;

NoiseSchedule random_schedule(int T, Rng &rng) {
  std::vector<double> a(T);
  for (auto &x: a)
    x = 0.5 + 0.5 * uniform01(rng);
  return make_schedule(a);
}

// Explicit product Q_t ... Q_0, built from scratch.
Eigen::MatrixXd explicit_product(const NoiseSchedule &s, int t, int e_T, int D) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(D, D);
  for (int k = 0; k <= t; ++k) {
    Eigen::MatrixXd q(D, D);
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        q(i, j) = s.alphas[k] * (i == j) + (1 - s.alphas[k]) * (i == e_T);
    m = q * m;
  }
  return m;
}

// KL(Q(e_T) e_t || Q(softmax z) e_t) straight from the definition.
double kl_oracle(double alpha, int e_t, int e_T, const Eigen::RowVectorXd &z) {
  const int D = static_cast<int>(z.size());
  Eigen::VectorXd s = (z.array() - z.maxCoeff()).exp();
  s /= s.sum();
  Eigen::VectorXd cur = Eigen::VectorXd::Zero(D);
  cur[e_t] = 1;
  Eigen::VectorXd q = transition_matrix(alpha, e_T, D) * cur;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(D);
  for (int c = 0; c < D; ++c)
    p += s[c] * (transition_matrix(alpha, c, D) * cur);
  double kl = 0;
  for (int c = 0; c < D; ++c)
    if (q[c] > 0)
      kl += q[c] * std::log(q[c] / p[c]);
  return kl;
}

TEST(Schedule, CosineProperties) {
  for (int T: { 2, 10, 50, 100 }) {
    auto s = cosine_schedule(T);
    EXPECT_NEAR(cosine_curve(0, T), 1.0, 1e-9);
    EXPECT_EQ(s.alphas.back(), 0.0);
    for (double a: s.alphas) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
    for (int t = 1; t < T; ++t)
      EXPECT_LE(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
  for (int t = 1; t <= 50; ++t)
    EXPECT_LT(cosine_curve(t, 50), cosine_curve(t - 1, 50));
}

TEST(Transition, Examples) {
  EXPECT_TRUE(transition_matrix(1.0, 3).isApprox(Eigen::MatrixXd::Identity(5, 5)));
  auto absorb = transition_matrix(0.0, 2);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i)
      EXPECT_EQ(absorb(i, j), i == 2 ? 1.0 : 0.0);
  Eigen::MatrixXd expect(2, 2);
  expect << 0.5, 0.0, 0.5, 1.0;
  EXPECT_TRUE(transition_matrix(0.5, 1, 2).isApprox(expect));
}

TEST(Marginal, MatchesExplicitProduct) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 2 + static_cast<int>(rng() % 20);
    const int D = 2 + static_cast<int>(rng() % 4);
    const int t = static_cast<int>(rng() % T);
    const int e_T = static_cast<int>(rng() % D);
    auto s = random_schedule(T, rng);
    auto closed = marginal_matrix(s, t, e_T, D);
    EXPECT_LE((closed - explicit_product(s, t, e_T, D)).cwiseAbs().maxCoeff(),
              1e-10);
    EXPECT_LE((closed.colwise().sum().array() - 1).abs().maxCoeff(), 1e-12);
    EXPECT_GE(closed.minCoeff(), 0.0);
  }
  auto s = cosine_schedule(50);
  EXPECT_TRUE(marginal_matrix(s, 0, 1).isApprox(transition_matrix(s.alphas[0], 1)));
  EXPECT_THROW(marginal_matrix(s, 50, 1), ShapeError);
}

TEST(SampleIntermediate, MonteCarlo) {
  auto s = make_schedule({ 0.3, 0.5, 0.0 });
  Rng rng(5);
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    hits += sample_intermediate(s, 0, 0, 3, rng) == 3;
  EXPECT_NEAR(hits / static_cast<double>(n), 0.7, 0.01);
  auto id = make_schedule({ 1.0, 1.0, 0.0 });
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_intermediate(id, 1, 0, 4, rng), 0);
    EXPECT_EQ(sample_intermediate(id, 2, 0, 4, rng), 4);
  }
}

TEST(EdgeTensor, PairIndexing) {
  EdgeStateTensor e(6);
  EXPECT_EQ(e.num_pairs(), 15);
  int p = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      EXPECT_EQ(e.pair_index(i, j), p);
      EXPECT_EQ(e.pair_index(j, i), p);
      EXPECT_EQ(e.pair_atoms(p), std::make_pair(i, j));
      ++p;
    }
}

EdgeStateTensor random_tensor(int n, Rng &rng, bool freeze) {
  EdgeStateTensor e(n);
  for (int p = 0; p < e.num_pairs(); ++p) {
    e.set_state(p, static_cast<int>(rng() % kEdgeClasses));
    if (freeze && rng() % 3 == 0)
      e.set_frozen(p, true);
  }
  return e;
}

Mat random_logits(int rows, Rng &rng, double spread = 3) {
  Mat z(rows, kEdgeClasses);
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z.data()[i] = spread * (2 * uniform01(rng) - 1);
  return z;
}

TEST(Elbo, PerfectPredictorIsExactlyZero) {
  Rng rng(3);
  auto s = cosine_schedule(50);
  for (int trial = 0; trial < 50; ++trial) {
    auto target = random_tensor(6, rng, true);
    auto e_t = target;
    for (int p: e_t.free_pairs())
      if (rng() % 2)
        e_t.set_state(p, static_cast<int>(rng() % kEdgeClasses));
    const auto &free = e_t.free_pairs();
    Mat z = Mat::Constant(static_cast<int>(free.size()), kEdgeClasses, -1e4);
    for (std::size_t r = 0; r < free.size(); ++r)
      z(static_cast<Eigen::Index>(r), target.state(free[r])) = 0;
    for (int t = 0; t < 50; ++t)
      EXPECT_EQ(elbo_loss(s, nn::constant(z), target, e_t, t).item(), 0.0);
  }
}

TEST(Elbo, NonNegativeAndMatchesDefinition) {
  Rng rng(4);
  auto s = cosine_schedule(50);
  for (int trial = 0; trial < 1000; ++trial) {
    auto target = random_tensor(5, rng, trial % 2 == 0);
    auto e_t = random_tensor(5, rng, false);
    for (int p = 0; p < target.num_pairs(); ++p)
      e_t.set_frozen(p, target.frozen(p));
    const int t = static_cast<int>(rng() % 50);
    Mat z = random_logits(static_cast<int>(e_t.free_pairs().size()), rng);
    const double loss = elbo_loss(s, nn::constant(z), target, e_t, t).item();
    EXPECT_GE(loss, 0.0);
    if (trial % 20 == 0 && !e_t.free_pairs().empty()) {
      double expect = 0;
      const auto &free = e_t.free_pairs();
      for (std::size_t r = 0; r < free.size(); ++r)
        expect += kl_oracle(s.alphas[t], e_t.state(free[r]),
                            target.state(free[r]),
                            z.row(static_cast<Eigen::Index>(r)));
      expect *= 50.0 / static_cast<double>(free.size());
      EXPECT_NEAR(loss, expect, 1e-9 * std::max(1.0, expect));
    }
  }
}

TEST(Elbo, TwoClassHandEnumeration) {
  // alpha 0.5, current 0, endpoint 1, uniform prediction over {0, 1}:
  // q = (0.5, 0.5), p = (0.75, 0.25).
  const double kl = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  auto rows = bridge_kl_rows(nn::constant(Mat::Zero(1, 2)), { 0 }, { 1 }, { 0.5 });
  EXPECT_NEAR(rows.item(), kl, 1e-15);
  auto s = make_schedule({ 0.5, 0.0 });
  EdgeStateTensor target(2), cur(2);
  target.set_state(0, 1);
  Mat z = Mat::Constant(1, kEdgeClasses, -1e4);
  z(0, 0) = z(0, 1) = 0;
  EXPECT_NEAR(elbo_loss(s, nn::constant(z), target, cur, 0).item(), 2 * kl,
              1e-12);
}

TEST(Elbo, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto s = cosine_schedule(50);
  for (int trial = 0; trial < 20; ++trial) {
    auto target = random_tensor(5, rng, false);
    auto e_t = random_tensor(5, rng, false);
    const int t = static_cast<int>(rng() % 50);
    auto r = madgen::testing::gradcheck(
        [&](const std::vector<nn::Var> &v) {
          return elbo_loss(s, v[0], target, e_t, t);
        },
        { random_logits(e_t.num_pairs(), rng) }, 1e-6);
    EXPECT_LE(r.max_rel_err, 1e-3) << "trial " << trial;
  }
}

TEST(Elbo, ShapeMismatch) {
  auto s = cosine_schedule(10);
  EdgeStateTensor a(4), b(4);
  EXPECT_THROW(elbo_loss(s, nn::constant(Mat::Zero(3, 5)), a, b, 0), ShapeError);
}

TEST(Trajectory, FixedEndpointIsAbsorbed) {
  Rng rng(7);
  auto s = cosine_schedule(50);
  auto target = random_tensor(6, rng, true);
  EdgeStateTensor start = target;
  for (int p: start.free_pairs())
    start.set_state(p, 0);
  auto predictor = [&](const EdgeStateTensor &st, int) {
    Mat z = Mat::Constant(static_cast<int>(st.free_pairs().size()), kEdgeClasses,
                          -1e9);
    for (std::size_t r = 0; r < st.free_pairs().size(); ++r)
      z(static_cast<Eigen::Index>(r), target.state(st.free_pairs()[r])) = 0;
    return z;
  };
  for (int run = 0; run < 200; ++run)
    EXPECT_EQ(sample_trajectory(s, start, predictor, rng), target);
}

TEST(Trajectory, NoFreePairs) {
  Rng rng(8);
  EdgeStateTensor e(3);
  for (int p = 0; p < 3; ++p)
    e.set_frozen(p, true);
  e.set_state(0, 1);
  int calls = 0;
  auto out = sample_trajectory(cosine_schedule(5), e,
                               [&](const EdgeStateTensor &, int) {
                                 ++calls;
                                 return Mat();
                               },
                               rng);
  EXPECT_EQ(out, e);
  EXPECT_EQ(calls, 0);
}

TEST(Trajectory, UniformTwoClassTerminal) {
  Rng rng(9);
  auto s = cosine_schedule(3);
  EdgeStateTensor start(3);
  auto uniform = [](const EdgeStateTensor &st, int) {
    Mat z = Mat::Constant(static_cast<int>(st.free_pairs().size()), kEdgeClasses,
                          -1e9);
    z.col(0).setZero();
    z.col(1).setZero();
    return z;
  };
  std::vector<int> ones(3, 0);
  const int runs = 10000;
  for (int r = 0; r < runs; ++r) {
    auto out = sample_trajectory(s, start, uniform, rng);
    for (int p = 0; p < 3; ++p)
      ones[p] += out.state(p);
  }
  for (int p = 0; p < 3; ++p)
    EXPECT_NEAR(ones[p] / static_cast<double>(runs), 0.5, 0.02);
}

TEST(Trajectory, FrozenPairsNeverChange) {
  Rng rng(10);
  auto s = cosine_schedule(20);
  auto start = random_tensor(7, rng, true);
  for (int p: start.free_pairs())
    start.set_state(p, 0);
  auto check = [&](const EdgeStateTensor &st, int) {
    for (int p = 0; p < st.num_pairs(); ++p)
      if (st.frozen(p))
        EXPECT_EQ(st.state(p), start.state(p));
    return random_logits(static_cast<int>(st.free_pairs().size()), rng);
  };
  for (int run = 0; run < 20; ++run) {
    auto out = sample_trajectory(s, start, check, rng);
    check(out, 0);
  }
}

TEST(Trajectories, IndependentOfBatchingAndDedup) {
  auto s = cosine_schedule(30);
  EdgeStateTensor start(5);
  int calls = 0;
  BatchEndpointPredictor pred = [&](const std::vector<const EdgeStateTensor *> &xs,
                                    int t) {
    std::vector<Mat> out;
    for (const auto *x: xs) {
      ++calls;
      Mat z(static_cast<int>(x->free_pairs().size()), kEdgeClasses);
      for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (int c = 0; c < kEdgeClasses; ++c)
          z(r, c) = std::sin(1.0 + r * 0.7 + c * 1.3 + t * 0.1
                             + x->state(static_cast<int>(r)));
      out.push_back(z);
    }
    return out;
  };
  std::vector<std::uint64_t> seeds(40);
  std::iota(seeds.begin(), seeds.end(), 100);
  auto all = sample_trajectories(s, start, pred, seeds);
  EXPECT_LT(calls, 40 * 30);  // early steps share the empty state
  std::vector<std::uint64_t> sub(seeds.begin() + 10, seeds.begin() + 13);
  auto part = sample_trajectories(s, start, pred, sub);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(part[i].terminal, all[10 + i].terminal);
    EXPECT_DOUBLE_EQ(part[i].log_likelihood, all[10 + i].log_likelihood);
  }
  for (const auto &tr: all)
    EXPECT_LE(tr.log_likelihood, 0.0);
}

}  // namespace
