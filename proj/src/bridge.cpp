//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/bridge.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "madgen/error.h"

namespace madgen {

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t >= steps())
    throw ShapeError("step " + std::to_string(t) + " outside schedule");
  double a = 1.0;
  for (int k = 0; k <= t; ++k)
    a *= alphas[k];
  return a;
}

double cosine_curve(double t, int T, double s) {
  auto f = [&](double x) {
    const double c = std::cos((x / T + s) / (1 + s) * std::numbers::pi / 2);
    return c * c;
  };
  return f(t) / f(0);
}

NoiseSchedule cosine_schedule(int T) {
  if (T < 2)
    throw ConfigError("schedule needs at least 2 steps");
  std::vector<double> alphas(T);
  for (int t = 0; t < T; ++t)
    alphas[t] = std::clamp(cosine_curve(t + 1, T) / cosine_curve(t, T), 0.0, 1.0);
  return make_schedule(std::move(alphas));
}

NoiseSchedule make_schedule(std::vector<double> alphas) {
  if (alphas.size() < 2)
    throw ConfigError("schedule needs at least 2 steps");
  for (double a: alphas)
    if (!(a >= 0 && a <= 1))
      throw ConfigError("schedule alphas must lie in [0, 1]");
  // Absorb into the endpoint on the last step.
  alphas.back() = 0.0;
  return NoiseSchedule { std::move(alphas) };
}

StochasticMatrix transition_matrix(double alpha, int endpoint, int classes) {
  if (endpoint < 0 || endpoint >= classes)
    throw ShapeError("endpoint class out of range");
  StochasticMatrix q = alpha * StochasticMatrix::Identity(classes, classes);
  q.row(endpoint).array() += 1 - alpha;
  return q;
}

StochasticMatrix marginal_matrix(const NoiseSchedule &schedule, int t,
                                 int endpoint, int classes) {
  return transition_matrix(schedule.alpha_bar(t), endpoint, classes);
}

int sample_intermediate(const NoiseSchedule &schedule, int t, int start,
                        int endpoint, Rng &rng) {
  return uniform01(rng) < schedule.alpha_bar(t) ? start : endpoint;
}

// ---------------------------------------------------------------------------

EdgeStateTensor::EdgeStateTensor(int n_atoms): n_(n_atoms) {
  const int pairs = n_atoms * (n_atoms - 1) / 2;
  states_.assign(pairs, 0);
  frozen_.assign(pairs, 0);
  free_.resize(pairs);
  for (int p = 0; p < pairs; ++p)
    free_[p] = p;
}

int EdgeStateTensor::pair_index(int i, int j) const {
  if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_)
    throw ShapeError("invalid atom pair");
  if (i > j)
    std::swap(i, j);
  return i * n_ - i * (i + 1) / 2 + (j - i - 1);
}

std::pair<int, int> EdgeStateTensor::pair_atoms(int p) const {
  int i = 0;
  int row = n_ - 1;
  while (p >= row) {
    p -= row;
    ++i;
    --row;
  }
  return { i, i + 1 + p };
}

void EdgeStateTensor::set_frozen(int p, bool f) {
  frozen_[p] = f ? 1 : 0;
  free_.clear();
  for (int k = 0; k < num_pairs(); ++k)
    if (frozen_[k] == 0)
      free_.push_back(k);
}

// ---------------------------------------------------------------------------

nn::Var bridge_kl_rows(const nn::Var &logits, const std::vector<int> &current,
                       const std::vector<int> &target,
                       const std::vector<double> &alpha) {
  const nn::Mat &z = logits.value();
  const auto rows = z.rows(), d = z.cols();
  if (static_cast<Eigen::Index>(current.size()) != rows
      || static_cast<Eigen::Index>(target.size()) != rows
      || static_cast<Eigen::Index>(alpha.size()) != rows)
    throw ShapeError("bridge KL: one state per logit row required");

  nn::Mat s(rows, d), logs(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double m = z.row(r).maxCoeff();
    logs.row(r) = z.row(r).array() - m;
    const double lse = std::log(logs.row(r).array().exp().sum());
    logs.row(r).array() -= lse;
    s.row(r) = logs.row(r).array().exp();
  }

  // q = a e_cur + (1-a) e_tgt, p = a e_cur + (1-a) softmax. The log1p forms
  // make a perfect prediction give exactly zero.
  nn::Mat kl(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double a = alpha[r];
    const int b = current[r], c = target[r];
    if (b == c) {
      kl(r, 0) = -std::log1p((1 - a) * (s(r, b) - 1));
    } else {
      double v = 0;
      if (a > 0)
        v -= a * std::log1p((1 - a) * s(r, b) / a);
      if (a < 1)
        v -= (1 - a) * logs(r, c);
      kl(r, 0) = v;
    }
  }

  return nn::custom(std::move(kl), { logits },
                    [s, current, target, alpha](const nn::Mat &g) {
                      nn::Mat dz = nn::Mat::Zero(s.rows(), s.cols());
                      for (Eigen::Index r = 0; r < s.rows(); ++r) {
                        const double a = alpha[r];
                        const int b = current[r], c = target[r];
                        // dKL/ds for the entries that carry mass in q.
                        Eigen::RowVectorXd ds =
                            Eigen::RowVectorXd::Zero(s.cols());
                        if (b == c) {
                          ds[b] = -(1 - a) / (a + (1 - a) * s(r, b));
                        } else {
                          if (a > 0)
                            ds[b] = -a * (1 - a) / (a + (1 - a) * s(r, b));
                          if (a < 1)
                            ds[c] += -(1 - a) / s(r, c);
                        }
                        const double dot = ds.dot(s.row(r));
                        dz.row(r) = g(r, 0)
                                    * s.row(r).cwiseProduct(
                                        (ds.array() - dot).matrix());
                      }
                      return std::vector<nn::Mat> { dz };
                    });
}

nn::Var elbo_loss(const NoiseSchedule &schedule, const nn::Var &logits,
                  const EdgeStateTensor &target, const EdgeStateTensor &e_t,
                  int t) {
  if (t < 0 || t >= schedule.steps())
    throw ShapeError("step outside schedule");
  if (target.num_pairs() != e_t.num_pairs())
    throw ShapeError("target and current edge tensors differ in size");
  const auto &free = e_t.free_pairs();
  if (logits.rows() != static_cast<Eigen::Index>(free.size())
      || (logits.rows() > 0 && logits.cols() != kEdgeClasses))
    throw ShapeError("elbo: logits must be (free pairs) x classes");
  if (free.empty())
    return nn::constant(nn::Mat::Zero(1, 1));
  std::vector<int> cur, tgt;
  for (int p: free) {
    cur.push_back(e_t.state(p));
    tgt.push_back(target.state(p));
  }
  std::vector<double> alpha(free.size(), schedule.alphas[t]);
  auto kl = bridge_kl_rows(logits, cur, tgt, alpha);
  return nn::scale(nn::sum(kl), static_cast<double>(schedule.steps())
                                    / static_cast<double>(free.size()));
}

EdgeStateTensor sample_training_state(const NoiseSchedule &schedule, int t,
                                      const EdgeStateTensor &start,
                                      const EdgeStateTensor &target, Rng &rng) {
  EdgeStateTensor out = start;
  if (t == 0)
    return out;
  for (int p: start.free_pairs())
    out.set_state(p, sample_intermediate(schedule, t - 1, start.state(p),
                                         target.state(p), rng));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

nn::Mat softmax(const nn::Mat &z) {
  nn::Mat s(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    s.row(r) = (z.row(r).array() - z.row(r).maxCoeff()).exp();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

// One bridge step for a single trajectory; returns the log transition prob.
double step_state(EdgeStateTensor &state, const nn::Mat &probs, double alpha,
                  const EndpointDraw &draw, Rng &rng) {
  const auto &free = state.free_pairs();
  std::vector<int> endpoint =
      draw ? draw(state, probs, rng) : draw_independent(probs, rng);
  double ll = 0;
  for (std::size_t r = 0; r < free.size(); ++r) {
    const int p = free[r];
    const int old = state.state(p);
    const int next = uniform01(rng) < alpha ? old : endpoint[r];
    const double q = alpha * (next == old ? 1.0 : 0.0)
                     + (1 - alpha) * probs(static_cast<Eigen::Index>(r), next);
    ll += std::log(std::max(q, 1e-300));
    state.set_state(p, next);
  }
  return ll;
}

}  // namespace

std::vector<int> draw_independent(const nn::Mat &probs, Rng &rng) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    double u = uniform01(rng);
    int c = 0;
    for (; c < probs.cols() - 1; ++c) {
      u -= probs(r, c);
      if (u < 0)
        break;
    }
    out[static_cast<std::size_t>(r)] = c;
  }
  return out;
}

EdgeStateTensor sample_trajectory(const NoiseSchedule &schedule,
                                  const EdgeStateTensor &start,
                                  const EndpointPredictor &predictor, Rng &rng) {
  EdgeStateTensor state = start;
  if (state.free_pairs().empty())
    return state;
  for (int t = 0; t < schedule.steps(); ++t) {
    nn::Mat probs = softmax(predictor(state, t));
    if (probs.rows() != static_cast<Eigen::Index>(state.free_pairs().size()))
      throw ShapeError("predictor returned wrong number of rows");
    step_state(state, probs, schedule.alphas[t], nullptr, rng);
  }
  return state;
}

std::vector<Trajectory>
sample_trajectories(const NoiseSchedule &schedule, const EdgeStateTensor &start,
                    const BatchEndpointPredictor &predictor,
                    const std::vector<std::uint64_t> &seeds,
                    const EndpointDraw &draw) {
  std::vector<Trajectory> out(seeds.size(), Trajectory { start, 0.0 });
  if (start.free_pairs().empty() || seeds.empty())
    return out;
  std::vector<Rng> rngs;
  for (auto s: seeds)
    rngs.emplace_back(s);

  for (int t = 0; t < schedule.steps(); ++t) {
    std::map<std::vector<std::int8_t>, int> unique;
    std::vector<const EdgeStateTensor *> reps;
    std::vector<int> slot(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto [it, fresh] = unique.emplace(out[i].terminal.states(),
                                        static_cast<int>(reps.size()));
      if (fresh)
        reps.push_back(&out[i].terminal);
      slot[i] = it->second;
    }
    auto logits = predictor(reps, t);
    if (logits.size() != reps.size())
      throw ShapeError("batch predictor returned wrong number of outputs");
    std::vector<nn::Mat> probs;
    probs.reserve(logits.size());
    for (const auto &z: logits) {
      if (z.rows() != static_cast<Eigen::Index>(start.free_pairs().size()))
        throw ShapeError("predictor returned wrong number of rows");
      probs.push_back(softmax(z));
    }
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i].log_likelihood += step_state(out[i].terminal, probs[slot[i]],
                                          schedule.alphas[t], draw, rngs[i]);
  }
  return out;
}

}  // namespace madgen
