//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_BRIDGE_H_
#define MADGEN_BRIDGE_H_

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "madgen/nn.h"
#include "madgen/random.h"

namespace madgen {

// Edge classes: 0 = no bond, then single, double, triple, aromatic.
inline constexpr int kEdgeClasses = 5;
inline constexpr int kDefaultSteps = 50;
inline constexpr double kCosineOffset = 0.008;

struct NoiseSchedule {
  std::vector<double> alphas;  // per-step keep probability, alphas.back() == 0

  int steps() const { return static_cast<int>(alphas.size()); }
  // Cumulative keep probability through step t inclusive.
  double alpha_bar(int t) const;
};

// Closed-form cosine curve at step t of T, normalized to 1 at t = 0.
double cosine_curve(double t, int T, double s = kCosineOffset);
NoiseSchedule cosine_schedule(int T = kDefaultSteps);
// Validates arbitrary per-step alphas and forces the last one to zero.
NoiseSchedule make_schedule(std::vector<double> alphas);

using StochasticMatrix = Eigen::MatrixXd;

// Column-stochastic: column j is the distribution of the next state given
// current state j.
StochasticMatrix transition_matrix(double alpha, int endpoint,
                                   int classes = kEdgeClasses);
StochasticMatrix marginal_matrix(const NoiseSchedule &schedule, int t,
                                 int endpoint, int classes = kEdgeClasses);

int sample_intermediate(const NoiseSchedule &schedule, int t, int start,
                        int endpoint, Rng &rng);

/// Edge categories over all unordered atom pairs of one molecule.
class EdgeStateTensor {
public:
  EdgeStateTensor() = default;
  explicit EdgeStateTensor(int n_atoms);

  int num_atoms() const { return n_; }
  int num_pairs() const { return static_cast<int>(states_.size()); }
  int pair_index(int i, int j) const;
  std::pair<int, int> pair_atoms(int p) const;

  int state(int p) const { return states_[p]; }
  void set_state(int p, int c) { states_[p] = static_cast<std::int8_t>(c); }
  bool frozen(int p) const { return frozen_[p] != 0; }
  void set_frozen(int p, bool f);

  // Pair indices that are not frozen, ascending.
  const std::vector<int> &free_pairs() const { return free_; }
  const std::vector<std::int8_t> &states() const { return states_; }

  friend bool operator==(const EdgeStateTensor &a, const EdgeStateTensor &b) {
    return a.n_ == b.n_ && a.states_ == b.states_ && a.frozen_ == b.frozen_;
  }

private:
  int n_ = 0;
  std::vector<std::int8_t> states_;
  std::vector<std::uint8_t> frozen_;
  std::vector<int> free_;
};

/// Per-row bridge KL between the true and predicted one-step posteriors.
/// logits: M x D; row r belongs to a pair with current state current[r],
/// true endpoint target[r] and step keep probability alpha[r].
nn::Var bridge_kl_rows(const nn::Var &logits, const std::vector<int> &current,
                       const std::vector<int> &target,
                       const std::vector<double> &alpha);

/// Steps x mean KL over the free pairs of one molecule at step t. Logit rows
/// follow e_t.free_pairs().
nn::Var elbo_loss(const NoiseSchedule &schedule, const nn::Var &logits,
                  const EdgeStateTensor &target, const EdgeStateTensor &e_t,
                  int t);

/// Training state at step t: the start state for t = 0, else a draw from the
/// marginal after steps 0..t-1.
EdgeStateTensor sample_training_state(const NoiseSchedule &schedule, int t,
                                      const EdgeStateTensor &start,
                                      const EdgeStateTensor &target, Rng &rng);

// Returns M x D logits for the free pairs of `state` at step t.
using EndpointPredictor =
    std::function<nn::Mat(const EdgeStateTensor &state, int t)>;
// Batched form: one logit matrix per state.
using BatchEndpointPredictor = std::function<std::vector<nn::Mat>(
    const std::vector<const EdgeStateTensor *> &states, int t)>;
// Draws the endpoint for every free pair from row-wise probabilities.
using EndpointDraw = std::function<std::vector<int>(
    const EdgeStateTensor &state, const nn::Mat &probs, Rng &rng)>;

std::vector<int> draw_independent(const nn::Mat &probs, Rng &rng);

EdgeStateTensor sample_trajectory(const NoiseSchedule &schedule,
                                  const EdgeStateTensor &start,
                                  const EndpointPredictor &predictor, Rng &rng);

struct Trajectory {
  EdgeStateTensor terminal;
  // Sum over steps and free pairs of log q(e_{t+1} | e_t, predicted endpoint).
  double log_likelihood = 0;
};

/// Runs one trajectory per seed. Identical intermediate states share a single
/// predictor call, so results depend only on the seeds.
std::vector<Trajectory>
sample_trajectories(const NoiseSchedule &schedule, const EdgeStateTensor &start,
                    const BatchEndpointPredictor &predictor,
                    const std::vector<std::uint64_t> &seeds,
                    const EndpointDraw &draw = nullptr);

}  // namespace madgen

#endif  // MADGEN_BRIDGE_H_
