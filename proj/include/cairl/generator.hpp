#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cairl/mdp.hpp"

namespace cairl {

struct GeneratorSolution {
  TabularPolicy policy;
  QTable q_values;
  Vector<double> values;
  /// log policy(a|s) = (Q(s,a) - V(s)) / alpha, finite everywhere.
  Table<double> log_policy;
};

/// Soft-optimal policy under `learned_reward`; `warm_start` seeds the value sweep.
GeneratorSolution solve_generator_exact(const TabularMdp& mdp, const Reward& learned_reward, double alpha,
                                        const PlanningOptions& options = {},
                                        const Vector<double>* warm_start = nullptr);

/// Greedy policy mixed with epsilon / |A| uniform mass (hard value iteration variant).
GeneratorSolution solve_generator_hard(const TabularMdp& mdp, const Reward& learned_reward, double epsilon,
                                       const PlanningOptions& options = {});

/// Smoothed l1: x^2 / 2 inside [-kappa, kappa], kappa (|x| - kappa / 2) outside.
inline double huber(double x, double kappa = 1.0) {
  const double ax = std::abs(x);
  return ax <= kappa ? 0.5 * x * x : kappa * (ax - 0.5 * kappa);
}
inline double huber_gradient(double x, double kappa = 1.0) { return std::clamp(x, -kappa, kappa); }

/// sum_a pi(a|s) (Q(s,a) - alpha log pi(a|s)) for pi = softmax(Q / alpha); equals alpha * logsumexp(Q / alpha).
Vector<double> soft_state_values(const QTable& q, double alpha);

struct SoftQConfig {
  double alpha = 0.5;
  /// Weight of the loss on simulated one-step transitions.
  double delta_sim = 0.5;
  /// Initial weight of KL(pi_Q || pi_bc); decays linearly to zero at epochs / 2.
  double bc_lambda0 = 10.0;
  bool bc_decay = true;
  /// Step size of the preconditioned full-batch gradient step, in (0, 1].
  double learning_rate = 0.5;
  /// One epoch = `sync_rate` gradient steps against a frozen target snapshot.
  int epochs = 100;
  int sync_rate = 200;
  double huber_kappa = 1.0;
  double initial_q = 0.0;
  /// Replace the per-epoch action draw by its expectation under the current
  /// policy: every expert state spreads delta_sim * pi(a|s) over all actions.
  bool expected_simulation = false;

  void validate() const;
};

struct SoftQResult {
  QTable q_values;
  TabularPolicy policy;
  /// Mean loss at the end of each epoch.
  std::vector<double> loss_history;
};

/**
 * Tabular soft-Q learning from logged transitions. Each expert transition
 * contributes a Huber TD loss against r(s,a,s') + gamma V_target(s'). Each epoch
 * also draws one action per expert transition from the current policy: when it
 * matches the logged action the logged next state is reused, otherwise the
 * target is the expectation under `transition_model`; these simulated terms are
 * weighted by `delta_sim`. A KL(pi_Q || bc_policy) penalty over batch states
 * anchors the policy early in training.
 */
SoftQResult soft_q_learn(const TrajectoryBatch& expert, const TabularMdp& transition_model,
                         const Reward& learned_reward, const TabularPolicy& bc_policy,
                         const SoftQConfig& config, std::uint64_t seed);

void write_q_table(const std::string& path, const QTable& q);

}  // namespace cairl
