#pragma once

#include <vector>

#include "cairl/mdp.hpp"

namespace cairl {

/// Laplace-smoothed count estimate of the logging policy.
struct BehaviorPolicyEstimate {
  TabularPolicy policy;
  double smoothing = 0.0;
  /// Visit counts per state.
  std::vector<double> state_counts;
};

struct MarginalActionDist {
  Vector<double> probs;
};

/// One weight per logged transition, in batch order (trajectory by trajectory).
struct IptwWeights {
  std::vector<double> weights;
  double clip_max = 10.0;

  double mean() const;
};

/// Row-stochastic (state, action) -> next-state table; unseen pairs self-loop.
struct EstimatedTransition {
  Index num_states = 0;
  Index num_actions = 0;
  TransitionMatrix<double> probs;
  /// Unweighted visit count of every (state, action) pair, row index s * A + a.
  std::vector<double> visits;

  double probability(Index s, Index a, Index s_next) const {
    return probs.coeff(s * num_actions + a, s_next);
  }
  bool seen(Index s, Index a) const { return visits[static_cast<std::size_t>(s * num_actions + a)] > 0; }
};

/// probs(s, a) = (count(s, a) + smoothing) / (count(s) + smoothing * |A|). A
/// state without visits (and without smoothing) gets a uniform row.
BehaviorPolicyEstimate fit_behavior_policy(const TrajectoryBatch& batch, Index num_states,
                                           Index num_actions, double smoothing);

MarginalActionDist fit_marginal_actions(const TrajectoryBatch& batch, Index num_actions);

/// Stabilized weights w = min(P(a) / pi_hat(a | s), clip_max).
IptwWeights compute_iptw_weights(const TrajectoryBatch& batch, const BehaviorPolicyEstimate& behavior,
                                 const MarginalActionDist& marginal, double clip_max = 10.0);

/// Weighted MLE: probs(s' | s, a) proportional to the summed weights of matching
/// transitions plus `smoothing` on every next state. `weights == nullptr` means
/// unit weights.
EstimatedTransition fit_transition_model(const TrajectoryBatch& batch, Index num_states,
                                         Index num_actions, const IptwWeights* weights,
                                         double smoothing);

/// The base MDP (initial distribution, discount, horizon, terminals) with an
/// estimated kernel. Terminal rows are kept as self-loops.
TabularMdp with_estimated_transitions(const TabularMdp& base, const EstimatedTransition& estimate);

/// Total-variation distance between the estimated and true rows of (s, a).
double row_total_variation(const TabularMdp& truth, const EstimatedTransition& estimate, Index s, Index a);

namespace sepsis {

/**
 * Factored weighted MLE for the sepsis simulator: each vital's next level is
 * estimated from (level, action, diabetes) cells pooled over the other state
 * coordinates, and the joint row is their product. Treatment flags follow the
 * action and diabetes is static. Cells without data keep the vital unchanged.
 */
EstimatedTransition fit_factored_transitions(const TrajectoryBatch& batch, const IptwWeights* weights,
                                             double smoothing);

}  // namespace sepsis

}  // namespace cairl
