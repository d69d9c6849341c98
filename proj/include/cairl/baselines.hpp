#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cairl/features.hpp"
#include "cairl/mdp.hpp"

namespace cairl {

/// Discounted expected feature sums.
using FeatureExpectations = Eigen::VectorXd;

/// phi(s) (MMA) or E[phi(s') | s, a] under the dynamics (counterfactual variant).
enum class MmaFeatureMode { CurrentState, ExpectedNextState };
std::string to_string(MmaFeatureMode mode);

struct MmaConfig {
  double epsilon = 0.05;
  int max_iters = 50;
  MmaFeatureMode feature_map_mode = MmaFeatureMode::CurrentState;
  PlanningOptions planning{1e-8, 10000};

  void validate() const;
};

/// Exact feature expectations over the horizon by forward propagation of the
/// state distribution; `features` holds one row per state.
FeatureExpectations feature_expectations(const TabularMdp& mdp, const TabularPolicy& policy,
                                         const FeatureMatrix& features, MmaFeatureMode mode);

/// Empirical feature expectations of logged trajectories. A trajectory that
/// ends in an absorbing terminal state before the horizon keeps accruing that
/// state's features until the horizon. Per-occurrence noise is used for
/// CurrentState; ExpectedNextState uses the noise mean.
FeatureExpectations expert_feature_expectations(const TabularMdp& mdp, const TrajectoryBatch& expert,
                                                const EnvironmentFeatures& env, MmaFeatureMode mode);

struct MmaResult {
  /// Reward weights that produced `policy`.
  Eigen::VectorXd weights;
  TabularPolicy policy;
  /// margins[i] = ||mu_E - mu_bar|| after iteration i (iteration 0 is the initial candidate).
  std::vector<double> margins;
  bool converged = false;
  /// Feature expectations of the returned policy and of the expert.
  FeatureExpectations policy_mu;
  FeatureExpectations expert_mu;
};

/// Linear reward r = w . phi as a planner reward for the given feature mode.
Reward linear_feature_reward(const FeatureMatrix& features, const Eigen::VectorXd& w, MmaFeatureMode mode);

/**
 * Abbeel-Ng projection method. Returns the candidate whose feature
 * expectations are closest to the expert's; `converged` is false when
 * `max_iters` is exhausted before the margin reaches epsilon.
 */
MmaResult mma_solve(const TabularMdp& mdp, const FeatureExpectations& expert_mu, const FeatureMatrix& features,
                    const MmaConfig& config, std::uint64_t seed, const TabularPolicy* initial_policy = nullptr);
MmaResult mma_solve(const TabularMdp& mdp, const TrajectoryBatch& expert, const EnvironmentFeatures& env,
                    const MmaConfig& config, std::uint64_t seed, const TabularPolicy* initial_policy = nullptr);

/// Laplace-smoothed count estimate of the expert's action distribution.
TabularPolicy behavior_clone(const TrajectoryBatch& expert, Index num_states, Index num_actions,
                             double smoothing);

void write_margins(const std::string& path, const std::vector<double>& margins);

}  // namespace cairl
