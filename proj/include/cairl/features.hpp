#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cairl/mdp.hpp"
#include "cairl/reward_models.hpp"

namespace cairl {

/**
 * Per-state feature tables of an environment. The reward term reads
 * `reward_table` rows, with column `noise_column` (if any) replaced by the
 * noise value of the particular state occurrence; the shaping term reads
 * `state_table` rows.
 */
struct EnvironmentFeatures {
  std::vector<FeatureSpec> reward_specs;
  FeatureMatrix reward_table;
  int noise_column = -1;
  std::vector<FeatureSpec> state_specs;
  FeatureMatrix state_table;
  /// Noise of the state visited at `timestep` of the trajectory with `trajectory_seed`.
  std::function<double(std::uint64_t trajectory_seed, int timestep)> occurrence_noise;

  Index num_states() const { return reward_table.rows(); }
  bool has_noise() const { return noise_column >= 0; }

  /// Reward features of state s with the given noise value.
  Eigen::VectorXd reward_features(Index s, double noise) const;
  /// Quadrature nodes over the noise range (bin midpoints), or {0.5} without noise.
  std::vector<double> noise_nodes() const;
  /// Mean of the noise feature under occurrence sampling (uniform on [lo, hi]).
  double noise_mean() const;
};

/// Expectation of model(reward_features(s, noise)) over the noise, per state.
Vector<double> expected_state_reward(const RewardModel& model, const EnvironmentFeatures& env);

/// Reward feature rows of every state with the noise at its mean value.
FeatureMatrix mean_reward_features(const EnvironmentFeatures& env);

namespace sepsis {

/// Four vitals plus a 16-bin noise coordinate for the reward term; all eight
/// state coordinates for the shaping term.
EnvironmentFeatures environment_features(bool noise_per_timestep = true, int noise_bins = 16);

}  // namespace sepsis

}  // namespace cairl
