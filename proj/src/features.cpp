#include "cairl/features.hpp"

#include "cairl/sepsis.hpp"

namespace cairl {

Eigen::VectorXd EnvironmentFeatures::reward_features(Index s, double noise) const {
  Eigen::VectorXd x = reward_table.row(s).transpose();
  if (has_noise()) x(noise_column) = noise;
  return x;
}

std::vector<double> EnvironmentFeatures::noise_nodes() const {
  if (!has_noise()) return {0.5};
  const FeatureSpec& spec = reward_specs[static_cast<std::size_t>(noise_column)];
  std::vector<double> nodes;
  for (int b = 0; b < spec.num_bins(); ++b) nodes.push_back(spec.bin_value(b));
  return nodes;
}

double EnvironmentFeatures::noise_mean() const {
  if (!has_noise()) return 0.0;
  const FeatureSpec& spec = reward_specs[static_cast<std::size_t>(noise_column)];
  return 0.5 * (spec.lo + spec.hi);
}

Vector<double> expected_state_reward(const RewardModel& model, const EnvironmentFeatures& env) {
  const Index S = env.num_states();
  if (!env.has_noise()) return forward_batch(model, env.reward_table);
  const std::vector<double> nodes = env.noise_nodes();
  FeatureMatrix x = env.reward_table;
  Vector<double> total = Vector<double>::Zero(S);
  for (double node : nodes) {
    x.col(env.noise_column).setConstant(node);
    total += forward_batch(model, x);
  }
  return total / static_cast<double>(nodes.size());
}

FeatureMatrix mean_reward_features(const EnvironmentFeatures& env) {
  FeatureMatrix x = env.reward_table;
  if (env.has_noise()) x.col(env.noise_column).setConstant(env.noise_mean());
  return x;
}

namespace sepsis {

EnvironmentFeatures environment_features(bool noise_per_timestep, int noise_bins) {
  EnvironmentFeatures env;
  for (int v = 0; v < kNumVitals; ++v)
    env.reward_specs.push_back(FeatureSpec::discrete(kVitalNames[static_cast<std::size_t>(v)],
                                                     kVitalLevels[static_cast<std::size_t>(v)]));
  env.reward_specs.push_back(FeatureSpec::continuous("noise", noise_bins));
  env.noise_column = kNoiseFeature;
  env.state_specs = env.reward_specs;
  env.state_specs.pop_back();
  env.state_specs.push_back(FeatureSpec::discrete("diabetes", 2));
  env.state_specs.push_back(FeatureSpec::discrete("antibiotics", 2));
  env.state_specs.push_back(FeatureSpec::discrete("ventilation", 2));
  env.state_specs.push_back(FeatureSpec::discrete("vasopressors", 2));

  env.reward_table.resize(kNumStates, kNumRewardFeatures);
  env.state_table.resize(kNumStates, kNumStateFeatures);
  for (Index id = 0; id < kNumStates; ++id) {
    const State s = decode_state(id);
    env.reward_table.row(id) = encode_features(s, 0.5).transpose();
    env.state_table.row(id) = encode_state_features(s).transpose();
  }
  env.occurrence_noise = [noise_per_timestep](std::uint64_t trajectory_seed, int timestep) {
    return noise_value(occurrence_seed(trajectory_seed, timestep, noise_per_timestep));
  };
  return env;
}

}  // namespace sepsis

}  // namespace cairl
