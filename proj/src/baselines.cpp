#include "cairl/baselines.hpp"

#include <cstdio>
#include <fstream>
#include <limits>

#include "cairl/transition_estimation.hpp"

namespace cairl {

std::string to_string(MmaFeatureMode mode) {
  return mode == MmaFeatureMode::CurrentState ? "current_state" : "expected_next_state";
}

void MmaConfig::validate() const {
  if (!(epsilon > 0)) throw ValidationError("MMA epsilon must be positive");
  if (max_iters < 0) throw ValidationError("MMA max_iters must be non-negative");
}

FeatureExpectations feature_expectations(const TabularMdp& mdp, const TabularPolicy& policy,
                                         const FeatureMatrix& features, MmaFeatureMode mode) {
  if (features.rows() != mdp.num_states()) throw ShapeError("feature table needs one row per state");
  const auto dists = state_distributions(mdp, policy);
  FeatureExpectations mu = FeatureExpectations::Zero(features.cols());
  double weight = 1.0;
  for (const auto& d : dists) {
    Vector<double> visit = d;
    if (mode == MmaFeatureMode::ExpectedNextState) {
      Table<double> occupancy = policy.probs().array().colwise() * d.array();
      Eigen::Map<const Vector<double>> flat(occupancy.data(), occupancy.size());
      visit = mdp.transitions().transpose() * flat;
    }
    mu.noalias() += weight * (features.transpose() * visit);
    weight *= mdp.discount();
  }
  return mu;
}

FeatureExpectations expert_feature_expectations(const TabularMdp& mdp, const TrajectoryBatch& expert,
                                                const EnvironmentFeatures& env, MmaFeatureMode mode) {
  if (expert.empty()) throw EmptyInputError("expert batch is empty");
  const FeatureMatrix mean_features = mean_reward_features(env);
  FeatureExpectations total = FeatureExpectations::Zero(env.reward_table.cols());
  const double gamma = mdp.discount();
  for (const auto& traj : expert) {
    auto phi = [&](Index s, int t) -> Eigen::VectorXd {
      if (mode == MmaFeatureMode::CurrentState && env.has_noise() && env.occurrence_noise)
        return env.reward_features(s, env.occurrence_noise(traj.seed, t));
      return mean_features.row(s).transpose();
    };
    double weight = 1.0;
    int t = 0;
    for (const auto& step : traj.steps) {
      if (mode == MmaFeatureMode::CurrentState) {
        total += weight * phi(step.state, t);
      } else {
        for (TransitionMatrix<double>::InnerIterator it(mdp.transitions(), mdp.row_index(step.state, step.action)); it;
             ++it)
          total += weight * it.value() * mean_features.row(it.col()).transpose();
      }
      weight *= gamma;
      ++t;
    }
    if (!traj.steps.empty() && mdp.is_terminal(traj.steps.back().next_state)) {
      const Index terminal = traj.steps.back().next_state;
      for (; t < mdp.horizon(); ++t) {
        total += weight * phi(terminal, t);
        weight *= gamma;
      }
    }
  }
  return total / static_cast<double>(expert.size());
}

Reward linear_feature_reward(const FeatureMatrix& features, const Eigen::VectorXd& w, MmaFeatureMode mode) {
  Vector<double> r = features * w;
  return mode == MmaFeatureMode::CurrentState ? Reward::state(std::move(r)) : Reward::next_state(std::move(r));
}

MmaResult mma_solve(const TabularMdp& mdp, const FeatureExpectations& expert_mu, const FeatureMatrix& features,
                    const MmaConfig& config, std::uint64_t seed, const TabularPolicy* initial_policy) {
  config.validate();
  if (expert_mu.size() != features.cols()) throw ShapeError("expert feature expectations have wrong length");
  const Index S = mdp.num_states(), A = mdp.num_actions();

  TabularPolicy candidate;
  if (initial_policy) {
    candidate = *initial_policy;
  } else {
    Rng rng(seed);
    std::vector<Index> actions(static_cast<std::size_t>(S));
    for (auto& a : actions) a = static_cast<Index>(uniform01(rng) * static_cast<double>(A)) % A;
    candidate = TabularPolicy::deterministic(actions, A);
  }

  MmaResult out;
  out.expert_mu = expert_mu;
  FeatureExpectations mu = feature_expectations(mdp, candidate, features, config.feature_map_mode);
  FeatureExpectations mu_bar = mu;
  Eigen::VectorXd w = expert_mu - mu_bar;
  double best_distance = (expert_mu - mu).norm();
  out.policy = candidate;
  out.policy_mu = mu;
  out.weights = Eigen::VectorXd::Zero(features.cols());
  out.margins.push_back(w.norm());

  for (int iter = 1; iter <= config.max_iters && out.margins.back() > config.epsilon; ++iter) {
    const Reward reward = linear_feature_reward(features, w, config.feature_map_mode);
    candidate = value_iteration(mdp, reward, config.planning).policy;
    mu = feature_expectations(mdp, candidate, features, config.feature_map_mode);
    const double distance = (expert_mu - mu).norm();
    if (distance < best_distance) {
      best_distance = distance;
      out.policy = candidate;
      out.policy_mu = mu;
      out.weights = w;
    }
    const Eigen::VectorXd step = mu - mu_bar;
    const double denom = step.squaredNorm();
    if (denom > 0) mu_bar += std::clamp(step.dot(expert_mu - mu_bar) / denom, 0.0, 1.0) * step;
    w = expert_mu - mu_bar;
    out.margins.push_back(w.norm());
  }
  out.converged = out.margins.back() <= config.epsilon;
  if (out.weights.isZero(0)) out.weights = w;
  return out;
}

MmaResult mma_solve(const TabularMdp& mdp, const TrajectoryBatch& expert, const EnvironmentFeatures& env,
                    const MmaConfig& config, std::uint64_t seed, const TabularPolicy* initial_policy) {
  const FeatureExpectations expert_mu = expert_feature_expectations(mdp, expert, env, config.feature_map_mode);
  return mma_solve(mdp, expert_mu, mean_reward_features(env), config, seed, initial_policy);
}

TabularPolicy behavior_clone(const TrajectoryBatch& expert, Index num_states, Index num_actions,
                             double smoothing) {
  return fit_behavior_policy(expert, num_states, num_actions, smoothing).policy;
}

void write_margins(const std::string& path, const std::vector<double>& margins) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << "iter,margin\n";
  char buf[64];
  for (std::size_t i = 0; i < margins.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, margins[i]);
    file << buf;
  }
  if (!file) throw IoError("failed writing " + path);
}

}  // namespace cairl
