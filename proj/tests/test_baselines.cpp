#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "cairl/baselines.hpp"
#include "scenarios.hpp"

using namespace cairl;

namespace {

FeatureMatrix random_features(Index S, Index k, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0, 1);
  FeatureMatrix f(S, k);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = unit(gen);
  return f;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("feature expectation examples") {
    const auto mdp = oracle::random_mdp(4, 2, 1, 0.9, 20);
    const auto pi = TabularPolicy::uniform(4, 2);
    CHECK(feature_expectations(mdp, pi, FeatureMatrix::Zero(4, 3), MmaFeatureMode::CurrentState).isZero());

    Table<double> rows = Table<double>::Ones(1, 1);
    const auto single = TabularMdp::from_dense(1, 1, rows, Vector<double>::Ones(1), 0.9, 20);
    const auto mu = feature_expectations(single, TabularPolicy::uniform(1, 1), FeatureMatrix::Ones(1, 1),
                                         MmaFeatureMode::CurrentState);
    CHECK(mu(0) == doctest::Approx((1 - std::pow(0.9, 20)) / 0.1).epsilon(1e-12));
    CHECK_THROWS_AS(feature_expectations(mdp, pi, FeatureMatrix::Zero(3, 3), MmaFeatureMode::CurrentState),
                    ShapeError);
  }

  TEST_CASE("feature expectations agree with Monte Carlo") {
    const auto mdp = oracle::random_mdp(6, 3, 2, 0.9, 15);
    const auto pi = oracle::random_policy(6, 3, 3);
    const FeatureMatrix f = random_features(6, 2, 4);
    for (auto mode : {MmaFeatureMode::CurrentState, MmaFeatureMode::ExpectedNextState}) {
      const auto mu = feature_expectations(mdp, pi, f, mode);
      for (Index k = 0; k < 2; ++k) {
        const oracle::RewardFn r = [&](long s, long, long n) {
          return f(mode == MmaFeatureMode::CurrentState ? s : n, k);
        };
        const auto mc = oracle::monte_carlo_return(mdp, pi, r, 100000, 10 + static_cast<std::uint64_t>(k));
        CHECK(std::abs(mu(k) - mc.mean) < 3 * mc.stderr_ + 1e-9);
      }
    }
  }

  TEST_CASE("expert feature expectations of logged data") {
    const auto mdp = oracle::random_mdp(5, 2, 6, 0.9, 8, 4, {4});
    EnvironmentFeatures env;
    env.reward_table = random_features(5, 2, 1);
    env.reward_specs = {FeatureSpec::continuous("x", 4), FeatureSpec::continuous("y", 4)};
    // A trajectory absorbed at step 2 keeps accruing the terminal's features.
    const Trajectory t{0, {{0, 1, 2, 0, false}, {2, 0, 4, 1, true}}};
    const auto mu = expert_feature_expectations(mdp, {t}, env, MmaFeatureMode::CurrentState);
    Eigen::VectorXd expected = env.reward_table.row(0).transpose() + 0.9 * env.reward_table.row(2).transpose();
    double w = 0.81;
    for (int k = 2; k < 8; ++k, w *= 0.9) expected += w * env.reward_table.row(4).transpose();
    CHECK((mu - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(expert_feature_expectations(mdp, {}, env, MmaFeatureMode::CurrentState), EmptyInputError);
  }

  TEST_CASE("MMA reaches the margin on a realizable linear expert") {
    const Index S = 12, A = 3;
    const auto mdp = oracle::random_mdp(S, A, 7, 0.9, 20);
    const FeatureMatrix f = random_features(S, 3, 8);
    const Eigen::Vector3d w_true(1.0, -0.5, 0.3);
    const auto expert = value_iteration(mdp, linear_feature_reward(f, w_true, MmaFeatureMode::CurrentState)).policy;
    const auto mu_e = feature_expectations(mdp, expert, f, MmaFeatureMode::CurrentState);
    MmaConfig config;
    const auto out = mma_solve(mdp, mu_e, f, config, 1);
    CHECK(out.converged);
    CHECK(out.margins.back() <= 0.05);
    CHECK(out.margins.size() <= 51);
    CHECK((out.policy_mu - mu_e).norm() <= out.margins.front());
    // Projections never move away from the expert.
    for (std::size_t i = 1; i < out.margins.size(); ++i) CHECK(out.margins[i] <= out.margins[i - 1] + 1e-12);

    const auto start = mma_solve(mdp, mu_e, f, config, 1, &expert);
    CHECK(start.margins.size() == 1);
    CHECK(start.margins[0] < 1e-12);
    CHECK(start.converged);

    MmaConfig bad;
    bad.epsilon = 0;
    CHECK_THROWS_AS(mma_solve(mdp, mu_e, f, bad, 1), ValidationError);
    CHECK_THROWS_AS(mma_solve(mdp, Eigen::VectorXd::Zero(2), f, config, 1), ShapeError);
  }

  TEST_CASE("matching feature expectations does not identify the reward") {
    // Two actions lead to states with equal features but different true
    // rewards: MMA is satisfied by either, so its weights cannot tell them apart.
    Table<double> rows = Table<double>::Zero(6, 3);
    rows(0, 1) = rows(1, 2) = 1;  // state 0: action 0 -> 1, action 1 -> 2
    rows(2, 1) = rows(3, 1) = 1;
    rows(4, 2) = rows(5, 2) = 1;
    Vector<double> init(3);
    init << 1, 0, 0;
    const auto mdp = TabularMdp::from_dense(3, 2, rows, init, 0.9, 10);
    FeatureMatrix f(3, 1);
    f << 0, 1, 1;
    const auto pi_a = TabularPolicy::deterministic(std::vector<Index>{0, 0, 0}, 2);
    const auto pi_b = TabularPolicy::deterministic(std::vector<Index>{1, 0, 0}, 2);
    const auto mu_a = feature_expectations(mdp, pi_a, f, MmaFeatureMode::CurrentState);
    CHECK((mu_a - feature_expectations(mdp, pi_b, f, MmaFeatureMode::CurrentState)).norm() < 1e-12);
    const auto out = mma_solve(mdp, mu_a, f, MmaConfig{}, 2);
    CHECK(out.converged);
  }

  TEST_CASE("behavior cloning and margins file") {
    const auto mdp = oracle::random_mdp(4, 3, 3, 0.9, 10);
    const auto batch = sample_trajectories(mdp, oracle::random_policy(4, 3, 5), 40, 6);
    CHECK(behavior_clone(batch, 4, 3, 0.5).probs() == fit_behavior_policy(batch, 4, 3, 0.5).policy.probs());

    const std::string path = "test_margins.csv";
    write_margins(path, {3.0, 1.5, 0.01});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iter,margin");
    std::getline(in, line);
    CHECK(line == "0,3");
    std::getline(in, line);
    CHECK(line == "1,1.5");
    std::remove(path.c_str());
  }
}
