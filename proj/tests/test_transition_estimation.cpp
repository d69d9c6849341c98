#include <doctest.h>

#include <cmath>

#include "cairl/transition_estimation.hpp"
#include "scenarios.hpp"

using namespace cairl;

namespace {

Trajectory one_step(Index s, Index a, Index n) { return Trajectory{0, {{s, a, n, 0, true}}}; }

const scenario::SepsisIptw& sepsis_batch() {
  static const auto data = scenario::sepsis_iptw_batch(5000, 0.1, 31);
  return data;
}

}  // namespace

TEST_SUITE("transition_estimation") {
  TEST_CASE("behavior policy examples") {
    const auto single = fit_behavior_policy({one_step(0, 3, 1)}, 2, 8, 0.0);
    CHECK(single.policy(0, 3) == 1.0);
    CHECK(single.policy(1, 0) == doctest::Approx(1.0 / 8));  // unseen state, no smoothing

    const auto smoothed = fit_behavior_policy({one_step(0, 3, 1)}, 2, 8, 1.0);
    for (Index a = 0; a < 8; ++a) CHECK(smoothed.policy(1, a) == 1.0 / 8);
    CHECK(smoothed.policy(0, 3) == doctest::Approx(2.0 / 9));
    CHECK(smoothed.policy.probs().minCoeff() > 0);

    CHECK_THROWS_AS(fit_behavior_policy({}, 2, 8, 1.0), EmptyInputError);
    CHECK_THROWS_AS(fit_behavior_policy({Trajectory{}}, 2, 8, 1.0), EmptyInputError);
    CHECK_THROWS_AS(fit_behavior_policy({one_step(0, 3, 1)}, 2, 8, -1.0), ValidationError);
  }

  TEST_CASE("uniform logging is recovered by the law of large numbers") {
    const auto mdp = oracle::random_mdp(5, 4, 2, 0.9, 10);
    const auto batch = sample_trajectories(mdp, TabularPolicy::uniform(5, 4), 1000, 8);
    REQUIRE(count_transitions(batch) >= 10000);
    const auto est = fit_behavior_policy(batch, 5, 4, 1.0);
    for (Index s = 0; s < 5; ++s)
      for (Index a = 0; a < 4; ++a) CHECK(std::abs(est.policy(s, a) - 0.25) < 0.02);
    const auto marginal = fit_marginal_actions(batch, 4);
    CHECK(marginal.probs.sum() == doctest::Approx(1.0));
  }

  TEST_CASE("IPTW weight examples") {
    const auto mdp = oracle::random_mdp(4, 2, 3, 0.9, 6);
    const auto batch = sample_trajectories(mdp, TabularPolicy::uniform(4, 2), 50, 1);
    BehaviorPolicyEstimate uniform{TabularPolicy::uniform(4, 2), 0.0, {}};
    MarginalActionDist half{Vector<double>::Constant(2, 0.5)};
    const auto w = compute_iptw_weights(batch, uniform, half);
    CHECK(w.weights.size() == count_transitions(batch));
    for (double x : w.weights) CHECK(x == 1.0);

    Table<double> p(1, 2);
    p << 0.75, 0.25;
    BehaviorPolicyEstimate skew{TabularPolicy(p), 0.0, {}};
    const auto w2 = compute_iptw_weights({one_step(0, 1, 0), one_step(0, 0, 0)}, skew, half);
    CHECK(w2.weights[0] == doctest::Approx(2.0));
    CHECK(w2.weights[1] == doctest::Approx(2.0 / 3));
    const auto clipped = compute_iptw_weights({one_step(0, 1, 0)}, skew, half, 1.5);
    CHECK(clipped.weights[0] == 1.5);

    Table<double> zero(1, 2);
    zero << 1.0, 0.0;
    BehaviorPolicyEstimate none{TabularPolicy(zero), 0.0, {}};
    try {
      compute_iptw_weights({one_step(0, 1, 0)}, none, half);
      FAIL("expected an overlap error");
    } catch (const OverlapError& e) {
      CHECK(e.state() == 0);
      CHECK(e.action() == 1);
    }
  }

  TEST_CASE("inverse-propensity weighting balances the actions of an epsilon-soft expert") {
    const auto& data = sepsis_batch();
    // True propensities with a uniform marginal: weighted action frequencies
    // in every well-visited state are uniform.
    BehaviorPolicyEstimate truth{data.behavior, 0.0, {}};
    MarginalActionDist uniform{Vector<double>::Constant(8, 1.0 / 8)};
    const auto w = compute_iptw_weights(data.batch, truth, uniform, 1e9);
    Table<double> mass = Table<double>::Zero(sepsis::kNumStates, 8);
    Vector<double> visits = Vector<double>::Zero(sepsis::kNumStates);
    std::size_t i = 0;
    for (const auto& traj : data.batch)
      for (const auto& st : traj.steps) {
        mass(st.state, st.action) += w.weights[i++];
        visits(st.state) += 1;
      }
    int checked = 0;
    for (Index s = 0; s < sepsis::kNumStates; ++s) {
      if (visits(s) < 1000) continue;
      ++checked;
      for (Index a = 0; a < 8; ++a) {
        const double pi = data.behavior(s, a);
        // count(s, a) / pi ~ n (1 +- sqrt((1 - pi) / (n pi))); frequency = that / (8 n).
        const double freq = mass(s, a) / visits(s);
        const double se = std::sqrt((1 - pi) / (visits(s) * pi)) / 8;
        CHECK(std::abs(freq - 1.0 / 8) < 4 * se);
      }
    }
    CHECK(checked >= 3);

    // Stabilized weights fit from the data stay in a sane band.
    const auto behavior = fit_behavior_policy(data.batch, sepsis::kNumStates, 8, 0.1);
    const auto stabilized = compute_iptw_weights(data.batch, behavior, fit_marginal_actions(data.batch, 8), 10.0);
    CHECK(stabilized.mean() >= 0.5);
    CHECK(stabilized.mean() <= 2.0);
    for (double x : stabilized.weights) {
      CHECK(x > 0);
      CHECK(x <= 10.0);
    }
  }

  TEST_CASE("transition model examples") {
    Table<double> rows = Table<double>::Zero(6, 3);
    rows(0, 1) = rows(1, 2) = rows(2, 2) = rows(3, 0) = rows(4, 0) = rows(5, 1) = 1;
    const auto mdp = TabularMdp::from_dense(3, 2, rows, Vector<double>::Constant(3, 1.0 / 3), 0.9, 10);
    const auto batch = sample_trajectories(mdp, TabularPolicy::uniform(3, 2), 100, 4);
    const auto est = fit_transition_model(batch, 3, 2, nullptr, 0.0);
    for (Index s = 0; s < 3; ++s)
      for (Index a = 0; a < 2; ++a) {
        if (!est.seen(s, a)) continue;
        for (Index n = 0; n < 3; ++n) CHECK(est.probability(s, a, n) == mdp.probability(s, a, n));
      }
    // Unseen pairs self-loop; rows are stochastic.
    const auto sparse = fit_transition_model({one_step(0, 0, 1)}, 3, 2, nullptr, 0.0);
    CHECK(sparse.probability(2, 1, 2) == 1.0);
    const auto smooth = fit_transition_model(batch, 3, 2, nullptr, 0.01);
    for (Index r = 0; r < 6; ++r) CHECK(std::abs(smooth.probs.row(r).sum() - 1.0) < 1e-9);

    // Constant weights leave the estimate unchanged.
    IptwWeights constant{std::vector<double>(count_transitions(batch), 2.5), 10.0};
    const auto weighted = fit_transition_model(batch, 3, 2, &constant, 0.0);
    CHECK((Eigen::MatrixXd(weighted.probs) - Eigen::MatrixXd(est.probs)).cwiseAbs().maxCoeff() < 1e-12);
    IptwWeights wrong{{1.0}, 10.0};
    CHECK_THROWS_AS(fit_transition_model(batch, 3, 2, &wrong, 0.0), ShapeError);
  }

  TEST_CASE("weighted fits on the sepsis batch are close to the true dynamics") {
    const auto& data = sepsis_batch();
    const auto behavior = fit_behavior_policy(data.batch, sepsis::kNumStates, 8, 0.1);
    const auto w = compute_iptw_weights(data.batch, behavior, fit_marginal_actions(data.batch, 8), 10.0);
    const auto factored = sepsis::fit_factored_transitions(data.batch, &w, 0.0);
    for (Index r = 0; r < factored.probs.rows(); ++r) CHECK(std::abs(factored.probs.row(r).sum() - 1.0) < 1e-9);
    const auto all_visited = scenario::mean_tv(data.mdp, factored, 20);
    CHECK(all_visited.pairs > 100);
    // The weights only add variance here (the state is fully observed), so the
    // unweighted fit is tighter; both are far better than a per-cell fit.
    CHECK(all_visited.mean <= 0.1);
    CHECK(scenario::mean_tv(data.mdp, sepsis::fit_factored_transitions(data.batch, nullptr, 0.0), 20).mean <
          all_visited.mean);
    // A cell-by-cell fit needs many visits per pair to get there.
    const auto tabular = fit_transition_model(data.batch, sepsis::kNumStates, 8, &w, 0.0);
    CHECK(scenario::mean_tv(data.mdp, tabular, 20).mean > all_visited.mean);

    const TabularMdp estimated = with_estimated_transitions(data.mdp, factored);
    for (Index s : data.mdp.terminal_states()) CHECK(estimated.probability(s, 3, s) == 1.0);
  }

  TEST_CASE("IPTW corrects a confounded transition estimate") {
    const auto c = scenario::confounded_batch(3000, 12);
    const auto cmp = scenario::compare_confounded(c);
    CHECK(cmp.pairs >= 8);
    CHECK(cmp.iptw_better >= 0.8 * cmp.pairs);
    CHECK(cmp.mean_tv_iptw < cmp.mean_tv_plain);
  }
}
