#include <doctest.h>

#include <cmath>

#include "cairl/mdp.hpp"
#include "cairl/sepsis.hpp"
#include "oracles.hpp"

using namespace cairl;

namespace {

TabularMdp single_state(Index actions, double gamma, int horizon = 20) {
  Table<double> rows = Table<double>::Ones(actions, 1);
  return TabularMdp::from_dense(1, actions, rows, Vector<double>::Ones(1), gamma, horizon);
}

// s0 -> s1 -> s1, deterministic under the only action.
TabularMdp chain(double gamma) {
  Table<double> rows(2, 2);
  rows << 0, 1, 0, 1;
  Vector<double> init(2);
  init << 1, 0;
  return TabularMdp::from_dense(2, 1, rows, init, gamma, 20);
}

const TabularMdp& sepsis_gam() {
  static const TabularMdp mdp = sepsis::build_mdp(sepsis::default_dynamics(), 0.9);
  return mdp;
}

TabularPolicy always_action(Index S, Index A, Index a) {
  std::vector<Index> actions(static_cast<std::size_t>(S), a);
  return TabularPolicy::deterministic(actions, A);
}

}  // namespace

TEST_SUITE("mdp") {
  TEST_CASE("construction rejects malformed models") {
    Table<double> rows(2, 2);
    rows << 0.5, 0.4, 0, 1;
    CHECK_THROWS_AS(TabularMdp::from_dense(2, 1, rows, Vector<double>::Constant(2, 0.5), 0.9, 5), ValidationError);
    rows << 0.5, 0.5, 0, 1;
    CHECK_THROWS_AS(TabularMdp::from_dense(2, 1, rows, Vector<double>::Constant(2, 0.6), 0.9, 5), ValidationError);
    CHECK_THROWS_AS(TabularMdp::from_dense(2, 1, rows, Vector<double>::Constant(2, 0.5), 1.0, 5), ValidationError);
    CHECK_THROWS_AS(TabularMdp::from_dense(2, 1, rows, Vector<double>::Constant(2, 0.5), 0.9, 0), ValidationError);
    // A terminal state must self-loop.
    CHECK_THROWS_AS(TabularMdp::from_dense(2, 1, rows, Vector<double>::Constant(2, 0.5), 0.9, 5, {0}), ValidationError);
    CHECK_NOTHROW(TabularMdp::from_dense(2, 1, rows, Vector<double>::Constant(2, 0.5), 0.9, 5, {1}));
    CHECK_THROWS_AS(TabularPolicy(Table<double>::Constant(2, 2, 0.6)), ValidationError);
  }

  TEST_CASE("value iteration on a single rewarding state is a geometric series") {
    const auto mdp = single_state(1, 0.9);
    const auto plan = value_iteration(mdp, Reward::state(Vector<double>::Ones(1)), {1e-10, 10000});
    CHECK(plan.values(0) == doctest::Approx(10.0).epsilon(1e-9));
  }

  TEST_CASE("value iteration matches a fixed-point oracle on a two-state chain") {
    const auto mdp = chain(0.5);
    Vector<double> r(2);
    r << 0, 1;
    const auto plan = value_iteration(mdp, Reward::state(r), {1e-12, 10000});
    const auto V = oracle::hard_values(oracle::dense(mdp), [](long s, long, long) { return s == 1 ? 1.0 : 0.0; },
                                       0.5, 100);
    CHECK(std::abs(plan.values(0) - V[0]) < 1e-8);
    CHECK(std::abs(plan.values(1) - V[1]) < 1e-8);
  }

  TEST_CASE("value iteration agrees with the oracle on random MDPs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto mdp = oracle::random_mdp(6, 3, seed, 0.8, 20);
      Table<double> r = Table<double>::Random(6, 3);
      const auto plan = value_iteration(mdp, Reward::state_action(r), {1e-12, 10000});
      const auto V = oracle::hard_values(oracle::dense(mdp), [&](long s, long a, long) { return r(s, a); }, 0.8, 400);
      for (long s = 0; s < 6; ++s) CHECK(std::abs(plan.values(s) - V[static_cast<std::size_t>(s)]) < 1e-8);
    }
  }

  TEST_CASE("greedy ties break toward the lowest action") {
    const auto mdp = single_state(4, 0.5);
    Table<double> r(1, 4);
    r << 0, 1, 1, 0.5;
    CHECK(value_iteration(mdp, Reward::state_action(r)).policy.argmax(0) == 1);
    CHECK(value_iteration(mdp, Reward::zero(1)).policy(0, 0) == 1.0);
  }

  TEST_CASE("planners report non-convergence and bad arguments") {
    const auto mdp = single_state(1, 0.99);
    try {
      value_iteration(mdp, Reward::state(Vector<double>::Ones(1)), {1e-8, 3});
      FAIL("expected an iteration-limit error");
    } catch (const IterationLimitError& e) {
      CHECK(e.residual() > 0.9);
    }
    CHECK_THROWS_AS(soft_value_iteration(mdp, Reward::zero(1), 0.0), DomainError);
    CHECK_THROWS_AS(soft_value_iteration(mdp, Reward::zero(1), -1.0), DomainError);
    CHECK_THROWS_AS(value_iteration(mdp, Reward::zero(1), {0.0, 10}), DomainError);
  }

  TEST_CASE("on the sepsis MDP the greedy policy beats uniform and no-treatment") {
    const auto& mdp = sepsis_gam();
    const Reward r = sepsis::ground_truth(sepsis::RewardKind::GamMdp);
    const auto plan = value_iteration(mdp, r);
    const double greedy = evaluate_policy(mdp, plan.policy, r);
    const double uniform = evaluate_policy(mdp, TabularPolicy::uniform(mdp.num_states(), mdp.num_actions()), r);
    const double untreated = evaluate_policy(mdp, always_action(mdp.num_states(), mdp.num_actions(), 0), r);
    CHECK(greedy > uniform);
    CHECK(greedy > untreated);
    for (std::uint64_t seed = 0; seed < 3; ++seed)
      CHECK(greedy >= evaluate_policy(mdp, oracle::random_policy(mdp.num_states(), mdp.num_actions(), seed), r));
  }

  TEST_CASE("soft value iteration closed form with equal actions") {
    const double r = 0.7, gamma = 0.6, alpha = 0.3;
    const auto mdp = single_state(2, gamma);
    const auto plan = soft_value_iteration(mdp, Reward::state(Vector<double>::Constant(1, r)), alpha, {1e-12, 10000});
    CHECK(plan.values(0) == doctest::Approx((r + alpha * std::log(2.0)) / (1 - gamma)).epsilon(1e-10));
    CHECK(plan.policy(0, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("soft policy concentrates on the greedy action as alpha vanishes") {
    const auto mdp = oracle::random_mdp(12, 4, 7, 0.9, 20);
    Table<double> r = Table<double>::Random(12, 4);
    const auto hard = value_iteration(mdp, Reward::state_action(r), {1e-12, 10000});
    const auto soft = soft_value_iteration(mdp, Reward::state_action(r), 1e-6, {1e-12, 10000});
    for (Index s = 0; s < 12; ++s) {
      auto row = hard.q_values.row(s);
      Index best = hard.policy.argmax(s);
      double gap = INFINITY;
      for (Index a = 0; a < 4; ++a)
        if (a != best) gap = std::min(gap, row(best) - row(a));
      if (gap < 1e-4) continue;
      CHECK(soft.policy(s, best) >= 0.999);
    }
  }

  TEST_CASE("soft value iteration matches a long fixed-point oracle on a 3-state MDP") {
    const auto mdp = oracle::random_mdp(3, 2, 11, 0.9, 20, 3);
    Table<double> r(3, 2);
    r << 0.2, -0.5, 1.0, 0.1, -0.3, 0.4;
    const auto plan = soft_value_iteration(mdp, Reward::state_action(r), 0.5, {1e-12, 100000});
    const auto V =
        oracle::soft_values(oracle::dense(mdp), [&](long s, long a, long) { return r(s, a); }, 0.9, 0.5, 10000);
    for (long s = 0; s < 3; ++s) CHECK(std::abs(plan.values(s) - V[static_cast<std::size_t>(s)]) < 1e-8);
  }

  TEST_CASE("Bellman optimality holds at convergence") {
    const auto mdp = oracle::random_mdp(20, 5, 3, 0.95, 20);
    Table<double> r = Table<double>::Random(20, 5);
    const double tol = 1e-9;
    const auto hard = value_iteration(mdp, Reward::state_action(r), {tol, 100000});
    CHECK((hard.values - hard.q_values.rowwise().maxCoeff()).cwiseAbs().maxCoeff() < tol);
    CHECK((hard.q_values - (r + mdp.discount() * Eigen::Map<const Table<double>>(
                                                   Vector<double>(mdp.transitions() * hard.values).data(), 20, 5)))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    const double alpha = 0.4;
    const auto soft = soft_value_iteration(mdp, Reward::state_action(r), alpha, {tol, 100000});
    for (Index s = 0; s < 20; ++s) {
      double lse = 0.0;
      for (Index a = 0; a < 5; ++a) lse += std::exp(soft.q_values(s, a) / alpha);
      CHECK(std::abs(soft.values(s) - alpha * std::log(lse)) < tol);
    }
  }

  TEST_CASE("shrinking alpha does not lower the return") {
    const auto& mdp = sepsis_gam();
    const Reward r = sepsis::ground_truth(sepsis::RewardKind::GamMdp);
    double previous = -INFINITY;
    for (double alpha : {1.0, 0.1, 0.01}) {
      const double ret = evaluate_policy(mdp, soft_value_iteration(mdp, r, alpha).policy, r);
      CHECK(ret >= previous - 1e-9);
      previous = ret;
    }
  }

  TEST_CASE("policy evaluation basics") {
    const auto mdp = single_state(1, 0.9, 20);
    CHECK(evaluate_policy(mdp, TabularPolicy::uniform(1, 1), Reward::zero(1)) == 0.0);
    CHECK(evaluate_policy(mdp, TabularPolicy::uniform(1, 1), Reward::state(Vector<double>::Ones(1))) ==
          doctest::Approx((1 - std::pow(0.9, 20)) / 0.1).epsilon(1e-12));
  }

  TEST_CASE("evaluation of the uniform policy agrees with Monte Carlo on sepsis") {
    const auto& mdp = sepsis_gam();
    const Reward r = sepsis::ground_truth(sepsis::RewardKind::GamMdp);
    const auto uniform = TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
    const double exact = evaluate_policy(mdp, uniform, r);
    const auto mc = oracle::monte_carlo_return(
        mdp, uniform, [](long, long, long n) { return sepsis::ground_truth_reward(sepsis::RewardKind::GamMdp, sepsis::decode_state(n)); },
        200000, 2024);
    CHECK(std::abs(exact - mc.mean) < 3 * mc.stderr_);
  }

  TEST_CASE("per-timestep policies evaluate consistently with stationary ones") {
    const auto mdp = oracle::random_mdp(5, 2, 4, 0.9, 6);
    const auto pi = oracle::random_policy(5, 2, 1);
    std::vector<TabularPolicy> per_t(6, pi);
    const Reward r = Reward::state(Vector<double>::LinSpaced(5, -1, 1));
    CHECK(evaluate_policy(mdp, std::span<const TabularPolicy>(per_t), r) ==
          doctest::Approx(evaluate_policy(mdp, pi, r)).epsilon(1e-12));
    per_t.pop_back();
    CHECK_THROWS_AS(evaluate_policy(mdp, std::span<const TabularPolicy>(per_t), r), ShapeError);
  }

  TEST_CASE("finite-horizon backward induction is at least as good over the horizon") {
    const auto& mdp = sepsis_gam();
    const Reward r = sepsis::ground_truth(sepsis::RewardKind::GamMdp);
    const auto per_t = finite_horizon_value_iteration(mdp, r);
    CHECK(per_t.size() == 20);
    CHECK(evaluate_policy(mdp, std::span<const TabularPolicy>(per_t), r) >=
          evaluate_policy(mdp, value_iteration(mdp, r).policy, r) - 1e-9);
  }

  TEST_CASE("sampling is deterministic and respects the horizon") {
    const auto mdp = oracle::random_mdp(8, 3, 5, 0.9, 12, 3, {7});
    const auto pi = oracle::random_policy(8, 3, 2);
    const auto a = sample_trajectories(mdp, pi, 200, 99);
    const auto b = sample_trajectories(mdp, pi, 200, 99);
    CHECK(a == b);
    CHECK(a != sample_trajectories(mdp, pi, 200, 100));
    for (const auto& traj : a) {
      CHECK(traj.steps.size() <= 12);
      CHECK(traj.steps.back().done);
      CHECK((mdp.is_terminal(traj.steps.back().next_state) || traj.steps.size() == 12));
    }
    CHECK_NOTHROW(validate_batch(a, 8, 3, 12));
    CHECK_THROWS_AS(sample_trajectories(mdp, pi, 0, 1), ValidationError);
  }

  TEST_CASE("deterministic MDP and policy give identical trajectories") {
    Table<double> rows = Table<double>::Zero(6, 3);
    rows(0, 1) = rows(1, 2) = rows(2, 0) = rows(3, 0) = rows(4, 1) = rows(5, 2) = 1;
    Vector<double> init(3);
    init << 1, 0, 0;
    const auto mdp = TabularMdp::from_dense(3, 2, rows, init, 0.9, 10);
    const auto pi = always_action(3, 2, 1);
    const auto batch = sample_trajectories(mdp, pi, 20, 5);
    for (const auto& traj : batch) {
      REQUIRE(traj.steps.size() == batch[0].steps.size());
      for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        CHECK(traj.steps[t].state == batch[0].steps[t].state);
        CHECK(traj.steps[t].next_state == batch[0].steps[t].next_state);
      }
    }
  }

  TEST_CASE("empirical visit frequencies match propagated occupancy") {
    const long S = 10, A = 3;
    const auto mdp = oracle::random_mdp(S, A, 17, 0.9, 20, 4, {9});
    const auto pi = oracle::random_policy(S, A, 3);
    // Oracle occupancy: propagate the state distribution by hand; a step is
    // logged only while the current state is non-terminal.
    const auto P = oracle::dense(mdp);
    std::vector<double> dist(S), occ(S, 0.0);
    for (long s = 0; s < S; ++s) dist[s] = mdp.initial_distribution()(s);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> next(S, 0.0);
      for (long s = 0; s < S; ++s) {
        if (s == 9) {
          next[s] += dist[s];
          continue;
        }
        occ[s] += dist[s];
        for (long a = 0; a < A; ++a)
          for (long n = 0; n < S; ++n) next[n] += dist[s] * pi(s, a) * P[s][a][n];
      }
      dist = next;
    }
    double total = 0.0;
    for (double o : occ) total += o;

    std::vector<double> counts(S, 0.0);
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    while (steps < 100000) {
      for (const auto& traj : sample_trajectories(mdp, pi, 1000, seed++))
        for (const auto& st : traj.steps) {
          counts[static_cast<std::size_t>(st.state)] += 1;
          ++steps;
        }
    }
    double tv = 0.0;
    for (long s = 0; s < S; ++s) tv += 0.5 * std::abs(counts[s] / double(steps) - occ[s] / total);
    CHECK(tv < 0.01);
  }

  TEST_CASE("trajectory files round-trip and report bad lines") {
    const auto mdp = oracle::random_mdp(6, 2, 1, 0.9, 8, 3, {5});
    const auto batch = sample_trajectories(mdp, oracle::random_policy(6, 2, 0), 30, 3);
    const std::string text = format_trajectories(batch);
    CHECK(parse_trajectories(text) == batch);
    CHECK(text.find("\"v\":1") != std::string::npos);

    const std::string good = "{\"v\":1,\"seed\":3,\"steps\":[[0,1,2,0,1]]}\n";
    CHECK(parse_trajectories(good).size() == 1);
    auto line_of = [](const std::string& t) {
      try {
        parse_trajectories(t);
      } catch (const ParseError& e) {
        return e.line();
      }
      return -1L;
    };
    CHECK(line_of(good + "{\"v\":1,\"seed\":3,\"steps\":[[0,1,2,0]]}\n") == 2);
    CHECK(line_of(good + good + "{not json\n") == 3);
    CHECK(line_of("{\"v\":2,\"seed\":3,\"steps\":[]}\n") == 1);
    CHECK(line_of(good + "{\"v\":1,\"seed\":3,\"steps\":[[0,1.5,2,0,1]]}\n") == 2);
    CHECK(line_of(good + "{\"v\":1,\"seed\":3,\"steps\":[[0,1,2,0,7]]}\n") == 2);
  }

  TEST_CASE("batch validation catches broken chains and ranges") {
    Trajectory t{1, {{0, 1, 2, 0, false}, {2, 0, 1, 1, true}}};
    CHECK_NOTHROW(validate_batch({t}, 3, 2, 5));
    auto broken = t;
    broken.steps[1].state = 1;
    CHECK_THROWS_AS(validate_batch({broken}, 3, 2, 5), ValidationError);
    auto out_of_range = t;
    out_of_range.steps[0].action = 2;
    CHECK_THROWS_AS(validate_batch({out_of_range}, 3, 2, 5), ValidationError);
    CHECK_THROWS_AS(validate_batch({t}, 3, 2, 1), ValidationError);
  }
}
