#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "cairl/features.hpp"
#include "cairl/sepsis.hpp"

using namespace cairl;
using namespace cairl::sepsis;

namespace {

// Reward tables of the two ground-truth MDPs, written out independently of the library.
const double kGam[4][5] = {{-0.8, 0, -1}, {-1.2, 0, -0.6}, {-1, 0}, {-0.8, -0.4, 0, -0.4, -0.8}};
const double kLinear[4][5] = {{-0.3, -0.6, -0.9}, {-0.4, -0.8, -1.2}, {0, 0.6}, {0, 0.2, 0.4, 0.6, 0.8}};

State vitals(int hr, int bp, int ox, int gl) {
  State s;
  s.heart_rate = hr;
  s.systolic_bp = bp;
  s.oxygen = ox;
  s.glucose = gl;
  return s;
}

template <typename F>
void for_each_vital_combo(F&& f) {
  for (int hr = 0; hr < 3; ++hr)
    for (int bp = 0; bp < 3; ++bp)
      for (int ox = 0; ox < 2; ++ox)
        for (int gl = 0; gl < 5; ++gl) f(hr, bp, ox, gl);
}

}  // namespace

TEST_SUITE("sepsis") {
  TEST_CASE("state and action encodings are bijective") {
    CHECK(kNumStates == 1440);
    std::set<Index> seen;
    for (Index id = 0; id < kNumStates; ++id) {
      const State s = decode_state(id);
      CHECK(encode(s) == id);
      seen.insert(encode(s));
    }
    CHECK(seen.size() == 1440);
    for (Index a = 0; a < kNumActions; ++a) CHECK(encode(decode_action(a)) == a);
    CHECK_THROWS_AS(decode_state(1440), DomainError);
    CHECK_THROWS_AS(decode_action(8), DomainError);
  }

  TEST_CASE("the MDP is row-stochastic with absorbing terminals") {
    const TabularMdp mdp = build_mdp(default_dynamics(), 0.9);
    CHECK(mdp.num_states() == 1440);
    CHECK(mdp.num_actions() == 8);
    for (Index r = 0; r < mdp.transitions().rows(); ++r)
      CHECK(std::abs(mdp.transitions().row(r).sum() - 1.0) < 1e-9);
    int deaths = 0, discharges = 0;
    for (Index id = 0; id < kNumStates; ++id) {
      const State s = decode_state(id);
      int extremes = (s.heart_rate != 1) + (s.systolic_bp != 1) + (s.oxygen == 0) + (s.glucose == 0 || s.glucose == 4);
      const bool death = extremes >= 3;
      const bool discharge = extremes == 0 && s.glucose == 2 && !s.antibiotics && !s.ventilation && !s.vasopressors;
      CHECK(mdp.is_terminal(id) == (death || discharge));
      deaths += death;
      discharges += discharge;
      if (death || discharge)
        for (Index a = 0; a < 8; ++a) CHECK(mdp.probability(id, a, id) == 1.0);
    }
    CHECK(deaths > 0);
    CHECK(discharges == 2);  // diabetic and non-diabetic
    for (Index id = 0; id < kNumStates; ++id)
      if (mdp.initial_distribution()(id) > 0) {
        const State s = decode_state(id);
        CHECK(!mdp.is_terminal(id));
        CHECK(s.antibiotics + s.ventilation + s.vasopressors == 0);
      }
  }

  TEST_CASE("treatment flags follow the action and diabetes is static") {
    const TabularMdp mdp = build_mdp(default_dynamics(), 0.9);
    for (Index id = 0; id < kNumStates; id += 7) {
      if (mdp.is_terminal(id)) continue;
      for (Index a = 0; a < 8; ++a)
        for (TransitionMatrix<double>::InnerIterator it(mdp.transitions(), mdp.row_index(id, a)); it; ++it) {
          const State n = decode_state(it.col());
          const Action act = decode_action(a);
          CHECK(n.diabetes == decode_state(id).diabetes);
          CHECK(n.antibiotics == int(act.antibiotics));
          CHECK(n.ventilation == int(act.ventilation));
          CHECK(n.vasopressors == int(act.vasopressors));
        }
    }
  }

  TEST_CASE("untreated drift matches the configured drift table") {
    const DynamicsConfig config = default_dynamics();
    const TabularMdp mdp = build_mdp(config, 0.9);
    std::vector<Index> none(static_cast<std::size_t>(kNumStates), 0);
    const auto policy = TabularPolicy::deterministic(none, kNumActions);
    std::array<double, kNumVitals> at_normal{}, moved{}, wrong{};
    std::size_t steps = 0;
    for (const auto& traj : sample_trajectories(mdp, policy, 3000, 7))
      for (const auto& st : traj.steps) {
        ++steps;
        const State s = decode_state(st.state), n = decode_state(st.next_state);
        if (s.diabetes) continue;
        for (int v = 0; v < kNumVitals; ++v) {
          const auto vital = static_cast<Vital>(v);
          if (s.vital(vital) != kNormalLevel[static_cast<std::size_t>(v)]) continue;
          at_normal[static_cast<std::size_t>(v)] += 1;
          const int delta = n.vital(vital) - s.vital(vital);
          if (delta == config.drift[static_cast<std::size_t>(v)].direction) moved[static_cast<std::size_t>(v)] += 1;
          else if (delta != 0) wrong[static_cast<std::size_t>(v)] += 1;
        }
      }
    CHECK(steps >= 10000);
    for (int v = 0; v < kNumVitals; ++v) {
      const auto i = static_cast<std::size_t>(v);
      REQUIRE(at_normal[i] > 300);
      const double p = config.drift[i].probability;
      const double se = std::sqrt(p * (1 - p) / at_normal[i]);
      CHECK(std::abs(moved[i] / at_normal[i] - p) < 4 * se);
      CHECK(wrong[i] == 0);
    }
  }

  TEST_CASE("vital transitions are distributions and invalid configs are rejected") {
    const DynamicsConfig config = default_dynamics();
    for (int v = 0; v < kNumVitals; ++v)
      for (int level = 0; level < kVitalLevels[static_cast<std::size_t>(v)]; ++level)
        for (Index a = 0; a < 8; ++a)
          for (int d = 0; d < 2; ++d) {
            const auto dist = vital_transition(config, static_cast<Vital>(v), level, decode_action(a), d);
            double total = 0.0;
            for (double p : dist) total += p;
            CHECK(std::abs(total - 1.0) < 1e-12);
          }
    auto bad = config;
    bad.drift[0].probability = 1.2;
    CHECK_THROWS_AS(build_mdp(bad, 0.9), ValidationError);
    bad = config;
    bad.effects[0].probability = -0.1;
    CHECK_THROWS_AS(build_mdp(bad, 0.9), ValidationError);
    bad = config;
    bad.diabetes_prevalence = 2;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = config;
    bad.initial_levels[3] = {0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("ground-truth reward tables") {
    for_each_vital_combo([](int hr, int bp, int ox, int gl) {
      const State s = vitals(hr, bp, ox, gl);
      CHECK(ground_truth_reward(RewardKind::GamMdp, s) ==
            doctest::Approx(kGam[0][hr] + kGam[1][bp] + kGam[2][ox] + kGam[3][gl]).epsilon(1e-15));
      CHECK(ground_truth_reward(RewardKind::LinearMdp, s) ==
            doctest::Approx(kLinear[0][hr] + kLinear[1][bp] + kLinear[2][ox] + kLinear[3][gl]).epsilon(1e-15));
    });
    CHECK(ground_truth_reward(RewardKind::GamMdp, vitals(1, 1, 1, 2)) == 0.0);
    CHECK(ground_truth_reward(RewardKind::GamMdp, vitals(0, 0, 0, 0)) == doctest::Approx(-3.8));
    CHECK(ground_truth_reward(RewardKind::LinearMdp, vitals(2, 2, 1, 4)) == doctest::Approx(-0.7));
  }

  TEST_CASE("the GAM reward peaks only at the all-normal vitals") {
    int maxima = 0;
    for_each_vital_combo([&](int hr, int bp, int ox, int gl) {
      const double r = ground_truth_reward(RewardKind::GamMdp, vitals(hr, bp, ox, gl));
      CHECK(r <= 0.0);
      if (r == 0.0) {
        ++maxima;
        CHECK((hr == 1 && bp == 1 && ox == 1 && gl == 2));
      }
    });
    CHECK(maxima == 1);
  }

  TEST_CASE("ground truth ignores diabetes and treatment flags") {
    for (auto kind : {RewardKind::GamMdp, RewardKind::LinearMdp}) {
      const Reward r = ground_truth(kind);
      for (Index id = 0; id < kNumStates; ++id) {
        State base = decode_state(id);
        base.diabetes = base.antibiotics = base.ventilation = base.vasopressors = 0;
        CHECK(r(0, 0, id) == r(0, 0, encode(base)));
        CHECK(r(5, 3, id) == r(0, 0, id));
      }
    }
  }

  TEST_CASE("feature encoding") {
    const State s = vitals(2, 0, 1, 3);
    const auto x = encode_features(s, std::uint64_t{42});
    CHECK(x == encode_features(s, std::uint64_t{42}));
    CHECK(x(0) == 2);
    CHECK(x(1) == 0);
    CHECK(x(2) == 1);
    CHECK(x(3) == 3);
    CHECK(x(4) >= 0.0);
    CHECK(x(4) < 1.0);
    CHECK(encode_features(s, 0.25)(4) == 0.25);
    CHECK(occurrence_seed(9, 0) != occurrence_seed(9, 1));
    CHECK(occurrence_seed(9, 0, false) == occurrence_seed(9, 5, false));
  }

  TEST_CASE("noise values are uniform by a chi-square test") {
    constexpr int kBins = 20, kDraws = 100000;
    std::array<double, kBins> counts{};
    for (int i = 0; i < kDraws; ++i) {
      const double u = noise_value(occurrence_seed(static_cast<std::uint64_t>(i / 20), i % 20));
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      counts[static_cast<std::size_t>(u * kBins)] += 1;
    }
    const double expected = double(kDraws) / kBins;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // Upper 1% point of chi-square with 19 degrees of freedom.
    CHECK(chi2 < 36.191);
  }

  TEST_CASE("environment feature tables") {
    const auto env = environment_features(true, 16);
    CHECK(env.num_states() == kNumStates);
    CHECK(env.reward_specs.size() == kNumRewardFeatures);
    CHECK(env.state_specs.size() == kNumStateFeatures);
    CHECK(env.noise_column == kNoiseFeature);
    CHECK(env.noise_nodes().size() == 16);
    CHECK(env.noise_mean() == doctest::Approx(0.5));
    for (Index id = 0; id < kNumStates; id += 13) {
      const State s = decode_state(id);
      CHECK(env.reward_table(id, 0) == s.heart_rate);
      CHECK(env.reward_table(id, 3) == s.glucose);
      CHECK(env.state_table(id, 4) == s.diabetes);
      CHECK(env.state_table(id, 7) == s.vasopressors);
      CHECK(env.reward_features(id, 0.3)(kNoiseFeature) == 0.3);
    }
    const auto fixed = environment_features(false, 16);
    CHECK(fixed.occurrence_noise(5, 0) == fixed.occurrence_noise(5, 7));
    CHECK(env.occurrence_noise(5, 0) != env.occurrence_noise(5, 7));
  }
}
