#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cairl/mdp.hpp"

/// Factored discrete sepsis simulator: four vitals, a static diabetes flag and
/// three binary treatments, with ground-truth additive rewards over the next state.
namespace cairl::sepsis {

enum class Vital { HeartRate = 0, SystolicBp = 1, Oxygen = 2, Glucose = 3 };
enum class Treatment { Antibiotics = 0, Ventilation = 1, Vasopressors = 2 };

inline constexpr int kNumVitals = 4;
inline constexpr std::array<int, kNumVitals> kVitalLevels = {3, 3, 2, 5};
inline constexpr std::array<int, kNumVitals> kNormalLevel = {1, 1, 1, 2};
inline constexpr std::array<const char*, kNumVitals> kVitalNames = {"heart_rate", "systolic_bp",
                                                                    "oxygen", "glucose"};
inline constexpr Index kNumStates = 3 * 3 * 2 * 5 * 2 * 2 * 2 * 2;  // 1440
inline constexpr Index kNumActions = 8;

/// Reward features: the four vitals plus one uniform noise coordinate.
inline constexpr int kNumRewardFeatures = 5;
inline constexpr int kNoiseFeature = 4;
/// Shaping features: every state coordinate.
inline constexpr int kNumStateFeatures = 8;

struct State {
  int heart_rate = 1;
  int systolic_bp = 1;
  int oxygen = 1;
  int glucose = 2;
  int diabetes = 0;
  int antibiotics = 0;
  int ventilation = 0;
  int vasopressors = 0;

  int vital(Vital v) const;
  int& vital(Vital v);
  friend bool operator==(const State&, const State&) = default;
};

struct Action {
  bool antibiotics = false;
  bool ventilation = false;
  bool vasopressors = false;

  bool uses(Treatment t) const;
  friend bool operator==(const Action&, const Action&) = default;
};

Index encode(const State& state);
State decode_state(Index id);
Index encode(const Action& action);
Action decode_action(Index id);

bool is_death(const State& state);
bool is_discharge(const State& state);
inline bool is_terminal(const State& state) { return is_death(state) || is_discharge(state); }

/// Untreated drift: at the normal level the vital moves one step in `direction`;
/// at an abnormal level it moves one step further from normal.
struct VitalDrift {
  int direction = 1;
  double probability = 0.0;
};

enum class EffectKind { TowardNormal, Raise, Lower };

struct TreatmentEffect {
  Treatment treatment = Treatment::Antibiotics;
  Vital vital = Vital::HeartRate;
  EffectKind kind = EffectKind::TowardNormal;
  double probability = 0.0;
};

/**
 * Parameters of the per-vital dynamics. One step of vital v applies, in order:
 * drift, the diabetic glucose fluctuation (glucose only), then each active
 * treatment effect on v. Vitals evolve independently given (state, action);
 * treatment flags of the next state equal the action taken; diabetes is static.
 */
struct DynamicsConfig {
  std::array<VitalDrift, kNumVitals> drift{};
  /// Per-side probability of a +/-1 glucose move for diabetic patients.
  double diabetic_glucose_fluctuation = 0.0;
  std::vector<TreatmentEffect> effects;
  double diabetes_prevalence = 0.2;
  /// Initial per-vital level distributions (treatments start off).
  std::array<std::vector<double>, kNumVitals> initial_levels;
  int horizon = 20;

  void validate() const;
};

DynamicsConfig default_dynamics();

/// Distribution over next levels of one vital.
std::vector<double> vital_transition(const DynamicsConfig& config, Vital vital, int level,
                                     const Action& action, int diabetes);

TabularMdp build_mdp(const DynamicsConfig& config, double discount);

enum class RewardKind { GamMdp, LinearMdp };

std::string to_string(RewardKind kind);
RewardKind reward_kind_from_string(const std::string& name);

/// Per-level reward table of one vital.
std::span<const double> ground_truth_table(RewardKind kind, Vital vital);
double ground_truth_reward(RewardKind kind, const State& next_state);
/// r(s, a, s') = ground_truth_reward(s') as a planner reward.
Reward ground_truth(RewardKind kind);

/// Noise coordinate for one state occurrence; deterministic in the seed.
double noise_value(std::uint64_t occurrence_seed);
/// Seed of the state occurrence at `timestep` within a trajectory. With
/// `per_timestep == false` all states of a trajectory share one noise value.
std::uint64_t occurrence_seed(std::uint64_t trajectory_seed, int timestep, bool per_timestep = true);

using FeatureVector = Eigen::Matrix<double, kNumRewardFeatures, 1>;
using StateFeatures = Eigen::Matrix<double, kNumStateFeatures, 1>;

/// [heart_rate, systolic_bp, oxygen, glucose, noise] with noise in [0, 1).
FeatureVector encode_features(const State& state, std::uint64_t occurrence_seed);
FeatureVector encode_features(const State& state, double noise);
StateFeatures encode_state_features(const State& state);

}  // namespace cairl::sepsis
