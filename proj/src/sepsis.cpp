#include "cairl/sepsis.hpp"

#include <cmath>
#include <numeric>

namespace cairl::sepsis {

namespace {

constexpr std::array<double, 3> kGamHeartRate = {-0.8, 0.0, -1.0};
constexpr std::array<double, 3> kGamSystolicBp = {-1.2, 0.0, -0.6};
constexpr std::array<double, 2> kGamOxygen = {-1.0, 0.0};
constexpr std::array<double, 5> kGamGlucose = {-0.8, -0.4, 0.0, -0.4, -0.8};

constexpr std::array<double, 3> kLinearHeartRate = {-0.3, -0.6, -0.9};
constexpr std::array<double, 3> kLinearSystolicBp = {-0.4, -0.8, -1.2};
constexpr std::array<double, 2> kLinearOxygen = {0.0, 0.6};
constexpr std::array<double, 5> kLinearGlucose = {0.0, 0.2, 0.4, 0.6, 0.8};

// Mixed radix, most significant first: hr, sbp, oxy, glu, diabetes, abx, vent, vaso.
constexpr std::array<int, 8> kRadix = {3, 3, 2, 5, 2, 2, 2, 2};

std::array<int, 8> coords(const State& s) {
  return {s.heart_rate, s.systolic_bp, s.oxygen, s.glucose,
          s.diabetes,   s.antibiotics, s.ventilation, s.vasopressors};
}

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(what + " must be a probability in [0, 1]");
}

std::vector<double> shift(const std::vector<double>& dist, int direction, double p) {
  std::vector<double> out(dist.size(), 0.0);
  const int top = static_cast<int>(dist.size()) - 1;
  for (int level = 0; level <= top; ++level) {
    const double mass = dist[static_cast<std::size_t>(level)];
    if (mass == 0.0) continue;
    const int moved = std::clamp(level + direction, 0, top);
    out[static_cast<std::size_t>(level)] += mass * (1.0 - p);
    out[static_cast<std::size_t>(moved)] += mass * p;
  }
  return out;
}

// Level-dependent move: `direction_of(level)` gives the step (-1, 0, +1).
template <typename DirectionOf>
std::vector<double> shift_by(const std::vector<double>& dist, DirectionOf direction_of, double p) {
  std::vector<double> out(dist.size(), 0.0);
  const int top = static_cast<int>(dist.size()) - 1;
  for (int level = 0; level <= top; ++level) {
    const double mass = dist[static_cast<std::size_t>(level)];
    if (mass == 0.0) continue;
    const int moved = std::clamp(level + direction_of(level), 0, top);
    out[static_cast<std::size_t>(level)] += mass * (1.0 - p);
    out[static_cast<std::size_t>(moved)] += mass * p;
  }
  return out;
}

}  // namespace

int State::vital(Vital v) const {
  switch (v) {
    case Vital::HeartRate: return heart_rate;
    case Vital::SystolicBp: return systolic_bp;
    case Vital::Oxygen: return oxygen;
    case Vital::Glucose: return glucose;
  }
  return 0;
}

int& State::vital(Vital v) {
  switch (v) {
    case Vital::HeartRate: return heart_rate;
    case Vital::SystolicBp: return systolic_bp;
    case Vital::Oxygen: return oxygen;
    case Vital::Glucose: break;
  }
  return glucose;
}

bool Action::uses(Treatment t) const {
  switch (t) {
    case Treatment::Antibiotics: return antibiotics;
    case Treatment::Ventilation: return ventilation;
    case Treatment::Vasopressors: return vasopressors;
  }
  return false;
}

Index encode(const State& state) {
  const auto c = coords(state);
  Index id = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] < 0 || c[i] >= kRadix[i]) throw DomainError("sepsis state coordinate out of range");
    id = id * kRadix[i] + c[i];
  }
  return id;
}

State decode_state(Index id) {
  if (id < 0 || id >= kNumStates) throw DomainError("sepsis state id out of range");
  std::array<int, 8> c{};
  for (int i = 7; i >= 0; --i) {
    c[static_cast<std::size_t>(i)] = static_cast<int>(id % kRadix[static_cast<std::size_t>(i)]);
    id /= kRadix[static_cast<std::size_t>(i)];
  }
  return {c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]};
}

Index encode(const Action& action) {
  return (action.antibiotics ? 4 : 0) + (action.ventilation ? 2 : 0) + (action.vasopressors ? 1 : 0);
}

Action decode_action(Index id) {
  if (id < 0 || id >= kNumActions) throw DomainError("sepsis action id out of range");
  return {(id & 4) != 0, (id & 2) != 0, (id & 1) != 0};
}

bool is_death(const State& s) {
  const int extremes = (s.heart_rate != 1) + (s.systolic_bp != 1) + (s.oxygen == 0) +
                       (s.glucose == 0 || s.glucose == 4);
  return extremes >= 3;
}

bool is_discharge(const State& s) {
  return s.heart_rate == 1 && s.systolic_bp == 1 && s.oxygen == 1 && s.glucose == 2 &&
         s.antibiotics == 0 && s.ventilation == 0 && s.vasopressors == 0;
}

void DynamicsConfig::validate() const {
  for (int v = 0; v < kNumVitals; ++v) {
    const auto& d = drift[static_cast<std::size_t>(v)];
    check_probability(d.probability, std::string("drift probability of ") + kVitalNames[v]);
    if (d.direction != 1 && d.direction != -1)
      throw ValidationError(std::string("drift direction of ") + kVitalNames[v] + " must be +1 or -1");
    const auto& init = initial_levels[static_cast<std::size_t>(v)];
    if (init.size() != static_cast<std::size_t>(kVitalLevels[static_cast<std::size_t>(v)]))
      throw ValidationError(std::string("initial level distribution of ") + kVitalNames[v] +
                            " has the wrong length");
    for (double p : init) check_probability(p, "initial level probability");
    if (std::accumulate(init.begin(), init.end(), 0.0) <= 0.0)
      throw ValidationError("initial level distribution must have positive mass");
  }
  check_probability(diabetic_glucose_fluctuation, "diabetic glucose fluctuation");
  if (diabetic_glucose_fluctuation > 0.5)
    throw ValidationError("diabetic glucose fluctuation must be at most 0.5 per side");
  check_probability(diabetes_prevalence, "diabetes prevalence");
  for (const auto& e : effects) check_probability(e.probability, "treatment effect probability");
  if (horizon <= 0) throw ValidationError("horizon must be positive");
}

DynamicsConfig default_dynamics() {
  DynamicsConfig c;
  c.drift = {VitalDrift{+1, 0.2}, VitalDrift{-1, 0.2}, VitalDrift{-1, 0.15}, VitalDrift{+1, 0.2}};
  c.diabetic_glucose_fluctuation = 0.15;
  c.effects = {
      {Treatment::Antibiotics, Vital::HeartRate, EffectKind::TowardNormal, 0.6},
      {Treatment::Antibiotics, Vital::Glucose, EffectKind::TowardNormal, 0.5},
      {Treatment::Ventilation, Vital::Oxygen, EffectKind::TowardNormal, 0.7},
      {Treatment::Ventilation, Vital::HeartRate, EffectKind::Raise, 0.2},
      {Treatment::Vasopressors, Vital::SystolicBp, EffectKind::Raise, 0.7},
      {Treatment::Vasopressors, Vital::Glucose, EffectKind::Raise, 0.3},
  };
  c.diabetes_prevalence = 0.2;
  c.initial_levels = {std::vector<double>{0.2, 0.55, 0.25}, std::vector<double>{0.3, 0.5, 0.2},
                      std::vector<double>{0.3, 0.7}, std::vector<double>{0.1, 0.2, 0.4, 0.2, 0.1}};
  c.horizon = 20;
  return c;
}

std::vector<double> vital_transition(const DynamicsConfig& config, Vital vital, int level,
                                     const Action& action, int diabetes) {
  const auto v = static_cast<std::size_t>(vital);
  const int normal = kNormalLevel[v];
  std::vector<double> dist(static_cast<std::size_t>(kVitalLevels[v]), 0.0);
  dist[static_cast<std::size_t>(level)] = 1.0;

  const VitalDrift& drift = config.drift[v];
  dist = shift_by(
      dist,
      [&](int l) { return l == normal ? drift.direction : (l > normal ? 1 : -1); },
      drift.probability);

  if (vital == Vital::Glucose && diabetes == 1 && config.diabetic_glucose_fluctuation > 0) {
    // Symmetric +/-1 jump with probability q each side.
    const double q = config.diabetic_glucose_fluctuation;
    std::vector<double> up = shift(dist, +1, 1.0), down = shift(dist, -1, 1.0);
    for (std::size_t i = 0; i < dist.size(); ++i)
      dist[i] = (1.0 - 2.0 * q) * dist[i] + q * up[i] + q * down[i];
  }

  for (const auto& effect : config.effects) {
    if (effect.vital != vital || !action.uses(effect.treatment)) continue;
    switch (effect.kind) {
      case EffectKind::TowardNormal:
        dist = shift_by(
            dist, [&](int l) { return l == normal ? 0 : (l > normal ? -1 : 1); }, effect.probability);
        break;
      case EffectKind::Raise: dist = shift(dist, +1, effect.probability); break;
      case EffectKind::Lower: dist = shift(dist, -1, effect.probability); break;
    }
  }
  return dist;
}

TabularMdp build_mdp(const DynamicsConfig& config, double discount) {
  config.validate();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(kNumStates * kNumActions * 24));
  std::vector<Index> terminal;
  Vector<double> initial = Vector<double>::Zero(kNumStates);

  for (Index id = 0; id < kNumStates; ++id) {
    const State s = decode_state(id);
    if (is_terminal(s)) {
      terminal.push_back(id);
      for (Index a = 0; a < kNumActions; ++a) triplets.emplace_back(id * kNumActions + a, id, 1.0);
      continue;
    }
    if (s.antibiotics == 0 && s.ventilation == 0 && s.vasopressors == 0) {
      double p = s.diabetes ? config.diabetes_prevalence : 1.0 - config.diabetes_prevalence;
      for (int v = 0; v < kNumVitals; ++v)
        p *= config.initial_levels[static_cast<std::size_t>(v)]
                                  [static_cast<std::size_t>(s.vital(static_cast<Vital>(v)))];
      initial(id) = p;
    }
    for (Index a = 0; a < kNumActions; ++a) {
      const Action act = decode_action(a);
      std::array<std::vector<double>, kNumVitals> per_vital;
      for (int v = 0; v < kNumVitals; ++v)
        per_vital[static_cast<std::size_t>(v)] =
            vital_transition(config, static_cast<Vital>(v), s.vital(static_cast<Vital>(v)), act, s.diabetes);
      State next = s;
      next.antibiotics = act.antibiotics;
      next.ventilation = act.ventilation;
      next.vasopressors = act.vasopressors;
      for (int hr = 0; hr < 3; ++hr) {
        const double p_hr = per_vital[0][static_cast<std::size_t>(hr)];
        if (p_hr == 0) continue;
        for (int bp = 0; bp < 3; ++bp) {
          const double p_bp = p_hr * per_vital[1][static_cast<std::size_t>(bp)];
          if (p_bp == 0) continue;
          for (int ox = 0; ox < 2; ++ox) {
            const double p_ox = p_bp * per_vital[2][static_cast<std::size_t>(ox)];
            if (p_ox == 0) continue;
            for (int gl = 0; gl < 5; ++gl) {
              const double p = p_ox * per_vital[3][static_cast<std::size_t>(gl)];
              if (p == 0) continue;
              next.heart_rate = hr;
              next.systolic_bp = bp;
              next.oxygen = ox;
              next.glucose = gl;
              triplets.emplace_back(id * kNumActions + a, encode(next), p);
            }
          }
        }
      }
    }
  }
  const double mass = initial.sum();
  if (!(mass > 0)) throw ValidationError("initial distribution has no non-terminal support");
  initial /= mass;

  TransitionMatrix<double> P(kNumStates * kNumActions, kNumStates);
  P.setFromTriplets(triplets.begin(), triplets.end());
  return TabularMdp(kNumStates, kNumActions, std::move(P), std::move(initial), discount,
                    config.horizon, std::move(terminal));
}

std::string to_string(RewardKind kind) { return kind == RewardKind::GamMdp ? "gam" : "linear"; }

RewardKind reward_kind_from_string(const std::string& name) {
  if (name == "gam") return RewardKind::GamMdp;
  if (name == "linear") return RewardKind::LinearMdp;
  throw ValidationError("unknown MDP reward kind '" + name + "' (expected gam or linear)");
}

std::span<const double> ground_truth_table(RewardKind kind, Vital vital) {
  const bool gam = kind == RewardKind::GamMdp;
  switch (vital) {
    case Vital::HeartRate: return gam ? std::span<const double>(kGamHeartRate) : kLinearHeartRate;
    case Vital::SystolicBp: return gam ? std::span<const double>(kGamSystolicBp) : kLinearSystolicBp;
    case Vital::Oxygen: return gam ? std::span<const double>(kGamOxygen) : kLinearOxygen;
    case Vital::Glucose: return gam ? std::span<const double>(kGamGlucose) : kLinearGlucose;
  }
  return {};
}

double ground_truth_reward(RewardKind kind, const State& next_state) {
  double total = 0.0;
  for (int v = 0; v < kNumVitals; ++v) {
    const auto vital = static_cast<Vital>(v);
    total += ground_truth_table(kind, vital)[static_cast<std::size_t>(next_state.vital(vital))];
  }
  return total;
}

Reward ground_truth(RewardKind kind) {
  Vector<double> r(kNumStates);
  for (Index id = 0; id < kNumStates; ++id) r(id) = ground_truth_reward(kind, decode_state(id));
  return Reward::next_state(std::move(r));
}

double noise_value(std::uint64_t seed) { return to_unit(mix64(seed ^ 0x5eb5e75e11ULL)); }

std::uint64_t occurrence_seed(std::uint64_t trajectory_seed, int timestep, bool per_timestep) {
  return derive_seed(trajectory_seed, per_timestep ? static_cast<std::uint64_t>(timestep) : 0);
}

FeatureVector encode_features(const State& state, double noise) {
  FeatureVector x;
  x << state.heart_rate, state.systolic_bp, state.oxygen, state.glucose, noise;
  return x;
}

FeatureVector encode_features(const State& state, std::uint64_t seed) {
  return encode_features(state, noise_value(seed));
}

StateFeatures encode_state_features(const State& s) {
  StateFeatures x;
  x << s.heart_rate, s.systolic_bp, s.oxygen, s.glucose, s.diabetes, s.antibiotics, s.ventilation,
      s.vasopressors;
  return x;
}

}  // namespace cairl::sepsis
