#include "cairl/transition_estimation.hpp"

#include <array>
#include <cmath>
#include <map>

#include "cairl/sepsis.hpp"

namespace cairl {

namespace {

void require_transitions(const TrajectoryBatch& batch) {
  if (count_transitions(batch) == 0) throw EmptyInputError("trajectory batch has no transitions");
}

double weight_at(const IptwWeights* weights, std::size_t i) {
  return weights ? weights->weights[i] : 1.0;
}

}  // namespace

double IptwWeights::mean() const {
  if (weights.empty()) return 0.0;
  double total = 0.0;
  for (double w : weights) total += w;
  return total / static_cast<double>(weights.size());
}

BehaviorPolicyEstimate fit_behavior_policy(const TrajectoryBatch& batch, Index num_states,
                                           Index num_actions, double smoothing) {
  if (!(smoothing >= 0)) throw ValidationError("smoothing must be non-negative");
  require_transitions(batch);
  Table<double> counts = Table<double>::Zero(num_states, num_actions);
  for (const auto& traj : batch)
    for (const auto& step : traj.steps) counts(step.state, step.action) += 1.0;
  BehaviorPolicyEstimate out;
  out.smoothing = smoothing;
  out.state_counts.resize(static_cast<std::size_t>(num_states));
  Table<double> probs(num_states, num_actions);
  for (Index s = 0; s < num_states; ++s) {
    const double n = counts.row(s).sum();
    out.state_counts[static_cast<std::size_t>(s)] = n;
    const double denom = n + smoothing * static_cast<double>(num_actions);
    if (denom > 0)
      probs.row(s) = (counts.row(s).array() + smoothing) / denom;
    else
      probs.row(s).setConstant(1.0 / static_cast<double>(num_actions));
  }
  out.policy = TabularPolicy(std::move(probs));
  return out;
}

MarginalActionDist fit_marginal_actions(const TrajectoryBatch& batch, Index num_actions) {
  require_transitions(batch);
  Vector<double> counts = Vector<double>::Zero(num_actions);
  for (const auto& traj : batch)
    for (const auto& step : traj.steps) counts(step.action) += 1.0;
  return {counts / counts.sum()};
}

IptwWeights compute_iptw_weights(const TrajectoryBatch& batch, const BehaviorPolicyEstimate& behavior,
                                 const MarginalActionDist& marginal, double clip_max) {
  if (!(clip_max > 0)) throw ValidationError("clip_max must be positive");
  IptwWeights out;
  out.clip_max = clip_max;
  out.weights.reserve(count_transitions(batch));
  for (const auto& traj : batch)
    for (const auto& step : traj.steps) {
      const double propensity = behavior.policy(step.state, step.action);
      if (!(propensity > 0)) throw OverlapError(step.state, step.action);
      out.weights.push_back(std::min(marginal.probs(step.action) / propensity, clip_max));
    }
  return out;
}

EstimatedTransition fit_transition_model(const TrajectoryBatch& batch, Index num_states,
                                         Index num_actions, const IptwWeights* weights,
                                         double smoothing) {
  if (!(smoothing >= 0)) throw ValidationError("smoothing must be non-negative");
  if (weights && weights->weights.size() != count_transitions(batch))
    throw ShapeError("one IPTW weight per transition is required");
  const Index rows = num_states * num_actions;
  std::vector<std::map<Index, double>> mass(static_cast<std::size_t>(rows));
  EstimatedTransition out;
  out.num_states = num_states;
  out.num_actions = num_actions;
  out.visits.assign(static_cast<std::size_t>(rows), 0.0);
  std::size_t i = 0;
  for (const auto& traj : batch)
    for (const auto& step : traj.steps) {
      const auto r = static_cast<std::size_t>(step.state * num_actions + step.action);
      mass[r][step.next_state] += weight_at(weights, i++);
      out.visits[r] += 1.0;
    }

  std::vector<Eigen::Triplet<double>> triplets;
  for (Index r = 0; r < rows; ++r) {
    const auto& cell = mass[static_cast<std::size_t>(r)];
    double total = 0.0;
    for (const auto& [next, w] : cell) total += w;
    if (cell.empty() || !(total > 0)) {
      triplets.emplace_back(r, r / num_actions, 1.0);
      continue;
    }
    const double denom = total + smoothing * static_cast<double>(num_states);
    if (smoothing > 0) {
      for (Index next = 0; next < num_states; ++next) {
        auto it = cell.find(next);
        triplets.emplace_back(r, next, ((it == cell.end() ? 0.0 : it->second) + smoothing) / denom);
      }
    } else {
      for (const auto& [next, w] : cell) triplets.emplace_back(r, next, w / denom);
    }
  }
  out.probs = TransitionMatrix<double>(rows, num_states);
  out.probs.setFromTriplets(triplets.begin(), triplets.end());
  out.probs.makeCompressed();
  return out;
}

TabularMdp with_estimated_transitions(const TabularMdp& base, const EstimatedTransition& estimate) {
  if (estimate.num_states != base.num_states() || estimate.num_actions != base.num_actions())
    throw ShapeError("estimated transitions do not match the MDP");
  const Index A = base.num_actions();
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index r = 0; r < estimate.probs.outerSize(); ++r) {
    const Index s = r / A;
    if (base.is_terminal(s)) {
      triplets.emplace_back(r, s, 1.0);
      continue;
    }
    for (TransitionMatrix<double>::InnerIterator it(estimate.probs, r); it; ++it)
      triplets.emplace_back(r, it.col(), it.value());
  }
  TransitionMatrix<double> P(estimate.probs.rows(), estimate.probs.cols());
  P.setFromTriplets(triplets.begin(), triplets.end());
  return TabularMdp(base.num_states(), A, std::move(P), base.initial_distribution(), base.discount(),
                    base.horizon(), base.terminal_states());
}

double row_total_variation(const TabularMdp& truth, const EstimatedTransition& estimate, Index s, Index a) {
  const Index r = truth.row_index(s, a);
  Vector<double> diff = truth.transitions().row(r).transpose();
  diff -= estimate.probs.row(r).transpose();
  return 0.5 * diff.cwiseAbs().sum();
}

namespace sepsis {

EstimatedTransition fit_factored_transitions(const TrajectoryBatch& batch, const IptwWeights* weights,
                                             double smoothing) {
  if (!(smoothing >= 0)) throw ValidationError("smoothing must be non-negative");
  if (weights && weights->weights.size() != count_transitions(batch))
    throw ShapeError("one IPTW weight per transition is required");
  // mass[v][level][action][diabetes][next level]
  constexpr int kMaxLevels = 5;
  using Cell = std::array<double, kMaxLevels>;
  std::array<std::vector<Cell>, kNumVitals> mass;
  auto cell_index = [](int level, Index action, int diabetes) {
    return static_cast<std::size_t>((level * kNumActions + action) * 2 + diabetes);
  };
  for (auto& m : mass) m.assign(static_cast<std::size_t>(kMaxLevels * kNumActions * 2), Cell{});

  EstimatedTransition out;
  out.num_states = kNumStates;
  out.num_actions = kNumActions;
  out.visits.assign(static_cast<std::size_t>(kNumStates * kNumActions), 0.0);
  std::size_t i = 0;
  for (const auto& traj : batch)
    for (const auto& step : traj.steps) {
      const double w = weight_at(weights, i++);
      const State s = decode_state(step.state), next = decode_state(step.next_state);
      out.visits[static_cast<std::size_t>(step.state * kNumActions + step.action)] += 1.0;
      for (int v = 0; v < kNumVitals; ++v) {
        const auto vital = static_cast<Vital>(v);
        mass[static_cast<std::size_t>(v)][cell_index(s.vital(vital), step.action, s.diabetes)]
            [static_cast<std::size_t>(next.vital(vital))] += w;
      }
    }

  // Normalized per-vital conditionals.
  std::array<std::vector<Cell>, kNumVitals> cond;
  for (int v = 0; v < kNumVitals; ++v) {
    const int levels = kVitalLevels[static_cast<std::size_t>(v)];
    cond[static_cast<std::size_t>(v)] = mass[static_cast<std::size_t>(v)];
    for (int level = 0; level < levels; ++level)
      for (Index a = 0; a < kNumActions; ++a)
        for (int d = 0; d < 2; ++d) {
          Cell& c = cond[static_cast<std::size_t>(v)][cell_index(level, a, d)];
          double total = 0.0;
          for (int l = 0; l < levels; ++l) total += c[static_cast<std::size_t>(l)];
          if (!(total > 0)) {
            c.fill(0.0);
            c[static_cast<std::size_t>(level)] = 1.0;
            continue;
          }
          const double denom = total + smoothing * levels;
          for (int l = 0; l < levels; ++l) c[static_cast<std::size_t>(l)] = (c[static_cast<std::size_t>(l)] + smoothing) / denom;
        }
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (Index id = 0; id < kNumStates; ++id) {
    const State s = decode_state(id);
    for (Index a = 0; a < kNumActions; ++a) {
      const Index row = id * kNumActions + a;
      if (is_terminal(s)) {
        triplets.emplace_back(row, id, 1.0);
        continue;
      }
      const Action act = decode_action(a);
      State next = s;
      next.antibiotics = act.antibiotics;
      next.ventilation = act.ventilation;
      next.vasopressors = act.vasopressors;
      const Cell& hr = cond[0][cell_index(s.heart_rate, a, s.diabetes)];
      const Cell& bp = cond[1][cell_index(s.systolic_bp, a, s.diabetes)];
      const Cell& ox = cond[2][cell_index(s.oxygen, a, s.diabetes)];
      const Cell& gl = cond[3][cell_index(s.glucose, a, s.diabetes)];
      for (int h = 0; h < 3; ++h)
        for (int b = 0; b < 3; ++b)
          for (int o = 0; o < 2; ++o)
            for (int g = 0; g < 5; ++g) {
              const double p = hr[static_cast<std::size_t>(h)] * bp[static_cast<std::size_t>(b)] *
                               ox[static_cast<std::size_t>(o)] * gl[static_cast<std::size_t>(g)];
              if (p == 0) continue;
              next.heart_rate = h;
              next.systolic_bp = b;
              next.oxygen = o;
              next.glucose = g;
              triplets.emplace_back(row, encode(next), p);
            }
    }
  }
  out.probs = TransitionMatrix<double>(kNumStates * kNumActions, kNumStates);
  out.probs.setFromTriplets(triplets.begin(), triplets.end());
  out.probs.makeCompressed();
  return out;
}

}  // namespace sepsis

}  // namespace cairl
