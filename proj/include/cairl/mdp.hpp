#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cairl/errors.hpp"
#include "cairl/random.hpp"

namespace cairl {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense (state x action) table. Row-major so that one state's actions are contiguous.
template <typename Scalar>
using Table = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Transition rows indexed by `state * num_actions + action`, columns by next state.
template <typename Scalar>
using TransitionMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

inline constexpr double kStochasticTolerance = 1e-9;

/**
 * Finite MDP without a reward: states, actions, transition kernel, initial
 * distribution, discount and evaluation horizon. Rewards are supplied separately
 * so the same environment can be scored under ground-truth and learned rewards.
 *
 * Terminal states are absorbing: their rows must be self-loops, and rewards keep
 * accruing there until the horizon.
 */
template <typename Scalar>
class BasicTabularMdp {
 public:
  BasicTabularMdp() = default;

  BasicTabularMdp(Index num_states, Index num_actions, TransitionMatrix<Scalar> transitions,
                  Vector<Scalar> initial_dist, Scalar discount, int horizon,
                  std::vector<Index> terminal_states = {})
      : num_states_(num_states),
        num_actions_(num_actions),
        transitions_(std::move(transitions)),
        initial_(std::move(initial_dist)),
        discount_(discount),
        horizon_(horizon),
        terminal_(static_cast<std::size_t>(num_states), false) {
    for (Index s : terminal_states) {
      if (s < 0 || s >= num_states_) throw ValidationError("terminal state out of range");
      terminal_[static_cast<std::size_t>(s)] = true;
    }
    transitions_.makeCompressed();
    validate();
  }

  /// Builds from a dense (S*A) x S row matrix; convenient for small hand-written models.
  static BasicTabularMdp from_dense(Index num_states, Index num_actions, const Table<Scalar>& rows,
                                    Vector<Scalar> initial_dist, Scalar discount, int horizon,
                                    std::vector<Index> terminal_states = {}) {
    if (rows.rows() != num_states * num_actions || rows.cols() != num_states)
      throw ShapeError("dense transition table must be (S*A) x S");
    TransitionMatrix<Scalar> sparse = rows.sparseView();
    return BasicTabularMdp(num_states, num_actions, std::move(sparse), std::move(initial_dist),
                           discount, horizon, std::move(terminal_states));
  }

  Index num_states() const noexcept { return num_states_; }
  Index num_actions() const noexcept { return num_actions_; }
  Index row_index(Index s, Index a) const noexcept { return s * num_actions_ + a; }
  const TransitionMatrix<Scalar>& transitions() const noexcept { return transitions_; }
  const Vector<Scalar>& initial_distribution() const noexcept { return initial_; }
  Scalar discount() const noexcept { return discount_; }
  int horizon() const noexcept { return horizon_; }
  bool is_terminal(Index s) const { return terminal_[static_cast<std::size_t>(s)]; }

  std::vector<Index> terminal_states() const {
    std::vector<Index> out;
    for (Index s = 0; s < num_states_; ++s)
      if (is_terminal(s)) out.push_back(s);
    return out;
  }

  Scalar probability(Index s, Index a, Index s_next) const {
    return transitions_.coeff(row_index(s, a), s_next);
  }

  /// Same dynamics under another discount factor.
  BasicTabularMdp with_discount(Scalar discount) const {
    BasicTabularMdp copy = *this;
    copy.discount_ = discount;
    copy.validate();
    return copy;
  }

  BasicTabularMdp with_horizon(int horizon) const {
    BasicTabularMdp copy = *this;
    copy.horizon_ = horizon;
    copy.validate();
    return copy;
  }

 private:
  void validate() const {
    if (num_states_ <= 0 || num_actions_ <= 0) throw ValidationError("MDP needs states and actions");
    if (transitions_.rows() != num_states_ * num_actions_ || transitions_.cols() != num_states_)
      throw ShapeError("transition matrix must be (S*A) x S");
    if (initial_.size() != num_states_) throw ShapeError("initial distribution has wrong length");
    if (!(discount_ >= 0 && discount_ < 1)) throw ValidationError("discount must lie in [0, 1)");
    if (horizon_ <= 0) throw ValidationError("horizon must be positive");
    if (std::abs(initial_.sum() - Scalar(1)) > kStochasticTolerance || initial_.minCoeff() < 0)
      throw ValidationError("initial distribution must be a probability vector");
    for (Index r = 0; r < transitions_.outerSize(); ++r) {
      Scalar total = 0;
      for (typename TransitionMatrix<Scalar>::InnerIterator it(transitions_, r); it; ++it) {
        if (it.value() < 0) throw ValidationError("negative transition probability");
        total += it.value();
      }
      if (std::abs(total - Scalar(1)) > kStochasticTolerance)
        throw ValidationError("transition row " + std::to_string(r) + " does not sum to 1");
    }
    for (Index s = 0; s < num_states_; ++s) {
      if (!is_terminal(s)) continue;
      for (Index a = 0; a < num_actions_; ++a)
        if (std::abs(probability(s, a, s) - Scalar(1)) > kStochasticTolerance)
          throw ValidationError("terminal state " + std::to_string(s) + " must self-loop");
    }
  }

  Index num_states_ = 0;
  Index num_actions_ = 0;
  TransitionMatrix<Scalar> transitions_;
  Vector<Scalar> initial_;
  Scalar discount_ = 0;
  int horizon_ = 1;
  std::vector<bool> terminal_;
};

/// Stochastic stationary policy: one probability row per state.
template <typename Scalar>
class BasicPolicy {
 public:
  BasicPolicy() = default;

  explicit BasicPolicy(Table<Scalar> probs) : probs_(std::move(probs)) {
    for (Index s = 0; s < probs_.rows(); ++s) {
      if (probs_.row(s).minCoeff() < 0) throw ValidationError("negative policy probability");
      if (std::abs(probs_.row(s).sum() - Scalar(1)) > kStochasticTolerance)
        throw ValidationError("policy row " + std::to_string(s) + " does not sum to 1");
    }
  }

  static BasicPolicy uniform(Index num_states, Index num_actions) {
    return BasicPolicy(Table<Scalar>::Constant(num_states, num_actions, Scalar(1) / num_actions));
  }

  static BasicPolicy deterministic(std::span<const Index> actions, Index num_actions) {
    Table<Scalar> probs = Table<Scalar>::Zero(static_cast<Index>(actions.size()), num_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) probs(static_cast<Index>(s), actions[s]) = 1;
    return BasicPolicy(std::move(probs));
  }

  /// Softmax of `q / alpha` per state.
  static BasicPolicy softmax(const Table<Scalar>& q, Scalar alpha) {
    Table<Scalar> probs(q.rows(), q.cols());
    for (Index s = 0; s < q.rows(); ++s) {
      const Scalar peak = q.row(s).maxCoeff();
      probs.row(s) = ((q.row(s).array() - peak) / alpha).exp().matrix();
      probs.row(s) /= probs.row(s).sum();
    }
    return BasicPolicy(std::move(probs));
  }

  Index num_states() const noexcept { return probs_.rows(); }
  Index num_actions() const noexcept { return probs_.cols(); }
  const Table<Scalar>& probs() const noexcept { return probs_; }
  Scalar operator()(Index s, Index a) const { return probs_(s, a); }

  /// Most probable action; ties go to the lowest id.
  Index argmax(Index s) const {
    Index best = 0;
    for (Index a = 1; a < probs_.cols(); ++a)
      if (probs_(s, a) > probs_(s, best)) best = a;
    return best;
  }

 private:
  Table<Scalar> probs_;
};

/**
 * Reward r(s, a, s'). The common special cases (functions of s' only, of s
 * only, or of (s, a)) are stored as tables so expected rewards reduce to a
 * sparse product; anything else goes through a callable.
 */
template <typename Scalar>
class BasicReward {
 public:
  enum class Kind { NextState, State, StateAction, General };

  static BasicReward next_state(Vector<Scalar> r) {
    BasicReward out;
    out.kind_ = Kind::NextState;
    out.vector_ = std::move(r);
    return out;
  }
  static BasicReward state(Vector<Scalar> r) {
    BasicReward out;
    out.kind_ = Kind::State;
    out.vector_ = std::move(r);
    return out;
  }
  static BasicReward state_action(Table<Scalar> r) {
    BasicReward out;
    out.kind_ = Kind::StateAction;
    out.table_ = std::move(r);
    return out;
  }
  static BasicReward general(std::function<Scalar(Index, Index, Index)> f) {
    BasicReward out;
    out.kind_ = Kind::General;
    out.fn_ = std::move(f);
    return out;
  }
  static BasicReward zero(Index num_states) { return next_state(Vector<Scalar>::Zero(num_states)); }

  Kind kind() const noexcept { return kind_; }
  const Vector<Scalar>& vector() const noexcept { return vector_; }

  Scalar operator()(Index s, Index a, Index s_next) const {
    switch (kind_) {
      case Kind::NextState: return vector_(s_next);
      case Kind::State: return vector_(s);
      case Kind::StateAction: return table_(s, a);
      case Kind::General: return fn_(s, a, s_next);
    }
    return Scalar(0);
  }

  /// E_{s' ~ T(.|s,a)} r(s, a, s') as a (state x action) table.
  Table<Scalar> expected(const BasicTabularMdp<Scalar>& mdp) const {
    const Index S = mdp.num_states(), A = mdp.num_actions();
    switch (kind_) {
      case Kind::NextState: {
        check_length(vector_, S);
        Vector<Scalar> flat = mdp.transitions() * vector_;
        return Eigen::Map<const Table<Scalar>>(flat.data(), S, A);
      }
      case Kind::State:
        check_length(vector_, S);
        return vector_.replicate(1, A);
      case Kind::StateAction:
        if (table_.rows() != S || table_.cols() != A) throw ShapeError("reward table shape mismatch");
        return table_;
      case Kind::General: {
        Table<Scalar> out(S, A);
        for (Index s = 0; s < S; ++s)
          for (Index a = 0; a < A; ++a) {
            Scalar total = 0;
            for (typename TransitionMatrix<Scalar>::InnerIterator it(mdp.transitions(),
                                                                     mdp.row_index(s, a));
                 it; ++it)
              total += it.value() * fn_(s, a, it.col());
            out(s, a) = total;
          }
        return out;
      }
    }
    return {};
  }

 private:
  static void check_length(const Vector<Scalar>& v, Index n) {
    if (v.size() != n) throw ShapeError("reward vector length does not match the state count");
  }

  Kind kind_ = Kind::NextState;
  Vector<Scalar> vector_;
  Table<Scalar> table_;
  std::function<Scalar(Index, Index, Index)> fn_;
};

struct PlanningOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
};

template <typename Scalar>
struct PlanningResult {
  Vector<Scalar> values;
  Table<Scalar> q_values;
  BasicPolicy<Scalar> policy;
  int sweeps = 0;
  Scalar residual = 0;
};

namespace detail {

/// Q = R + gamma * P V, reshaped to (state x action).
template <typename Scalar>
Table<Scalar> backup(const BasicTabularMdp<Scalar>& mdp, const Table<Scalar>& expected_reward,
                     const Vector<Scalar>& values) {
  Vector<Scalar> next = mdp.transitions() * values;
  return expected_reward +
         mdp.discount() *
             Eigen::Map<const Table<Scalar>>(next.data(), mdp.num_states(), mdp.num_actions());
}

template <typename Scalar>
Vector<Scalar> soft_max_rows(const Table<Scalar>& q, Scalar alpha) {
  Vector<Scalar> out(q.rows());
  for (Index s = 0; s < q.rows(); ++s) {
    const Scalar peak = q.row(s).maxCoeff();
    out(s) = peak + alpha * std::log(((q.row(s).array() - peak) / alpha).exp().sum());
  }
  return out;
}

template <typename Scalar>
Index greedy_action(const Table<Scalar>& q, Index s) {
  const Scalar best = q.row(s).maxCoeff();
  const Scalar slack = Scalar(1e-9) * std::max(Scalar(1), std::abs(best));
  for (Index a = 0; a < q.cols(); ++a)
    if (q(s, a) >= best - slack) return a;
  return 0;
}

template <typename Scalar>
BasicPolicy<Scalar> greedy_policy(const Table<Scalar>& q) {
  std::vector<Index> actions(static_cast<std::size_t>(q.rows()));
  for (Index s = 0; s < q.rows(); ++s) actions[static_cast<std::size_t>(s)] = greedy_action(q, s);
  return BasicPolicy<Scalar>::deterministic(actions, q.cols());
}

}  // namespace detail

/// Hard (max) value iteration. The greedy policy breaks ties toward the lowest action id.
template <typename Scalar>
PlanningResult<Scalar> value_iteration(const BasicTabularMdp<Scalar>& mdp,
                                       const BasicReward<Scalar>& reward,
                                       const PlanningOptions& options = {}) {
  if (!(options.tol > 0)) throw DomainError("value_iteration: tol must be positive");
  const Table<Scalar> R = reward.expected(mdp);
  Vector<Scalar> V = Vector<Scalar>::Zero(mdp.num_states());
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  int sweep = 0;
  while (sweep < options.max_sweeps) {
    ++sweep;
    Vector<Scalar> next = detail::backup(mdp, R, V).rowwise().maxCoeff();
    residual = (next - V).cwiseAbs().maxCoeff();
    V = std::move(next);
    if (residual < options.tol) break;
  }
  if (!(residual < options.tol)) throw IterationLimitError("value_iteration did not converge", residual);
  PlanningResult<Scalar> out;
  out.q_values = detail::backup(mdp, R, V);
  out.values = out.q_values.rowwise().maxCoeff();
  out.policy = detail::greedy_policy(out.q_values);
  out.sweeps = sweep;
  out.residual = residual;
  return out;
}

/**
 * Entropy-regularized value iteration: V(s) = alpha * logsumexp_a(Q(s,a) / alpha),
 * policy = softmax(Q / alpha). `initial_values` (optional) warm-starts the sweep.
 */
template <typename Scalar>
PlanningResult<Scalar> soft_value_iteration(const BasicTabularMdp<Scalar>& mdp,
                                            const BasicReward<Scalar>& reward, Scalar alpha,
                                            const PlanningOptions& options = {},
                                            const Vector<Scalar>* initial_values = nullptr) {
  if (!(alpha > 0)) throw DomainError("soft_value_iteration: alpha must be positive");
  if (!(options.tol > 0)) throw DomainError("soft_value_iteration: tol must be positive");
  const Table<Scalar> R = reward.expected(mdp);
  Vector<Scalar> V = initial_values && initial_values->size() == mdp.num_states()
                         ? *initial_values
                         : Vector<Scalar>::Zero(mdp.num_states());
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  int sweep = 0;
  while (sweep < options.max_sweeps) {
    ++sweep;
    Vector<Scalar> next = detail::soft_max_rows(detail::backup(mdp, R, V), alpha);
    residual = (next - V).cwiseAbs().maxCoeff();
    V = std::move(next);
    if (!std::isfinite(residual)) throw DivergenceError("soft_value_iteration produced non-finite values");
    if (residual < options.tol) break;
  }
  if (!(residual < options.tol))
    throw IterationLimitError("soft_value_iteration did not converge", residual);
  PlanningResult<Scalar> out;
  out.q_values = detail::backup(mdp, R, V);
  out.values = detail::soft_max_rows(out.q_values, alpha);
  out.policy = BasicPolicy<Scalar>::softmax(out.q_values, alpha);
  out.sweeps = sweep;
  out.residual = residual;
  return out;
}

/// Backward induction over the evaluation horizon; one greedy policy per timestep.
template <typename Scalar>
std::vector<BasicPolicy<Scalar>> finite_horizon_value_iteration(const BasicTabularMdp<Scalar>& mdp,
                                                                const BasicReward<Scalar>& reward) {
  const Table<Scalar> R = reward.expected(mdp);
  std::vector<BasicPolicy<Scalar>> policies(static_cast<std::size_t>(mdp.horizon()));
  Vector<Scalar> V = Vector<Scalar>::Zero(mdp.num_states());
  for (int t = mdp.horizon() - 1; t >= 0; --t) {
    Table<Scalar> Q = detail::backup(mdp, R, V);
    policies[static_cast<std::size_t>(t)] = detail::greedy_policy(Q);
    V = Q.rowwise().maxCoeff();
  }
  return policies;
}

/// Exact discounted return over the horizon from the initial distribution, by
/// forward propagation of the state distribution. `policy_at(t)` selects the
/// policy active at timestep t.
template <typename Scalar, typename PolicyAt>
Scalar evaluate_policy_with(const BasicTabularMdp<Scalar>& mdp, PolicyAt&& policy_at,
                            const BasicReward<Scalar>& reward) {
  const Table<Scalar> R = reward.expected(mdp);
  Vector<Scalar> dist = mdp.initial_distribution();
  Scalar total = 0, weight = 1;
  Table<Scalar> occupancy(mdp.num_states(), mdp.num_actions());
  for (int t = 0; t < mdp.horizon(); ++t) {
    const BasicPolicy<Scalar>& pi = policy_at(t);
    if (pi.num_states() != mdp.num_states() || pi.num_actions() != mdp.num_actions())
      throw ShapeError("policy shape does not match the MDP");
    occupancy = pi.probs().array().colwise() * dist.array();
    total += weight * (occupancy.array() * R.array()).sum();
    Eigen::Map<const Vector<Scalar>> flat(occupancy.data(), occupancy.size());
    dist = mdp.transitions().transpose() * flat;
    weight *= mdp.discount();
  }
  return total;
}

template <typename Scalar>
Scalar evaluate_policy(const BasicTabularMdp<Scalar>& mdp, const BasicPolicy<Scalar>& policy,
                       const BasicReward<Scalar>& reward) {
  return evaluate_policy_with(mdp, [&](int) -> const BasicPolicy<Scalar>& { return policy; },
                              reward);
}

template <typename Scalar>
Scalar evaluate_policy(const BasicTabularMdp<Scalar>& mdp,
                       std::span<const BasicPolicy<Scalar>> per_timestep,
                       const BasicReward<Scalar>& reward) {
  if (static_cast<int>(per_timestep.size()) < mdp.horizon())
    throw ShapeError("need one policy per timestep of the horizon");
  return evaluate_policy_with(
      mdp, [&](int t) -> const BasicPolicy<Scalar>& { return per_timestep[static_cast<std::size_t>(t)]; },
      reward);
}

/// State distribution at each timestep 0..horizon-1 under a stationary policy.
template <typename Scalar>
std::vector<Vector<Scalar>> state_distributions(const BasicTabularMdp<Scalar>& mdp,
                                                const BasicPolicy<Scalar>& policy) {
  std::vector<Vector<Scalar>> out;
  Vector<Scalar> dist = mdp.initial_distribution();
  for (int t = 0; t < mdp.horizon(); ++t) {
    out.push_back(dist);
    Table<Scalar> occupancy = policy.probs().array().colwise() * dist.array();
    Eigen::Map<const Vector<Scalar>> flat(occupancy.data(), occupancy.size());
    dist = mdp.transitions().transpose() * flat;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logged experience
// ---------------------------------------------------------------------------

struct Transition {
  Index state = 0;
  Index action = 0;
  Index next_state = 0;
  int timestep = 0;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<Transition> steps;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using TrajectoryBatch = std::vector<Trajectory>;

inline std::size_t count_transitions(const TrajectoryBatch& batch) {
  std::size_t n = 0;
  for (const auto& traj : batch) n += traj.steps.size();
  return n;
}

/// Draws s' ~ T(.|s,a) with one uniform variate.
template <typename Scalar>
Index sample_next_state(const BasicTabularMdp<Scalar>& mdp, Index s, Index a, double u) {
  const auto& P = mdp.transitions();
  const Index row = mdp.row_index(s, a);
  Scalar target = static_cast<Scalar>(u);
  Index last = s;
  for (typename TransitionMatrix<Scalar>::InnerIterator it(P, row); it; ++it) {
    if (it.value() <= 0) continue;
    last = it.col();
    if (target < it.value()) return it.col();
    target -= it.value();
  }
  return last;
}

/**
 * Rolls out `n` trajectories. Trajectory i uses the derived seed
 * `derive_seed(seed, i)`, so output is reproducible and independent of how the
 * work is partitioned. A rollout stops after entering a terminal state or at the
 * horizon.
 */
template <typename Scalar, typename PolicyAt>
TrajectoryBatch sample_trajectories_with(const BasicTabularMdp<Scalar>& mdp, PolicyAt&& policy_at,
                                         std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_trajectories: n must be positive");
  TrajectoryBatch out(n);
  const auto& init = mdp.initial_distribution();
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory& traj = out[i];
    traj.seed = derive_seed(seed, i);
    Rng rng(traj.seed);
    Index s = static_cast<Index>(sample_categorical(init, uniform01(rng)));
    for (int t = 0; t < mdp.horizon() && !mdp.is_terminal(s); ++t) {
      const BasicPolicy<Scalar>& pi = policy_at(t);
      const Index a = static_cast<Index>(sample_categorical(pi.probs().row(s), uniform01(rng)));
      const Index next = sample_next_state(mdp, s, a, uniform01(rng));
      const bool done = mdp.is_terminal(next) || t + 1 == mdp.horizon();
      traj.steps.push_back({s, a, next, t, done});
      s = next;
    }
  }
  return out;
}

template <typename Scalar>
TrajectoryBatch sample_trajectories(const BasicTabularMdp<Scalar>& mdp,
                                    const BasicPolicy<Scalar>& policy, std::size_t n,
                                    std::uint64_t seed) {
  return sample_trajectories_with(
      mdp, [&](int) -> const BasicPolicy<Scalar>& { return policy; }, n, seed);
}

template <typename Scalar>
TrajectoryBatch sample_trajectories(const BasicTabularMdp<Scalar>& mdp,
                                    std::span<const BasicPolicy<Scalar>> per_timestep,
                                    std::size_t n, std::uint64_t seed) {
  if (static_cast<int>(per_timestep.size()) < mdp.horizon())
    throw ShapeError("need one policy per timestep of the horizon");
  return sample_trajectories_with(
      mdp,
      [&](int t) -> const BasicPolicy<Scalar>& { return per_timestep[static_cast<std::size_t>(t)]; },
      n, seed);
}

using TabularMdp = BasicTabularMdp<double>;
using TabularPolicy = BasicPolicy<double>;
using Reward = BasicReward<double>;
using QTable = Table<double>;

// Trajectory batch files: JSON lines, `{"v":1,"seed":int,"steps":[[s,a,s_next,t,done],...]}`.
void write_trajectories(const std::string& path, const TrajectoryBatch& batch);
std::string format_trajectories(const TrajectoryBatch& batch);
TrajectoryBatch read_trajectories(const std::string& path);
TrajectoryBatch parse_trajectories(const std::string& text);

/// Chain, timestep and horizon invariants of a logged batch.
void validate_batch(const TrajectoryBatch& batch, Index num_states, Index num_actions, int horizon);

}  // namespace cairl
