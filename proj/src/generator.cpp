#include "cairl/generator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace cairl {

GeneratorSolution solve_generator_exact(const TabularMdp& mdp, const Reward& learned_reward, double alpha,
                                        const PlanningOptions& options, const Vector<double>* warm_start) {
  auto plan = soft_value_iteration(mdp, learned_reward, alpha, options, warm_start);
  GeneratorSolution out;
  out.log_policy = (plan.q_values.colwise() - plan.values) / alpha;
  out.policy = std::move(plan.policy);
  out.q_values = std::move(plan.q_values);
  out.values = std::move(plan.values);
  return out;
}

GeneratorSolution solve_generator_hard(const TabularMdp& mdp, const Reward& learned_reward, double epsilon,
                                       const PlanningOptions& options) {
  if (!(epsilon > 0 && epsilon <= 1)) throw DomainError("epsilon floor must lie in (0, 1]");
  auto plan = value_iteration(mdp, learned_reward, options);
  const double A = static_cast<double>(mdp.num_actions());
  Table<double> probs = (1.0 - epsilon) * plan.policy.probs();
  probs.array() += epsilon / A;
  GeneratorSolution out;
  out.log_policy = probs.array().log();
  out.policy = TabularPolicy(std::move(probs));
  out.q_values = std::move(plan.q_values);
  out.values = std::move(plan.values);
  return out;
}

Vector<double> soft_state_values(const QTable& q, double alpha) { return detail::soft_max_rows(q, alpha); }

void SoftQConfig::validate() const {
  if (!(alpha > 0)) throw ValidationError("soft-Q alpha must be positive");
  if (!(delta_sim >= 0)) throw ValidationError("delta_sim must be non-negative");
  if (!(bc_lambda0 >= 0)) throw ValidationError("bc_lambda0 must be non-negative");
  if (!(learning_rate > 0 && learning_rate <= 1)) throw ValidationError("soft-Q learning_rate must lie in (0, 1]");
  if (epochs < 0) throw ValidationError("soft-Q epochs must be non-negative");
  if (sync_rate <= 0) throw ValidationError("sync_rate must be positive");
  if (!(huber_kappa > 0)) throw ValidationError("huber_kappa must be positive");
  if (!std::isfinite(initial_q)) throw ValidationError("initial_q must be finite");
}

namespace {

// Logged next states of one (s, a) entry. Expert and simulated terms that reuse
// the same logged next state share a target, so they are merged per epoch.
struct LoggedTarget {
  Index next_state;
  double reward;
  double expert_weight;
  double sim_weight = 0.0;
};

struct Entry {
  std::vector<LoggedTarget> logged;
};

}  // namespace

SoftQResult soft_q_learn(const TrajectoryBatch& expert, const TabularMdp& transition_model,
                         const Reward& learned_reward, const TabularPolicy& bc_policy,
                         const SoftQConfig& config, std::uint64_t seed) {
  config.validate();
  const Index S = transition_model.num_states(), A = transition_model.num_actions();
  if (bc_policy.num_states() != S || bc_policy.num_actions() != A)
    throw ShapeError("bc_policy shape does not match the transition model");
  const std::size_t N = count_transitions(expert);
  if (N == 0) throw EmptyInputError("soft_q_learn needs at least one expert transition");
  if (config.bc_lambda0 > 0 && bc_policy.probs().minCoeff() <= 0)
    throw DomainError("bc_policy must be strictly positive for the KL penalty");
  const double gamma = transition_model.discount();
  const double alpha = config.alpha;
  const double inv_n = 1.0 / static_cast<double>(N);

  std::map<Index, Entry> entries;
  std::vector<double> state_count(static_cast<std::size_t>(S), 0.0);
  struct Item {
    Index s, a;
    std::size_t target;  // index into entries[s*A+a].logged
  };
  std::vector<Item> items;
  items.reserve(N);
  for (const auto& traj : expert)
    for (const auto& step : traj.steps) {
      if (step.state >= S || step.next_state >= S || step.action >= A)
        throw ShapeError("expert transition out of range of the transition model");
      Entry& e = entries[step.state * A + step.action];
      std::size_t k = 0;
      while (k < e.logged.size() && e.logged[k].next_state != step.next_state) ++k;
      if (k == e.logged.size())
        e.logged.push_back({step.next_state, learned_reward(step.state, step.action, step.next_state), 0.0});
      e.logged[k].expert_weight += 1.0;
      state_count[static_cast<std::size_t>(step.state)] += 1.0;
      items.push_back({step.state, step.action, k});
    }
  std::vector<Index> batch_states;
  for (Index s = 0; s < S; ++s)
    if (state_count[static_cast<std::size_t>(s)] > 0) batch_states.push_back(s);
  const std::vector<Index> terminals = transition_model.terminal_states();

  const Table<double> R = learned_reward.expected(transition_model);
  const Table<double> log_bc = bc_policy.probs().array().max(1e-300).log();
  QTable Q = QTable::Constant(S, A, config.initial_q);

  SoftQResult out;
  const double half = 0.5 * static_cast<double>(config.epochs);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda =
        config.bc_decay ? config.bc_lambda0 * std::max(0.0, 1.0 - static_cast<double>(epoch) / half)
                        : config.bc_lambda0;

    // Absorbing terminal states never appear as logged sources; their values
    // follow the model's self-loop backup so that bootstrapped targets are sound.
    {
      const Vector<double> V = soft_state_values(Q, alpha);
      for (Index s : terminals) Q.row(s) = R.row(s).array() + gamma * V(s);
    }
    const QTable target_q = Q;
    const Vector<double> V_target = soft_state_values(target_q, alpha);
    const Table<double> expected_target = detail::backup(transition_model, R, V_target);
    const Table<double> pi = TabularPolicy::softmax(Q, alpha).probs();

    for (auto& [row, e] : entries)
      for (auto& t : e.logged) t.sim_weight = 0.0;
    std::vector<double> expected_weight(static_cast<std::size_t>(S * A), 0.0);
    if (config.delta_sim > 0 && config.expected_simulation) {
      for (const Item& item : items)
        for (Index a = 0; a < A; ++a) {
          const double w = config.delta_sim * pi(item.s, a);
          if (a == item.a)
            entries[item.s * A + a].logged[item.target].sim_weight += w;
          else
            expected_weight[static_cast<std::size_t>(item.s * A + a)] += w;
        }
    } else if (config.delta_sim > 0) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
      for (const Item& item : items) {
        const Index a = static_cast<Index>(sample_categorical(pi.row(item.s), uniform01(rng)));
        if (a == item.a)
          entries[item.s * A + a].logged[item.target].sim_weight += config.delta_sim;
        else
          expected_weight[static_cast<std::size_t>(item.s * A + a)] += config.delta_sim;
      }
    }

    // Flattened per-entry target groups for the inner loop.
    struct Group {
      Index row;
      double target;
      double weight;
    };
    std::vector<Group> groups;
    std::vector<double> td_weight(static_cast<std::size_t>(S * A), 0.0);
    for (const auto& [row, e] : entries)
      for (const auto& t : e.logged) {
        const double w = (t.expert_weight + t.sim_weight) * inv_n;
        groups.push_back({row, t.reward + gamma * V_target(t.next_state), w});
        td_weight[static_cast<std::size_t>(row)] += w;
      }
    for (Index row = 0; row < S * A; ++row) {
      const double w = expected_weight[static_cast<std::size_t>(row)] * inv_n;
      if (w <= 0) continue;
      groups.push_back({row, expected_target(row / A, row % A), w});
      td_weight[static_cast<std::size_t>(row)] += w;
    }

    QTable grad(S, A), precond(S, A);
    double loss = 0.0;
    for (int step = 0; step < config.sync_rate; ++step) {
      grad.setZero();
      for (Index row = 0; row < S * A; ++row) precond(row / A, row % A) = td_weight[static_cast<std::size_t>(row)];
      for (const Group& g : groups)
        grad(g.row / A, g.row % A) += g.weight * huber_gradient(Q(g.row / A, g.row % A) - g.target, config.huber_kappa);

      if (lambda > 0) {
        for (Index s : batch_states) {
          const double scale = lambda * state_count[static_cast<std::size_t>(s)] * inv_n;
          const double peak = Q.row(s).maxCoeff();
          Eigen::RowVectorXd logp = (Q.row(s).array() - peak) / alpha;
          logp.array() -= std::log(logp.array().exp().sum());
          const Eigen::RowVectorXd p = logp.array().exp();
          const Eigen::RowVectorXd log_ratio = logp - log_bc.row(s);
          const double kl = (p.array() * log_ratio.array()).sum();
          grad.row(s).array() += scale / alpha * p.array() * (log_ratio.array() - kl);
          precond.row(s).array() += scale / (alpha * alpha) * p.array().max(1e-12);
        }
      }

      for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
          if (precond(s, a) > 0) Q(s, a) -= config.learning_rate * grad(s, a) / precond(s, a);
    }
    if (!Q.allFinite()) throw DivergenceError("soft_q_learn produced non-finite Q values at epoch " + std::to_string(epoch));

    for (const Group& g : groups) loss += g.weight * huber(Q(g.row / A, g.row % A) - g.target, config.huber_kappa);
    if (lambda > 0) {
      const Table<double> p = TabularPolicy::softmax(Q, alpha).probs();
      for (Index s : batch_states) {
        const double kl = (p.row(s).array() * (p.row(s).array().max(1e-300).log() - log_bc.row(s).array())).sum();
        loss += lambda * state_count[static_cast<std::size_t>(s)] * inv_n * kl;
      }
    }
    out.loss_history.push_back(loss);
  }
  out.policy = TabularPolicy::softmax(Q, alpha);
  out.q_values = std::move(Q);
  return out;
}

void write_q_table(const std::string& path, const QTable& q) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << "s,a,q\n";
  char buf[64];
  for (Index s = 0; s < q.rows(); ++s)
    for (Index a = 0; a < q.cols(); ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", q(s, a));
      file << s << ',' << a << ',' << buf << '\n';
    }
  if (!file) throw IoError("failed writing " + path);
}

}  // namespace cairl
