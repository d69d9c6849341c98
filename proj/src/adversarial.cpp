#include "cairl/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cairl/transition_estimation.hpp"

namespace cairl {

std::string to_string(FeatureMapMode mode) {
  return mode == FeatureMapMode::NextState ? "next_state" : "current_state";
}

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::SoftValueIteration: return "soft_vi";
    case GeneratorKind::HardValueIteration: return "hard_vi";
    case GeneratorKind::SoftQ: return "soft_q";
  }
  return "soft_vi";
}

void DiscriminatorConfig::validate() const {
  if (!(gamma >= 0 && gamma < 1)) throw ValidationError("discriminator gamma must lie in [0, 1)");
  if (!(label_smoothing >= 0 && label_smoothing < 0.5))
    throw ValidationError("label_smoothing must lie in [0, 0.5)");
  if (!(input_noise_sigma >= 0)) throw ValidationError("input_noise_sigma must be non-negative");
  if (!(noise_decay_fraction >= 0 && noise_decay_fraction <= 1))
    throw ValidationError("noise_decay_fraction must lie in [0, 1]");
  if (disc_steps_per_gen_update <= 0) throw ValidationError("disc_steps_per_gen_update must be positive");
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
  if (epochs < 0) throw ValidationError("epochs must be non-negative");
  for (int width : mlp.hidden)
    if (width <= 0) throw ValidationError("hidden layer widths must be positive");
}

double DiscriminatorConfig::noise_sigma(long step, long total_steps) const {
  if (input_noise_sigma == 0) return 0.0;
  if (noise_decay_fraction == 0 || total_steps <= 0) return input_noise_sigma;
  const double horizon = noise_decay_fraction * static_cast<double>(total_steps);
  return input_noise_sigma * std::max(0.0, 1.0 - static_cast<double>(step) / horizon);
}

void GeneratorConfig::validate() const {
  if (!(alpha > 0)) throw ValidationError("generator alpha must be positive");
  if (!(epsilon > 0 && epsilon <= 1)) throw ValidationError("generator epsilon must lie in (0, 1]");
  if (!(planning.tol > 0) || planning.max_sweeps <= 0) throw ValidationError("invalid planning options");
  if (!(bc_smoothing > 0)) throw ValidationError("bc_smoothing must be positive");
  soft_q.validate();
}

Discriminator make_discriminator(const EnvironmentFeatures& env, const DiscriminatorConfig& config,
                                 std::uint64_t seed) {
  return {make_reward_model(config.reward_family, env.reward_specs, derive_seed(seed, 1), config.mlp),
          make_reward_model(config.reward_family, env.state_specs, derive_seed(seed, 2), config.mlp)};
}

std::vector<LoggedItem> flatten_batch(const TrajectoryBatch& batch, const EnvironmentFeatures& env) {
  std::vector<LoggedItem> out;
  out.reserve(count_transitions(batch));
  for (const auto& traj : batch)
    for (const auto& step : traj.steps) {
      LoggedItem item{step.state, step.action, step.next_state, 0.5, 0.5};
      if (env.occurrence_noise) {
        item.noise_state = env.occurrence_noise(traj.seed, step.timestep);
        item.noise_next = env.occurrence_noise(traj.seed, step.timestep + 1);
      }
      out.push_back(item);
    }
  return out;
}

GeneratedBatch build_generated_batch(const std::vector<LoggedItem>& expert, const Table<double>& log_policy,
                                     const TabularMdp& transition_model, std::uint64_t seed) {
  GeneratedBatch out;
  out.reserve(expert.size());
  const Index A = transition_model.num_actions();
  Eigen::VectorXd probs(A);
  for (std::size_t i = 0; i < expert.size(); ++i) {
    const LoggedItem& e = expert[i];
    SplitMix rng(derive_seed(seed, i));
    probs = log_policy.row(e.state).array().exp().transpose();
    const Index a = static_cast<Index>(sample_categorical(probs, rng.uniform()));
    GeneratedItem g;
    g.state = e.state;
    g.action = a;
    g.log_pi = log_policy(e.state, a);
    g.noise_state = e.noise_state;
    if (a == e.action) {
      g.next_state = e.next_state;
      g.noise_next = e.noise_next;
      g.provenance = Provenance::LoggedNext;
    } else {
      g.next_state = sample_next_state(transition_model, e.state, a, rng.uniform());
      g.noise_next = rng.uniform();
      g.provenance = Provenance::SimulatedNext;
    }
    out.push_back(g);
  }
  return out;
}

GeneratedBatch build_generated_batch(const TrajectoryBatch& expert, const EnvironmentFeatures& env,
                                     const TabularPolicy& policy, const TabularMdp& transition_model,
                                     std::uint64_t seed) {
  const Table<double> log_policy = policy.probs().array().log();
  return build_generated_batch(flatten_batch(expert, env), log_policy, transition_model, seed);
}

namespace {

template <typename Item>
DiscriminatorInputs make_inputs_impl(const std::vector<Item>& items, std::span<const std::size_t> indices,
                                     const EnvironmentFeatures& env, FeatureMapMode mode, auto&& log_pi_of) {
  const auto n = static_cast<Index>(indices.size());
  DiscriminatorInputs in;
  in.reward.resize(n, env.reward_table.cols());
  in.state_current.resize(n, env.state_table.cols());
  in.state_next.resize(n, env.state_table.cols());
  in.log_pi.resize(n);
  for (Index r = 0; r < n; ++r) {
    const Item& item = items[indices[static_cast<std::size_t>(r)]];
    const bool next = mode == FeatureMapMode::NextState;
    const Index phi_state = next ? item.next_state : item.state;
    in.reward.row(r) = env.reward_table.row(phi_state);
    if (env.has_noise()) in.reward(r, env.noise_column) = next ? item.noise_next : item.noise_state;
    in.state_current.row(r) = env.state_table.row(item.state);
    in.state_next.row(r) = env.state_table.row(item.next_state);
    in.log_pi(r) = log_pi_of(item);
  }
  return in;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DiscriminatorInputs make_inputs(const std::vector<LoggedItem>& items, std::span<const std::size_t> indices,
                                const Table<double>& log_policy, const EnvironmentFeatures& env,
                                FeatureMapMode mode) {
  return make_inputs_impl(items, indices, env, mode,
                          [&](const LoggedItem& item) { return log_policy(item.state, item.action); });
}

DiscriminatorInputs make_inputs(const GeneratedBatch& items, std::span<const std::size_t> indices,
                                const EnvironmentFeatures& env, FeatureMapMode mode) {
  return make_inputs_impl(items, indices, env, mode, [](const GeneratedItem& item) { return item.log_pi; });
}

Eigen::VectorXd discriminator_logits(const Discriminator& disc, const DiscriminatorInputs& inputs,
                                     const DiscriminatorConfig& config) {
  Eigen::VectorXd logits = forward_batch(disc.g, inputs.reward) - inputs.log_pi;
  if (config.use_shaping)
    logits += config.shaping_discount() * forward_batch(disc.h, inputs.state_next) -
              forward_batch(disc.h, inputs.state_current);
  return logits;
}

double discriminator_logit(const Discriminator& disc, const EnvironmentFeatures& env,
                           const DiscriminatorConfig& config, Index s, Index a, Index s_next,
                           double noise_state, double noise_next, const TabularPolicy& policy) {
  const double p = policy(s, a);
  if (!(p > 0)) throw DomainError("discriminator_logit: generator probability is zero (log of zero)");
  std::vector<LoggedItem> items{{s, a, s_next, noise_state, noise_next}};
  const std::size_t index = 0;
  DiscriminatorInputs in = make_inputs_impl(items, std::span<const std::size_t>(&index, 1), env,
                                            config.feature_map_mode,
                                            [&](const LoggedItem&) { return std::log(p); });
  return discriminator_logits(disc, in, config)(0);
}

DiscriminatorOptimizer make_optimizer(const Discriminator& disc, double learning_rate) {
  return {AdamState(parameters(disc.g).size(), learning_rate), AdamState(parameters(disc.h).size(), learning_rate)};
}

DiscriminatorLoss discriminator_loss(const Discriminator& disc, const DiscriminatorInputs& expert,
                                     const DiscriminatorInputs& generated, const DiscriminatorConfig& config,
                                     Eigen::VectorXd* grad_g, Eigen::VectorXd* grad_h) {
  if (expert.size() == 0 || generated.size() == 0) throw EmptyInputError("discriminator batches must be non-empty");
  DiscriminatorLoss loss;
  if (grad_g) *grad_g = Eigen::VectorXd::Zero(parameters(disc.g).size());
  if (grad_h) *grad_h = Eigen::VectorXd::Zero(parameters(disc.h).size());
  const double target_expert = 1.0 - config.label_smoothing;
  auto side = [&](const DiscriminatorInputs& in, double target) {
    const Eigen::VectorXd logits = discriminator_logits(disc, in, config);
    const double inv = 1.0 / static_cast<double>(in.size());
    double total = 0.0;
    Eigen::VectorXd upstream(in.size());
    for (Index i = 0; i < in.size(); ++i) {
      total += softplus(logits(i)) - target * logits(i);
      upstream(i) = (sigmoid(logits(i)) - target) * inv;
    }
    if (grad_g) accumulate_gradient(disc.g, in.reward, upstream, *grad_g);
    if (grad_h && config.use_shaping) {
      accumulate_gradient(disc.h, in.state_next, config.shaping_discount() * upstream, *grad_h);
      accumulate_gradient(disc.h, in.state_current, -upstream, *grad_h);
    }
    return total * inv;
  };
  loss.expert = side(expert, target_expert);
  loss.generated = side(generated, 0.0);
  return loss;
}

DiscriminatorLoss discriminator_train_step(Discriminator& disc, DiscriminatorInputs expert,
                                           DiscriminatorInputs generated, const DiscriminatorConfig& config,
                                           DiscriminatorOptimizer& optimizer, long step, long total_steps,
                                           Rng& rng, const std::vector<FeatureSpec>& reward_specs) {
  const double sigma = config.noise_sigma(step, total_steps);
  if (sigma > 0) {
    std::normal_distribution<double> normal(0.0, sigma);
    for (std::size_t j = 0; j < reward_specs.size(); ++j) {
      if (reward_specs[j].is_discrete()) continue;
      const auto col = static_cast<Index>(j);
      for (Index i = 0; i < expert.size(); ++i) expert.reward(i, col) += normal(rng);
      for (Index i = 0; i < generated.size(); ++i) generated.reward(i, col) += normal(rng);
    }
  }
  Eigen::VectorXd grad_g, grad_h;
  const DiscriminatorLoss loss = discriminator_loss(disc, expert, generated, config, &grad_g, &grad_h);
  if (!std::isfinite(loss.total()) || !grad_g.allFinite() || !grad_h.allFinite()) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "discriminator diverged at step %ld: expert loss %g, generated loss %g", step,
                  loss.expert, loss.generated);
    throw DivergenceError(buf);
  }
  adam_step(parameters(disc.g), grad_g, optimizer.g);
  if (config.use_shaping) adam_step(parameters(disc.h), grad_h, optimizer.h);
  return loss;
}

Reward learned_reward(const Discriminator& disc, const EnvironmentFeatures& env, FeatureMapMode mode) {
  Vector<double> r = expected_state_reward(disc.g, env);
  return mode == FeatureMapMode::NextState ? Reward::next_state(std::move(r)) : Reward::state(std::move(r));
}

GeneratorSolution solve_generator(const TrajectoryBatch& expert, const TabularMdp& transition_model,
                                  const Reward& reward, const GeneratorConfig& config, std::uint64_t seed,
                                  const Vector<double>* warm_start) {
  switch (config.kind) {
    case GeneratorKind::SoftValueIteration:
      return solve_generator_exact(transition_model, reward, config.alpha, config.planning, warm_start);
    case GeneratorKind::HardValueIteration:
      return solve_generator_hard(transition_model, reward, config.epsilon, config.planning);
    case GeneratorKind::SoftQ: {
      const auto bc = fit_behavior_policy(expert, transition_model.num_states(), transition_model.num_actions(),
                                          config.bc_smoothing);
      SoftQConfig q = config.soft_q;
      q.alpha = config.alpha;
      auto learned = soft_q_learn(expert, transition_model, reward, bc.policy, q, seed);
      GeneratorSolution out;
      out.values = soft_state_values(learned.q_values, q.alpha);
      out.log_policy = (learned.q_values.colwise() - out.values) / q.alpha;
      out.policy = std::move(learned.policy);
      out.q_values = std::move(learned.q_values);
      return out;
    }
  }
  throw ValidationError("unknown generator kind");
}

TrainResult train_cairl(const TrajectoryBatch& expert, const TabularMdp& transition_model,
                        const EnvironmentFeatures& env, const DiscriminatorConfig& config,
                        const GeneratorConfig& generator, std::uint64_t seed, const GroundTruthMonitor* monitor) {
  config.validate();
  generator.validate();
  if (env.num_states() != transition_model.num_states())
    throw ShapeError("feature tables do not match the transition model");
  const std::vector<LoggedItem> items = flatten_batch(expert, env);
  if (items.empty()) throw EmptyInputError("expert batch has no transitions");

  TrainResult result{make_discriminator(env, config, seed), {}, {}};
  DiscriminatorOptimizer optimizer = make_optimizer(result.disc, config.learning_rate);

  std::uint64_t solve_count = 0;
  auto resolve = [&](const Vector<double>* warm) {
    const Reward reward = learned_reward(result.disc, env, config.feature_map_mode);
    result.generator =
        solve_generator(expert, transition_model, reward, generator, derive_seed(seed, 1000 + solve_count), warm);
    ++solve_count;
  };
  resolve(nullptr);
  if (config.epochs == 0) return result;

  GeneratedBatch generated =
      build_generated_batch(items, result.generator.log_policy, transition_model, derive_seed(seed, 2000));
  const std::size_t n = items.size();
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = steps_per_epoch * config.epochs;
  Rng rng(derive_seed(seed, 3000));
  std::vector<std::size_t> expert_order(n), generated_order(n);
  std::iota(expert_order.begin(), expert_order.end(), 0);
  std::iota(generated_order.begin(), generated_order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(expert_order.begin(), expert_order.end(), rng);
    std::shuffle(generated_order.begin(), generated_order.end(), rng);
    double loss_sum = 0.0;
    for (long k = 0; k < steps_per_epoch; ++k) {
      const std::size_t begin = static_cast<std::size_t>(k) * batch;
      const std::size_t count = std::min(batch, n - begin);
      const std::span<const std::size_t> e_idx(expert_order.data() + begin, count);
      const std::span<const std::size_t> g_idx(generated_order.data() + begin, count);
      auto e_in = make_inputs(items, e_idx, result.generator.log_policy, env, config.feature_map_mode);
      auto g_in = make_inputs(generated, g_idx, env, config.feature_map_mode);
      loss_sum += discriminator_train_step(result.disc, std::move(e_in), std::move(g_in), config, optimizer, step,
                                           total_steps, rng, env.reward_specs)
                      .total();
      ++step;
      if (step % config.disc_steps_per_gen_update == 0) {
        const Vector<double> warm = result.generator.values;
        resolve(generator.kind == GeneratorKind::SoftValueIteration ? &warm : nullptr);
        generated = build_generated_batch(items, result.generator.log_policy, transition_model,
                                          derive_seed(seed, 2000 + static_cast<std::uint64_t>(step)));
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.disc_loss = loss_sum / static_cast<double>(steps_per_epoch);
    if (monitor && monitor->eval_mdp) {
      log.gen_return = evaluate_policy(*monitor->eval_mdp, result.generator.policy, monitor->reward);
      if (!std::isfinite(log.gen_return)) throw DivergenceError("generator return is not finite");
      if (family_of(result.disc.g) != RewardFamily::Mlp && !monitor->truth.features.empty()) {
        const ShapeGraph graph = export_shape_graph(result.disc.g, monitor->counts);
        const ScalingResult scaling = scale_to_ground_truth(graph, monitor->truth, monitor->scaling);
        log.shape_dist = shape_distance(graph, monitor->truth, scaling, monitor->scaling);
      }
    }
    result.history.push_back(log);
  }
  return result;
}

void write_history(const std::string& path, const std::vector<EpochLog>& history) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << "epoch,disc_loss,gen_return,shape_dist\n";
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", h.epoch, h.disc_loss, h.gen_return, h.shape_dist);
    file << buf;
  }
  if (!file) throw IoError("failed writing " + path);
}

}  // namespace cairl
