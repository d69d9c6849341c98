#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cairl/evaluation.hpp"
#include "cairl/features.hpp"
#include "cairl/generator.hpp"
#include "cairl/reward_models.hpp"

namespace cairl {

/// Which state feeds the reward term: s (AIRL) or s' (CAIRL).
enum class FeatureMapMode { CurrentState, NextState };
std::string to_string(FeatureMapMode mode);

struct DiscriminatorConfig {
  FeatureMapMode feature_map_mode = FeatureMapMode::NextState;
  RewardFamily reward_family = RewardFamily::Gam;
  MlpOptions mlp;
  double gamma = 0.9;
  /// One-sided label smoothing: expert target is 1 - label_smoothing.
  double label_smoothing = 0.0;
  /// Gaussian noise on continuous inputs, decayed linearly to zero over the
  /// first `noise_decay_fraction` of training (0 keeps it constant).
  double input_noise_sigma = 0.0;
  double noise_decay_fraction = 0.0;
  int disc_steps_per_gen_update = 20;
  int batch_size = 512;
  double learning_rate = 2e-4;
  int epochs = 100;
  /// Learn the shaping potential h; otherwise h stays identically zero.
  bool use_shaping = true;
  /// f = g + gamma h(s') - h(s); false drops gamma on h(s').
  bool gamma_on_shaping = true;

  void validate() const;
  double shaping_discount() const { return gamma_on_shaping ? gamma : 1.0; }
  /// sigma at step t of T.
  double noise_sigma(long step, long total_steps) const;
};

/// f(s, a, s') = g(phi) + gamma h(s') - h(s); D = f - log pi(a|s).
struct Discriminator {
  RewardModel g;
  RewardModel h;
};

Discriminator make_discriminator(const EnvironmentFeatures& env, const DiscriminatorConfig& config,
                                 std::uint64_t seed);

/// A logged transition with the noise values of its two state occurrences.
struct LoggedItem {
  Index state = 0;
  Index action = 0;
  Index next_state = 0;
  double noise_state = 0.5;
  double noise_next = 0.5;
};

std::vector<LoggedItem> flatten_batch(const TrajectoryBatch& batch, const EnvironmentFeatures& env);

enum class Provenance { LoggedNext, SimulatedNext };

struct GeneratedItem {
  Index state = 0;
  Index action = 0;
  Index next_state = 0;
  double log_pi = 0.0;
  Provenance provenance = Provenance::SimulatedNext;
  double noise_state = 0.5;
  double noise_next = 0.5;
};

using GeneratedBatch = std::vector<GeneratedItem>;

/**
 * One generated item per expert transition: a ~ policy(.|s); the logged next
 * state (and its noise) is reused when a equals the logged action, otherwise
 * s' ~ transition_model with fresh noise. Item i draws from derive_seed(seed, i).
 */
GeneratedBatch build_generated_batch(const std::vector<LoggedItem>& expert, const Table<double>& log_policy,
                                     const TabularMdp& transition_model, std::uint64_t seed);
GeneratedBatch build_generated_batch(const TrajectoryBatch& expert, const EnvironmentFeatures& env,
                                     const TabularPolicy& policy, const TabularMdp& transition_model,
                                     std::uint64_t seed);

/// Design matrices of a set of transitions.
struct DiscriminatorInputs {
  FeatureMatrix reward;         // g input: phi(s) or phi(s')
  FeatureMatrix state_current;  // h input at s
  FeatureMatrix state_next;     // h input at s'
  Eigen::VectorXd log_pi;

  Eigen::Index size() const { return log_pi.size(); }
};

DiscriminatorInputs make_inputs(const std::vector<LoggedItem>& items, std::span<const std::size_t> indices,
                                const Table<double>& log_policy, const EnvironmentFeatures& env,
                                FeatureMapMode mode);
DiscriminatorInputs make_inputs(const GeneratedBatch& items, std::span<const std::size_t> indices,
                                const EnvironmentFeatures& env, FeatureMapMode mode);

Eigen::VectorXd discriminator_logits(const Discriminator& disc, const DiscriminatorInputs& inputs,
                                     const DiscriminatorConfig& config);

/// Logit of one transition under the generator policy; pi(a|s) = 0 is a domain error.
double discriminator_logit(const Discriminator& disc, const EnvironmentFeatures& env,
                           const DiscriminatorConfig& config, Index s, Index a, Index s_next,
                           double noise_state, double noise_next, const TabularPolicy& policy);

struct DiscriminatorOptimizer {
  AdamState g;
  AdamState h;
};

DiscriminatorOptimizer make_optimizer(const Discriminator& disc, double learning_rate);

struct DiscriminatorLoss {
  /// Mean BCE of the expert side (target 1 - label_smoothing) and generated side (target 0).
  double expert = 0.0;
  double generated = 0.0;
  double total() const { return expert + generated; }
};

/// Mean BCE and its parameter gradients (g then h) without updating anything.
DiscriminatorLoss discriminator_loss(const Discriminator& disc, const DiscriminatorInputs& expert,
                                     const DiscriminatorInputs& generated, const DiscriminatorConfig& config,
                                     Eigen::VectorXd* grad_g = nullptr, Eigen::VectorXd* grad_h = nullptr);

/// One Adam step on g (and h when shaping is enabled). Input noise with
/// sigma = config.noise_sigma(step, total_steps) is added to continuous
/// reward-feature columns of both batches. Returns the pre-step loss.
DiscriminatorLoss discriminator_train_step(Discriminator& disc, DiscriminatorInputs expert,
                                           DiscriminatorInputs generated, const DiscriminatorConfig& config,
                                           DiscriminatorOptimizer& optimizer, long step, long total_steps,
                                           Rng& rng, const std::vector<FeatureSpec>& reward_specs = {});

/// Reward handed to the generator: the noise-expectation of g, as a function of
/// s' (CAIRL) or s (AIRL).
Reward learned_reward(const Discriminator& disc, const EnvironmentFeatures& env, FeatureMapMode mode);

enum class GeneratorKind { SoftValueIteration, HardValueIteration, SoftQ };
std::string to_string(GeneratorKind kind);

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::SoftValueIteration;
  double alpha = 0.5;
  /// Uniform mass mixed into the greedy policy for HardValueIteration.
  double epsilon = 0.05;
  PlanningOptions planning{1e-6, 10000};
  SoftQConfig soft_q;
  /// Laplace smoothing of the behavior-cloning anchor for SoftQ.
  double bc_smoothing = 0.1;

  void validate() const;
};

/// Policy improvement step shared by the training loop and the experiment driver.
GeneratorSolution solve_generator(const TrajectoryBatch& expert, const TabularMdp& transition_model,
                                  const Reward& reward, const GeneratorConfig& config, std::uint64_t seed,
                                  const Vector<double>* warm_start = nullptr);

/// Optional ground truth for per-epoch diagnostics.
struct GroundTruthMonitor {
  const TabularMdp* eval_mdp = nullptr;
  Reward reward;
  ShapeGraph truth;
  FeatureCounts counts;
  ScalingOptions scaling;
};

struct EpochLog {
  int epoch = 0;
  double disc_loss = 0.0;
  double gen_return = std::numeric_limits<double>::quiet_NaN();
  double shape_dist = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Discriminator disc;
  GeneratorSolution generator;
  std::vector<EpochLog> history;
};

/**
 * Alternating adversarial training. An epoch is one shuffled pass over the
 * expert transitions in minibatches; every `disc_steps_per_gen_update`
 * discriminator steps the generator is re-solved under the current reward and
 * the generated batch rebuilt.
 */
TrainResult train_cairl(const TrajectoryBatch& expert, const TabularMdp& transition_model,
                        const EnvironmentFeatures& env, const DiscriminatorConfig& config,
                        const GeneratorConfig& generator, std::uint64_t seed,
                        const GroundTruthMonitor* monitor = nullptr);

void write_history(const std::string& path, const std::vector<EpochLog>& history);

}  // namespace cairl
