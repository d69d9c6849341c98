#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cairl/adversarial.hpp"
#include "cairl/baselines.hpp"
#include "cairl/sepsis.hpp"

namespace cairl {

enum class Method { Mma, Cirl, Airl, Cairl, Bc };
std::string to_string(Method method);
Method method_from_string(const std::string& name);

enum class TransitionSource { True, Estimated };
enum class ExpertKind { Stationary, FiniteHorizon };
/// Policy scored for return and accuracy: the greedy optimum of the learned
/// reward, or the generator's own (stochastic) policy.
enum class EvalPolicy { Greedy, Generator };

struct EstimationConfig {
  double policy_smoothing = 0.1;
  double transition_smoothing = 0.01;
  double clip_max = 10.0;
  bool iptw = true;
};

/// Everything a run depends on. Serialized as JSON; unknown keys are rejected.
struct ExperimentConfig {
  sepsis::RewardKind mdp_kind = sepsis::RewardKind::GamMdp;
  double gamma = 0.9;
  Method method = Method::Cairl;
  RewardFamily reward_model = RewardFamily::Gam;
  TransitionSource transition = TransitionSource::True;
  int n_trajectories = 5000;
  std::vector<std::uint64_t> seeds = {0};
  bool noise_per_timestep = true;
  int noise_bins = 16;
  ExpertKind expert = ExpertKind::Stationary;
  EvalPolicy eval_policy = EvalPolicy::Greedy;
  sepsis::DynamicsConfig dynamics = sepsis::default_dynamics();
  DiscriminatorConfig discriminator;
  GeneratorConfig generator;
  MmaConfig mma;
  EstimationConfig estimation;

  void validate() const;
  /// Discriminator settings with gamma and the reward family filled in.
  DiscriminatorConfig discriminator_config() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& config);

/// Display name used in result tables, e.g. "GAM-CAIRL", "MMA".
std::string method_label(Method method, RewardFamily family);

struct ExpertData {
  TabularMdp mdp;
  Reward truth;
  TrajectoryBatch train;
  TrajectoryBatch test;
  double expert_return = 0.0;
  double uniform_return = 0.0;
};

TabularMdp build_environment(const ExperimentConfig& config);

/// Solves the expert on the true MDP and samples train and test batches.
ExpertData generate_expert(const ExperimentConfig& config, std::uint64_t seed);

struct RunOutput {
  std::string label;
  /// Policy scored at evaluation.
  TabularPolicy policy;
  std::optional<RewardModel> reward_model;
  std::optional<RewardModel> shaping_model;
  std::optional<ShapeGraph> shape;
  std::vector<EpochLog> history;
  std::vector<double> margins;
};

/// Per-feature value counts of the expert's next-state features.
FeatureCounts expert_feature_counts(const TrajectoryBatch& expert, const EnvironmentFeatures& env);

/// Centered shape graph of the ground-truth reward of `kind` under `counts`.
ShapeGraph ground_truth_shape(sepsis::RewardKind kind, const EnvironmentFeatures& env, const FeatureCounts& counts);

/// Trains the configured method on `train`. `monitor_truth` enables per-epoch
/// diagnostics against the ground truth.
RunOutput run_method(const ExperimentConfig& config, const TrajectoryBatch& train, std::uint64_t seed,
                     bool monitor_truth = true);

/// Exact return, Dist and accuracy of a run against the ground truth.
ResultRow score_run(const ExperimentConfig& config, const RunOutput& run, const TrajectoryBatch& test,
                    std::uint64_t seed, bool ground_truth = true);

/// Directory name of a run, e.g. "cairl-gam-gammdp-g0.9-s3".
std::string run_name(const ExperimentConfig& config, std::uint64_t seed);

void write_run(const std::string& dir, const ExperimentConfig& config, std::uint64_t seed, const RunOutput& run);
/// Rebuilds the parts of a run needed for scoring from its directory.
RunOutput read_run(const std::string& dir, ExperimentConfig* config, std::uint64_t* seed);

void write_shape_csv(const std::string& path, const ShapeGraph& graph);
ShapeGraph read_shape_csv(const std::string& path);
void write_policy_csv(const std::string& path, const TabularPolicy& policy);
TabularPolicy read_policy_csv(const std::string& path);

/// Every (method, reward model, mdp, gamma) cell of the comparison table.
std::vector<ExperimentConfig> sweep_cells(const ExperimentConfig& base);

}  // namespace cairl
