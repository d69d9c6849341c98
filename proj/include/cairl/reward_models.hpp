#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cairl/shape_graph.hpp"

namespace cairl {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// How one input coordinate is read: a discrete level in [0, levels) or a
/// continuous value cut into equal-width bins over [lo, hi].
struct FeatureSpec {
  std::string name;
  int levels = 0;
  int bins = 0;
  double lo = 0.0;
  double hi = 1.0;

  static FeatureSpec discrete(std::string name, int levels);
  static FeatureSpec continuous(std::string name, int bins, double lo = 0.0, double hi = 1.0);

  bool is_discrete() const noexcept { return levels > 0; }
  int num_bins() const noexcept { return is_discrete() ? levels : bins; }
  /// Bin of x; out-of-range values clamp to the edge bins.
  int bin(double x) const;
  /// Representative value of a bin: the level itself or the bin midpoint.
  double bin_value(int b) const;
  std::vector<double> bin_edges() const;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Piecewise-constant main effect f_j; its weights live in the owning GAM's parameter vector.
struct ShapeFunction {
  int feature_index = 0;
  FeatureSpec spec;
  Eigen::Index offset = 0;
};

/// f(x) = bias + sum_j f_j(x_j) with one lookup table per feature. Parameters: [bias, bins...].
class GamReward {
 public:
  explicit GamReward(std::vector<FeatureSpec> features);

  Eigen::Index num_features() const noexcept { return static_cast<Eigen::Index>(shapes_.size()); }
  const std::vector<ShapeFunction>& shapes() const noexcept { return shapes_; }
  std::vector<FeatureSpec> features() const;

  double bias() const { return params_(0); }
  double& bias() { return params_(0); }
  auto weights(int j) const { return params_.segment(shapes_[static_cast<std::size_t>(j)].offset, shapes_[static_cast<std::size_t>(j)].spec.num_bins()); }
  auto weights(int j) { return params_.segment(shapes_[static_cast<std::size_t>(j)].offset, shapes_[static_cast<std::size_t>(j)].spec.num_bins()); }

  Eigen::VectorXd& parameters() noexcept { return params_; }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }

 private:
  std::vector<ShapeFunction> shapes_;
  Eigen::VectorXd params_;
};

/// f(x) = bias + w . x. Parameters: [bias, w...].
class LinearReward {
 public:
  explicit LinearReward(std::vector<FeatureSpec> features);

  Eigen::Index num_features() const noexcept { return static_cast<Eigen::Index>(features_.size()); }
  const std::vector<FeatureSpec>& features() const noexcept { return features_; }
  double bias() const { return params_(0); }
  double& bias() { return params_(0); }
  auto weights() const { return params_.tail(num_features()); }
  auto weights() { return params_.tail(num_features()); }

  Eigen::VectorXd& parameters() noexcept { return params_; }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }

 private:
  std::vector<FeatureSpec> features_;
  Eigen::VectorXd params_;
};

/// Fully connected network with tanh hidden units and a scalar linear output.
/// Parameters per layer: row-major weight matrix (out x in), then bias.
class MlpReward {
 public:
  MlpReward(std::vector<FeatureSpec> features, std::vector<int> hidden, std::uint64_t seed);

  Eigen::Index num_features() const noexcept { return static_cast<Eigen::Index>(features_.size()); }
  const std::vector<FeatureSpec>& features() const noexcept { return features_; }
  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }

  Eigen::VectorXd& parameters() noexcept { return params_; }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }

  using WeightMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  WeightMap layer_weights(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> layer_bias(std::size_t layer) const;
  Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }

 private:
  std::vector<FeatureSpec> features_;
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

using RewardModel = std::variant<GamReward, LinearReward, MlpReward>;

enum class RewardFamily { Linear, Gam, Mlp };
std::string to_string(RewardFamily family);
RewardFamily reward_family_from_string(const std::string& name);

struct MlpOptions {
  std::vector<int> hidden = {32, 32};
};

/// Zero-initialized GAM/linear, or a seeded MLP.
RewardModel make_reward_model(RewardFamily family, std::vector<FeatureSpec> features,
                              std::uint64_t seed, const MlpOptions& mlp = {});

RewardFamily family_of(const RewardModel& model);
Eigen::Index input_dim(const RewardModel& model);
std::vector<FeatureSpec> feature_specs(const RewardModel& model);
Eigen::VectorXd& parameters(RewardModel& model);
const Eigen::VectorXd& parameters(const RewardModel& model);

double forward(const RewardModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
/// d forward / d parameters, scaled by `upstream`.
Eigen::VectorXd backward(const RewardModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                         double upstream);

Eigen::VectorXd forward_batch(const RewardModel& model, const FeatureMatrix& x);
/// grad += sum_i upstream(i) * d forward(x_i) / d parameters.
void accumulate_gradient(const RewardModel& model, const FeatureMatrix& x,
                         const Eigen::Ref<const Eigen::VectorXd>& upstream, Eigen::VectorXd& grad);

struct AdamState {
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index size, double lr)
      : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)), learning_rate(lr) {}
};

/// One bias-corrected Adam update of `params` against `grads`.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

/// Per-feature, per-bin value counts of a feature matrix.
using FeatureCounts = std::vector<std::vector<double>>;
FeatureCounts count_feature_values(const std::vector<FeatureSpec>& specs, const FeatureMatrix& x);

/// Centered shape graph of an additive model (GAM, or linear sampled at bin values).
ShapeGraph export_shape_graph(const RewardModel& model, const FeatureCounts& counts);

nlohmann::json to_json(const RewardModel& model);
RewardModel reward_model_from_json(const nlohmann::json& doc);

}  // namespace cairl
