#include "cairl/reward_models.hpp"

#include <cmath>

#include "cairl/errors.hpp"
#include "cairl/random.hpp"

namespace cairl {

using Eigen::Index;
using Eigen::VectorXd;
using nlohmann::json;

FeatureSpec FeatureSpec::discrete(std::string name, int levels) {
  if (levels <= 0) throw ValidationError("discrete feature needs a positive level count");
  FeatureSpec spec;
  spec.name = std::move(name);
  spec.levels = levels;
  return spec;
}

FeatureSpec FeatureSpec::continuous(std::string name, int bins, double lo, double hi) {
  if (bins <= 0 || !(hi > lo)) throw ValidationError("continuous feature needs bins > 0 and hi > lo");
  FeatureSpec spec;
  spec.name = std::move(name);
  spec.bins = bins;
  spec.lo = lo;
  spec.hi = hi;
  return spec;
}

int FeatureSpec::bin(double x) const {
  if (is_discrete()) return std::clamp(static_cast<int>(std::lround(x)), 0, levels - 1);
  const int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
  return std::clamp(b, 0, bins - 1);
}

double FeatureSpec::bin_value(int b) const {
  if (is_discrete()) return b;
  return lo + (b + 0.5) * (hi - lo) / bins;
}

std::vector<double> FeatureSpec::bin_edges() const {
  std::vector<double> edges;
  if (is_discrete()) return edges;
  for (int b = 0; b <= bins; ++b) edges.push_back(lo + b * (hi - lo) / bins);
  return edges;
}

// ---------------------------------------------------------------------------

GamReward::GamReward(std::vector<FeatureSpec> features) {
  Index offset = 1;
  for (std::size_t j = 0; j < features.size(); ++j) {
    shapes_.push_back({static_cast<int>(j), features[j], offset});
    offset += features[j].num_bins();
  }
  params_ = VectorXd::Zero(offset);
}

std::vector<FeatureSpec> GamReward::features() const {
  std::vector<FeatureSpec> out;
  for (const auto& s : shapes_) out.push_back(s.spec);
  return out;
}

LinearReward::LinearReward(std::vector<FeatureSpec> features)
    : features_(std::move(features)), params_(VectorXd::Zero(static_cast<Index>(features_.size()) + 1)) {}

MlpReward::MlpReward(std::vector<FeatureSpec> features, std::vector<int> hidden, std::uint64_t seed)
    : features_(std::move(features)) {
  sizes_.push_back(static_cast<int>(features_.size()));
  for (int h : hidden) {
    if (h <= 0) throw ValidationError("hidden layer sizes must be positive");
    sizes_.push_back(h);
  }
  sizes_.push_back(1);
  Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = VectorXd::Zero(total);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    // Glorot-uniform weights, zero biases.
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    const Index n = static_cast<Index>(sizes_[l + 1]) * sizes_[l];
    for (Index i = 0; i < n; ++i) params_(offsets_[l] + i) = limit * (2.0 * uniform01(rng) - 1.0);
  }
}

MlpReward::WeightMap MlpReward::layer_weights(std::size_t layer) const {
  return WeightMap(params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]);
}

Eigen::Map<const VectorXd> MlpReward::layer_bias(std::size_t layer) const {
  return Eigen::Map<const VectorXd>(
      params_.data() + offsets_[layer] + static_cast<Index>(sizes_[layer + 1]) * sizes_[layer],
      sizes_[layer + 1]);
}

// ---------------------------------------------------------------------------

std::string to_string(RewardFamily family) {
  switch (family) {
    case RewardFamily::Linear: return "linear";
    case RewardFamily::Gam: return "gam";
    case RewardFamily::Mlp: return "mlp";
  }
  return "?";
}

RewardFamily reward_family_from_string(const std::string& name) {
  if (name == "linear") return RewardFamily::Linear;
  if (name == "gam") return RewardFamily::Gam;
  if (name == "mlp" || name == "fcnn") return RewardFamily::Mlp;
  throw ValidationError("unknown reward model '" + name + "' (expected linear, gam or mlp)");
}

RewardModel make_reward_model(RewardFamily family, std::vector<FeatureSpec> features,
                              std::uint64_t seed, const MlpOptions& mlp) {
  switch (family) {
    case RewardFamily::Linear: return LinearReward(std::move(features));
    case RewardFamily::Gam: return GamReward(std::move(features));
    case RewardFamily::Mlp: return MlpReward(std::move(features), mlp.hidden, seed);
  }
  throw ValidationError("unknown reward family");
}

RewardFamily family_of(const RewardModel& model) {
  return static_cast<RewardFamily>(
      std::visit([](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearReward>) return 0;
        else if constexpr (std::is_same_v<T, GamReward>) return 1;
        else return 2;
      }, model));
}

Index input_dim(const RewardModel& model) {
  return std::visit([](const auto& m) { return m.num_features(); }, model);
}

std::vector<FeatureSpec> feature_specs(const RewardModel& model) {
  return std::visit([](const auto& m) -> std::vector<FeatureSpec> { return m.features(); }, model);
}

VectorXd& parameters(RewardModel& model) {
  return std::visit([](auto& m) -> VectorXd& { return m.parameters(); }, model);
}

const VectorXd& parameters(const RewardModel& model) {
  return std::visit([](const auto& m) -> const VectorXd& { return m.parameters(); }, model);
}

namespace {

void check_arity(const RewardModel& model, Index cols) {
  if (cols != input_dim(model))
    throw ShapeError("feature arity " + std::to_string(cols) + " does not match model arity " +
                     std::to_string(input_dim(model)));
}

// Hidden activations of every layer for a batch; `acts[0]` is the input.
std::vector<FeatureMatrix> mlp_activations(const MlpReward& m, const FeatureMatrix& x) {
  std::vector<FeatureMatrix> acts;
  acts.push_back(x);
  const std::size_t layers = m.layer_sizes().size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    FeatureMatrix z = acts.back() * m.layer_weights(l).transpose();
    z.rowwise() += m.layer_bias(l).transpose();
    if (l + 1 < layers) z = z.array().tanh();
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

VectorXd forward_batch(const RewardModel& model, const FeatureMatrix& x) {
  check_arity(model, x.cols());
  const Index n = x.rows();
  if (const auto* gam = std::get_if<GamReward>(&model)) {
    VectorXd out = VectorXd::Constant(n, gam->bias());
    const VectorXd& p = gam->parameters();
    for (const auto& shape : gam->shapes())
      for (Index i = 0; i < n; ++i) out(i) += p(shape.offset + shape.spec.bin(x(i, shape.feature_index)));
    return out;
  }
  if (const auto* lin = std::get_if<LinearReward>(&model)) {
    VectorXd out = x * lin->weights();
    out.array() += lin->bias();
    return out;
  }
  const auto& mlp = std::get<MlpReward>(model);
  return mlp_activations(mlp, x).back().col(0);
}

double forward(const RewardModel& model, const Eigen::Ref<const VectorXd>& x) {
  FeatureMatrix row = x.transpose();
  return forward_batch(model, row)(0);
}

void accumulate_gradient(const RewardModel& model, const FeatureMatrix& x,
                         const Eigen::Ref<const VectorXd>& upstream, VectorXd& grad) {
  check_arity(model, x.cols());
  if (upstream.size() != x.rows()) throw ShapeError("upstream gradient length mismatch");
  if (grad.size() != parameters(model).size()) throw ShapeError("gradient buffer size mismatch");
  const Index n = x.rows();
  if (const auto* gam = std::get_if<GamReward>(&model)) {
    grad(0) += upstream.sum();
    for (const auto& shape : gam->shapes())
      for (Index i = 0; i < n; ++i) grad(shape.offset + shape.spec.bin(x(i, shape.feature_index))) += upstream(i);
    return;
  }
  if (std::holds_alternative<LinearReward>(model)) {
    grad(0) += upstream.sum();
    grad.tail(x.cols()) += x.transpose() * upstream;
    return;
  }
  const auto& mlp = std::get<MlpReward>(model);
  const auto acts = mlp_activations(mlp, x);
  const std::size_t layers = mlp.layer_sizes().size() - 1;
  FeatureMatrix delta = upstream;  // d out / d z of the output layer
  for (std::size_t l = layers; l-- > 0;) {
    const FeatureMatrix& input = acts[l];
    const Index out_dim = mlp.layer_sizes()[l + 1], in_dim = mlp.layer_sizes()[l];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
        grad.data() + mlp.weight_offset(l), out_dim, in_dim);
    gw.noalias() += delta.transpose() * input;
    grad.segment(mlp.weight_offset(l) + out_dim * in_dim, out_dim) += delta.colwise().sum().transpose();
    if (l == 0) break;
    FeatureMatrix back = delta * mlp.layer_weights(l);
    delta = back.array() * (1.0 - input.array().square());  // tanh' = 1 - tanh^2
  }
}

VectorXd backward(const RewardModel& model, const Eigen::Ref<const VectorXd>& x, double upstream) {
  FeatureMatrix row = x.transpose();
  VectorXd grad = VectorXd::Zero(parameters(model).size());
  VectorXd up = VectorXd::Constant(1, upstream);
  accumulate_gradient(model, row, up, grad);
  return grad;
}

void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.epsilon);
}

FeatureCounts count_feature_values(const std::vector<FeatureSpec>& specs, const FeatureMatrix& x) {
  if (static_cast<Index>(specs.size()) != x.cols()) throw ShapeError("feature spec count mismatch");
  FeatureCounts counts(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j) {
    counts[j].assign(static_cast<std::size_t>(specs[j].num_bins()), 0.0);
    for (Index i = 0; i < x.rows(); ++i)
      counts[j][static_cast<std::size_t>(specs[j].bin(x(i, static_cast<Index>(j))))] += 1.0;
  }
  return counts;
}

ShapeGraph export_shape_graph(const RewardModel& model, const FeatureCounts& counts) {
  if (std::holds_alternative<MlpReward>(model))
    throw UnsupportedModelError("MLP rewards are not additive and have no exact shape graph");
  const auto specs = feature_specs(model);
  if (counts.size() != specs.size()) throw ShapeError("counts do not match the model's features");
  ShapeGraph graph;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    const auto& spec = specs[j];
    if (counts[j].size() != static_cast<std::size_t>(spec.num_bins()))
      throw ShapeError("counts of feature " + spec.name + " do not match its bins");
    FeatureShape shape{spec.name, {}};
    for (int b = 0; b < spec.num_bins(); ++b) {
      const double value = spec.bin_value(b);
      double contribution = 0.0;
      if (const auto* gam = std::get_if<GamReward>(&model))
        contribution = gam->weights(static_cast<int>(j))(b);
      else
        contribution = std::get<LinearReward>(model).weights()(static_cast<Index>(j)) * value;
      shape.points.push_back({value, contribution, counts[j][static_cast<std::size_t>(b)]});
    }
    graph.features.push_back(std::move(shape));
  }
  return center(std::move(graph));
}

// ---------------------------------------------------------------------------

namespace {

json spec_to_json(const FeatureSpec& s) {
  if (s.is_discrete()) return {{"name", s.name}, {"levels", s.levels}};
  return {{"name", s.name}, {"bins", s.bins}, {"lo", s.lo}, {"hi", s.hi}};
}

FeatureSpec spec_from_json(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  if (j.contains("levels")) return FeatureSpec::discrete(name, j.at("levels").get<int>());
  return FeatureSpec::continuous(name, j.at("bins").get<int>(), j.at("lo").get<double>(),
                                 j.at("hi").get<double>());
}

std::vector<double> to_vector(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

json to_json(const RewardModel& model) {
  json doc;
  doc["v"] = 1;
  doc["kind"] = to_string(family_of(model));
  json specs = json::array();
  for (const auto& s : feature_specs(model)) specs.push_back(spec_to_json(s));
  doc["features"] = std::move(specs);
  if (const auto* mlp = std::get_if<MlpReward>(&model)) {
    std::vector<int> hidden(mlp->layer_sizes().begin() + 1, mlp->layer_sizes().end() - 1);
    doc["hidden"] = hidden;
  }
  doc["parameters"] = to_vector(parameters(model));
  return doc;
}

RewardModel reward_model_from_json(const json& doc) {
  try {
    if (doc.at("v").get<int>() != 1) throw ParseError("unsupported reward model schema version");
    std::vector<FeatureSpec> specs;
    for (const auto& j : doc.at("features")) specs.push_back(spec_from_json(j));
    const RewardFamily family = reward_family_from_string(doc.at("kind").get<std::string>());
    MlpOptions mlp;
    if (family == RewardFamily::Mlp) mlp.hidden = doc.at("hidden").get<std::vector<int>>();
    RewardModel model = make_reward_model(family, std::move(specs), 0, mlp);
    const auto values = doc.at("parameters").get<std::vector<double>>();
    VectorXd& p = parameters(model);
    if (static_cast<Index>(values.size()) != p.size())
      throw ParseError("reward model parameter count does not match its architecture");
    p = Eigen::Map<const VectorXd>(values.data(), p.size());
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed reward model: ") + e.what());
  }
}

}  // namespace cairl
