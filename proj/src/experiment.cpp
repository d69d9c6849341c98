#include "cairl/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cairl/transition_estimation.hpp"

namespace cairl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, const std::string& path, long line) {
  try {
    std::size_t used = 0;
    const double x = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return x;
  } catch (const std::exception&) {
    throw ParseError(path + ": expected a number, got '" + text + "'", line);
  }
}

// Reads a CSV with an exact header; calls row(cells, line) for every data row.
template <typename Row>
void read_csv(const std::string& path, const std::string& header, std::size_t columns, Row&& row) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot read " + path);
  std::string line;
  long number = 0;
  if (!std::getline(file, line)) throw ParseError(path + ": empty file", 1);
  ++number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw ParseError(path + ": expected header '" + header + "'", number);
  while (std::getline(file, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != columns)
      throw ParseError(path + ": expected " + std::to_string(columns) + " columns, got " + std::to_string(cells.size()),
                       number);
    row(cells, number);
  }
}

FeatureCounts counts_of(const ShapeGraph& graph) {
  FeatureCounts counts;
  for (const auto& f : graph.features) {
    counts.emplace_back();
    for (const auto& p : f.points) counts.back().push_back(p.count);
  }
  return counts;
}

TabularMdp transition_model_for(const ExperimentConfig& config, const TabularMdp& mdp, const TrajectoryBatch& train) {
  if (config.transition == TransitionSource::True) return mdp;
  const auto& est = config.estimation;
  std::optional<IptwWeights> weights;
  if (est.iptw) {
    const auto behavior = fit_behavior_policy(train, mdp.num_states(), mdp.num_actions(), est.policy_smoothing);
    const auto marginal = fit_marginal_actions(train, mdp.num_actions());
    weights = compute_iptw_weights(train, behavior, marginal, est.clip_max);
  }
  const auto fitted = sepsis::fit_factored_transitions(train, weights ? &*weights : nullptr, est.transition_smoothing);
  return with_estimated_transitions(mdp, fitted);
}

}  // namespace

TabularMdp build_environment(const ExperimentConfig& config) {
  return sepsis::build_mdp(config.dynamics, config.gamma);
}

ExpertData generate_expert(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  TabularMdp mdp = build_environment(config);
  Reward truth = sepsis::ground_truth(config.mdp_kind);
  const auto n = static_cast<std::size_t>(config.n_trajectories);
  const TabularPolicy uniform = TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
  ExpertData out{mdp, truth, {}, {}, 0.0, evaluate_policy(mdp, uniform, truth)};
  if (config.expert == ExpertKind::Stationary) {
    const auto plan = value_iteration(mdp, truth, PlanningOptions{1e-10, 100000});
    out.train = sample_trajectories(mdp, plan.policy, n, derive_seed(seed, 0));
    out.test = sample_trajectories(mdp, plan.policy, n, derive_seed(seed, 1));
    out.expert_return = evaluate_policy(mdp, plan.policy, truth);
  } else {
    const auto policies = finite_horizon_value_iteration(mdp, truth);
    const std::span<const TabularPolicy> view(policies);
    out.train = sample_trajectories(mdp, view, n, derive_seed(seed, 0));
    out.test = sample_trajectories(mdp, view, n, derive_seed(seed, 1));
    out.expert_return = evaluate_policy(mdp, view, truth);
  }
  return out;
}

FeatureCounts expert_feature_counts(const TrajectoryBatch& expert, const EnvironmentFeatures& env) {
  const auto items = flatten_batch(expert, env);
  FeatureMatrix x(static_cast<Index>(items.size()), env.reward_table.cols());
  for (std::size_t i = 0; i < items.size(); ++i)
    x.row(static_cast<Index>(i)) = env.reward_features(items[i].next_state, items[i].noise_next).transpose();
  return count_feature_values(env.reward_specs, x);
}

ShapeGraph ground_truth_shape(sepsis::RewardKind kind, const EnvironmentFeatures& env, const FeatureCounts& counts) {
  GamReward truth(env.reward_specs);
  for (int v = 0; v < sepsis::kNumVitals; ++v) {
    const auto table = sepsis::ground_truth_table(kind, static_cast<sepsis::Vital>(v));
    for (std::size_t level = 0; level < table.size(); ++level)
      truth.weights(v)(static_cast<Index>(level)) = table[level];
  }
  return export_shape_graph(RewardModel(std::move(truth)), counts);
}

RunOutput run_method(const ExperimentConfig& config, const TrajectoryBatch& train, std::uint64_t seed,
                     bool monitor_truth) {
  config.validate();
  const TabularMdp mdp = build_environment(config);
  const Reward truth = sepsis::ground_truth(config.mdp_kind);
  const EnvironmentFeatures env = sepsis::environment_features(config.noise_per_timestep, config.noise_bins);
  const FeatureCounts counts = expert_feature_counts(train, env);

  RunOutput out;
  out.label = method_label(config.method, config.reward_model);
  switch (config.method) {
    case Method::Airl:
    case Method::Cairl: {
      const TabularMdp model = transition_model_for(config, mdp, train);
      const DiscriminatorConfig dc = config.discriminator_config();
      GroundTruthMonitor monitor;
      if (monitor_truth) {
        monitor.eval_mdp = &mdp;
        monitor.reward = truth;
        monitor.counts = counts;
        monitor.truth = ground_truth_shape(config.mdp_kind, env, counts);
      }
      TrainResult trained = train_cairl(train, model, env, dc, config.generator, seed, monitor_truth ? &monitor : nullptr);
      if (config.eval_policy == EvalPolicy::Greedy) {
        const Reward learned = learned_reward(trained.disc, env, dc.feature_map_mode);
        out.policy = value_iteration(model, learned, config.generator.planning).policy;
      } else {
        out.policy = trained.generator.policy;
      }
      if (config.reward_model != RewardFamily::Mlp) out.shape = export_shape_graph(trained.disc.g, counts);
      out.reward_model = std::move(trained.disc.g);
      if (dc.use_shaping) out.shaping_model = std::move(trained.disc.h);
      out.history = std::move(trained.history);
      break;
    }
    case Method::Mma:
    case Method::Cirl: {
      // Projection-method apprenticeship learning plans on the known dynamics;
      // the counterfactual variant uses the configured transition model.
      const TabularMdp model = config.method == Method::Mma ? mdp : transition_model_for(config, mdp, train);
      MmaConfig mc = config.mma;
      mc.feature_map_mode = config.method == Method::Cirl ? MmaFeatureMode::ExpectedNextState : MmaFeatureMode::CurrentState;
      MmaResult result = mma_solve(model, train, env, mc, seed);
      LinearReward reward(env.reward_specs);
      reward.weights() = result.weights;
      out.policy = std::move(result.policy);
      out.shape = export_shape_graph(RewardModel(reward), counts);
      out.reward_model = std::move(reward);
      out.margins = std::move(result.margins);
      break;
    }
    case Method::Bc:
      out.policy = behavior_clone(train, mdp.num_states(), mdp.num_actions(), config.estimation.policy_smoothing);
      break;
  }
  return out;
}

ResultRow score_run(const ExperimentConfig& config, const RunOutput& run, const TrajectoryBatch& test,
                    std::uint64_t seed, bool ground_truth) {
  const TabularMdp mdp = build_environment(config);
  ResultRow row;
  row.method = run.label;
  row.mdp = sepsis::to_string(config.mdp_kind);
  row.gamma = config.gamma;
  row.seed = seed;
  row.ret = kNaN;
  row.dist = kNaN;
  const EnvironmentFeatures env = sepsis::environment_features(config.noise_per_timestep, config.noise_bins);
  if (ground_truth) {
    row.ret = evaluate_policy(mdp, run.policy, sepsis::ground_truth(config.mdp_kind));
    if (run.shape) {
      const ShapeGraph truth = ground_truth_shape(config.mdp_kind, env, counts_of(*run.shape));
      const ScalingResult scaling = scale_to_ground_truth(*run.shape, truth);
      row.dist = shape_distance(*run.shape, truth, scaling);
    }
  } else if (run.reward_model) {
    // Without ground truth the return is measured under the run's own reward.
    const Vector<double> r = expected_state_reward(*run.reward_model, env);
    const bool current = config.method == Method::Airl || config.method == Method::Mma;
    row.ret = evaluate_policy(mdp, run.policy, current ? Reward::state(r) : Reward::next_state(r));
  }
  row.accuracy = action_match_accuracy(run.policy, test);
  return row;
}

std::string run_name(const ExperimentConfig& config, std::uint64_t seed) {
  std::string name = to_string(config.method);
  if (config.method == Method::Airl || config.method == Method::Cairl) name += "-" + to_string(config.reward_model);
  char gamma[32];
  std::snprintf(gamma, sizeof gamma, "%g", config.gamma);
  name += "-" + sepsis::to_string(config.mdp_kind) + "mdp-g" + gamma + "-s" + std::to_string(seed);
  if (config.transition == TransitionSource::Estimated) name += "-est";
  return name;
}

void write_shape_csv(const std::string& path, const ShapeGraph& graph) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << "feature,value,contribution,count\n";
  for (const auto& f : graph.features)
    for (const auto& p : f.points)
      file << f.name << ',' << format_double(p.value) << ',' << format_double(p.contribution) << ','
           << format_double(p.count) << '\n';
  if (!file) throw IoError("failed writing " + path);
}

ShapeGraph read_shape_csv(const std::string& path) {
  ShapeGraph graph;
  read_csv(path, "feature,value,contribution,count", 4, [&](const std::vector<std::string>& cells, long line) {
    if (cells[0].empty()) throw ParseError(path + ": empty feature name", line);
    if (graph.features.empty() || graph.features.back().name != cells[0]) {
      for (const auto& f : graph.features)
        if (f.name == cells[0]) throw ParseError(path + ": rows of feature '" + cells[0] + "' are not contiguous", line);
      graph.features.push_back({cells[0], {}});
    }
    const double count = parse_number(cells[3], path, line);
    if (count < 0) throw ParseError(path + ": negative count", line);
    graph.features.back().points.push_back(
        {parse_number(cells[1], path, line), parse_number(cells[2], path, line), count});
  });
  if (graph.features.empty()) throw ParseError(path + ": no shape rows", 0);
  return graph;
}

void write_policy_csv(const std::string& path, const TabularPolicy& policy) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << "s,a,prob\n";
  for (Index s = 0; s < policy.num_states(); ++s)
    for (Index a = 0; a < policy.num_actions(); ++a)
      file << s << ',' << a << ',' << format_double(policy(s, a)) << '\n';
  if (!file) throw IoError("failed writing " + path);
}

TabularPolicy read_policy_csv(const std::string& path) {
  struct Cell {
    Index s, a;
    double p;
  };
  std::vector<Cell> cells;
  Index S = 0, A = 0;
  read_csv(path, "s,a,prob", 3, [&](const std::vector<std::string>& row, long line) {
    const double s = parse_number(row[0], path, line), a = parse_number(row[1], path, line);
    if (s < 0 || a < 0 || s != std::floor(s) || a != std::floor(a))
      throw ParseError(path + ": state and action must be non-negative integers", line);
    cells.push_back({static_cast<Index>(s), static_cast<Index>(a), parse_number(row[2], path, line)});
    S = std::max(S, cells.back().s + 1);
    A = std::max(A, cells.back().a + 1);
  });
  if (cells.size() != static_cast<std::size_t>(S * A))
    throw ParseError(path + ": expected one row per (state, action) pair");
  Table<double> probs = Table<double>::Zero(S, A);
  for (const auto& c : cells) probs(c.s, c.a) = c.p;
  return TabularPolicy(std::move(probs));
}

void write_run(const std::string& dir, const ExperimentConfig& config, std::uint64_t seed, const RunOutput& run) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir + ": " + ec.message());
  ExperimentConfig single = config;
  single.seeds = {seed};
  save_config((fs::path(dir) / "config.json").string(), single);

  json meta = {{"label", run.label}, {"seed", seed}, {"eval_policy", config.eval_policy == EvalPolicy::Greedy ? "greedy" : "generator"}};
  {
    std::ofstream file(fs::path(dir) / "run.json");
    if (!file) throw IoError("cannot write run.json in " + dir);
    file << meta.dump(2) << '\n';
  }
  if (run.reward_model) {
    json model = {{"g", to_json(*run.reward_model)}};
    if (run.shaping_model) model["h"] = to_json(*run.shaping_model);
    std::ofstream file(fs::path(dir) / "model.json");
    if (!file) throw IoError("cannot write model.json in " + dir);
    file << model.dump() << '\n';
  }
  write_policy_csv((fs::path(dir) / "policy.csv").string(), run.policy);
  if (run.shape) write_shape_csv((fs::path(dir) / "shape.csv").string(), *run.shape);
  if (config.method == Method::Airl || config.method == Method::Cairl)
    write_history((fs::path(dir) / "history.csv").string(), run.history);
  if (config.method == Method::Mma || config.method == Method::Cirl)
    write_margins((fs::path(dir) / "margins.csv").string(), run.margins);
}

RunOutput read_run(const std::string& dir, ExperimentConfig* config, std::uint64_t* seed) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw IoError("run directory " + dir + " does not exist");
  for (const char* required : {"config.json", "run.json", "policy.csv"})
    if (!fs::exists(root / required))
      throw IoError("run directory " + dir + " is incomplete: missing " + required);
  const ExperimentConfig cfg = load_config((root / "config.json").string());
  json meta;
  {
    std::ifstream file(root / "run.json");
    try {
      meta = json::parse(file);
    } catch (const json::exception& e) {
      throw ParseError((root / "run.json").string() + ": " + e.what());
    }
  }
  RunOutput out;
  out.label = meta.value("label", method_label(cfg.method, cfg.reward_model));
  out.policy = read_policy_csv((root / "policy.csv").string());
  if (fs::exists(root / "shape.csv")) out.shape = read_shape_csv((root / "shape.csv").string());
  if (fs::exists(root / "model.json")) {
    std::ifstream file(root / "model.json");
    try {
      const json model = json::parse(file);
      out.reward_model = reward_model_from_json(model.at("g"));
      if (model.contains("h")) out.shaping_model = reward_model_from_json(model.at("h"));
    } catch (const json::exception& e) {
      throw ParseError((root / "model.json").string() + ": " + e.what());
    }
  }
  if (config) *config = cfg;
  if (seed) *seed = meta.value("seed", cfg.seeds.front());
  return out;
}

std::vector<ExperimentConfig> sweep_cells(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> cells;
  const std::pair<Method, RewardFamily> rows[] = {
      {Method::Mma, RewardFamily::Linear},   {Method::Cirl, RewardFamily::Linear},
      {Method::Airl, RewardFamily::Linear},  {Method::Airl, RewardFamily::Mlp},
      {Method::Airl, RewardFamily::Gam},     {Method::Cairl, RewardFamily::Linear},
      {Method::Cairl, RewardFamily::Mlp},    {Method::Cairl, RewardFamily::Gam},
  };
  for (double gamma : {0.9, 0.5})
    for (auto kind : {sepsis::RewardKind::GamMdp, sepsis::RewardKind::LinearMdp})
      for (const auto& [method, family] : rows) {
        ExperimentConfig c = base;
        c.gamma = gamma;
        c.mdp_kind = kind;
        c.method = method;
        c.reward_model = family;
        cells.push_back(std::move(c));
      }
  return cells;
}

}  // namespace cairl
