// Command-line driver: expert generation, training, evaluation, plots and the
// full comparison sweep.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "cairl/experiment.hpp"
#include "cairl/svg_plot.hpp"

namespace fs = std::filesystem;
using namespace cairl;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

std::string default_out() {
  const char* env = std::getenv("CAIRL_OUT_DIR");
  return env && *env ? env : "out";
}

ExperimentConfig config_from(const std::string& path) {
  return path.empty() ? experiment_config_from_json(nlohmann::json::object()) : load_config(path);
}

std::vector<std::uint64_t> seeds_of(const ExperimentConfig& config, const std::vector<std::uint64_t>& override_seeds) {
  return override_seeds.empty() ? config.seeds : override_seeds;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void print_row(const ResultRow& row) { std::cout << format_result_row(row) << '\n'; }

int cmd_gen_expert(const std::string& config_path, const std::vector<std::uint64_t>& seed_args,
                   const std::string& out, bool dump_truth) {
  const ExperimentConfig config = config_from(config_path);
  const auto seeds = seeds_of(config, seed_args);
  for (std::uint64_t seed : seeds) {
    const std::string dir = seeds.size() == 1 ? out : (fs::path(out) / ("seed" + std::to_string(seed))).string();
    ensure_dir(dir);
    const ExpertData data = generate_expert(config, seed);
    write_trajectories((fs::path(dir) / "expert_train.jsonl").string(), data.train);
    write_trajectories((fs::path(dir) / "expert_test.jsonl").string(), data.test);
    if (dump_truth) {
      const auto env = sepsis::environment_features(config.noise_per_timestep, config.noise_bins);
      write_shape_csv((fs::path(dir) / "ground_truth_shape.csv").string(),
                      ground_truth_shape(config.mdp_kind, env, expert_feature_counts(data.train, env)));
    }
    std::printf("seed %llu: expert_return %.6f uniform_return %.6f (%s)\n", static_cast<unsigned long long>(seed),
                data.expert_return, data.uniform_return, dir.c_str());
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& expert_path,
              const std::vector<std::uint64_t>& seed_args, const std::string& out) {
  const ExperimentConfig config = config_from(config_path);
  const TrajectoryBatch expert = read_trajectories(expert_path);
  validate_batch(expert, sepsis::kNumStates, sepsis::kNumActions, config.dynamics.horizon);
  for (std::uint64_t seed : seeds_of(config, seed_args)) {
    const RunOutput run = run_method(config, expert, seed);
    const std::string dir = (fs::path(out) / run_name(config, seed)).string();
    write_run(dir, config, seed, run);
    std::printf("%s\n", dir.c_str());
  }
  return 0;
}

int cmd_eval(const std::vector<std::string>& run_dirs, const std::string& test_path, bool ground_truth,
             const std::string& results) {
  const TrajectoryBatch test = read_trajectories(test_path);
  for (const auto& dir : run_dirs) {
    ExperimentConfig config;
    std::uint64_t seed = 0;
    const RunOutput run = read_run(dir, &config, &seed);
    const ResultRow row = score_run(config, run, test, seed, ground_truth);
    if (!results.empty()) {
      if (fs::path(results).has_parent_path()) ensure_dir(fs::path(results).parent_path().string());
      append_result_row(results, row);
    }
    print_row(row);
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& shapes, std::vector<std::string> labels, const std::string& gt_path,
             const std::string& out) {
  if (!labels.empty() && labels.size() != shapes.size())
    throw ValidationError("--labels must name every shape CSV");
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string label = labels.empty() ? fs::path(shapes[i]).parent_path().filename().string() : labels[i];
    series.push_back({label.empty() ? shapes[i] : label, read_shape_csv(shapes[i])});
  }
  for (const auto& path : plot_shape_graphs(read_shape_csv(gt_path), series, out)) std::printf("%s\n", path.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::uint64_t>& seed_args, const std::string& out,
              bool quick) {
  ExperimentConfig base = config_from(config_path);
  ensure_dir(out);
  const std::string results = (fs::path(out) / "results.csv").string();
  std::remove(results.c_str());
  auto cells = sweep_cells(base);
  if (quick) {
    std::erase_if(cells, [](const ExperimentConfig& c) { return c.gamma != 0.9; });
  }
  for (std::uint64_t seed : seeds_of(base, seed_args)) {
    // Expert data depends on (mdp, gamma, seed) only; cache it across methods.
    std::map<std::pair<int, double>, ExpertData> experts;
    for (const auto& cell : cells) {
      const auto key = std::make_pair(static_cast<int>(cell.mdp_kind), cell.gamma);
      auto it = experts.find(key);
      if (it == experts.end()) {
        it = experts.emplace(key, generate_expert(cell, seed)).first;
        const ExpertData& data = it->second;
        const ResultRow expert_row{"Expert", sepsis::to_string(cell.mdp_kind), cell.gamma, data.expert_return, 0.0,
                                   action_match_accuracy(value_iteration(data.mdp, data.truth).policy, data.test), seed};
        append_result_row(results, expert_row);
        print_row(expert_row);
      }
      const ExpertData& data = it->second;
      const RunOutput run = run_method(cell, data.train, seed);
      const std::string dir = (fs::path(out) / "runs" / run_name(cell, seed)).string();
      write_run(dir, cell, seed, run);
      const ResultRow row = score_run(cell, run, data.test, seed, true);
      append_result_row(results, row);
      print_row(row);
    }
  }
  std::printf("results: %s\n", results.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch inverse reinforcement learning workbench for the sepsis simulator"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out = default_out();

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON); defaults apply when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seeds, "Seed(s); overrides the config's seed list");
    cmd->add_option("--out", out, "Output directory (default: $CAIRL_OUT_DIR or ./out)");
  };

  bool dump_truth = false;
  auto* gen = app.add_subcommand("gen-expert", "Solve the expert and write train/test trajectory files");
  add_common(gen);
  gen->add_flag("--dump-truth", dump_truth, "Also write the ground-truth shape graph CSV");

  std::string expert_path;
  auto* train = app.add_subcommand("train", "Train the configured method on an expert trajectory file");
  add_common(train);
  train->add_option("--expert", expert_path, "Expert training trajectories (JSONL)")->required()->check(CLI::ExistingFile);

  std::vector<std::string> run_dirs;
  std::string test_path, results;
  bool ground_truth = false;
  auto* eval = app.add_subcommand("eval", "Score run directories on a test batch");
  eval->add_option("--run", run_dirs, "Run directory (repeatable)")->required();
  eval->add_option("--test", test_path, "Expert test trajectories (JSONL)")->required()->check(CLI::ExistingFile);
  eval->add_flag("--gt", ground_truth, "Score return and Dist against the ground-truth reward");
  eval->add_option("--results", results, "Results CSV to append to");

  std::vector<std::string> shapes, labels;
  std::string gt_csv;
  auto* plot = app.add_subcommand("plot", "Overlay shape graphs on the ground truth, one SVG per feature");
  plot->add_option("--shapes", shapes, "Model shape CSVs")->required()->check(CLI::ExistingFile);
  plot->add_option("--labels", labels, "Legend label per shape CSV");
  plot->add_option("--gt", gt_csv, "Ground-truth shape CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out, "Output directory for SVG files");

  bool quick = false;
  auto* sweep = app.add_subcommand("sweep", "Run every method x MDP x gamma cell and write results.csv");
  add_common(sweep);
  sweep->add_flag("--gamma-0.9-only", quick, "Skip the gamma = 0.5 half of the table");

  auto* defaults = app.add_subcommand("default-config", "Print the default experiment config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_expert(config_path, seeds, out, dump_truth);
    if (*train) return cmd_train(config_path, expert_path, seeds, out);
    if (*eval) return cmd_eval(run_dirs, test_path, ground_truth, results);
    if (*plot) return cmd_plot(shapes, labels, gt_csv, out);
    if (*sweep) return cmd_sweep(config_path, seeds, out, quick);
    if (*defaults) {
      std::cout << to_json(ExperimentConfig{}).dump(2) << '\n';
      return 0;
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitValidation;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return 0;
}
