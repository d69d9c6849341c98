#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cairl/mdp.hpp"

namespace cairl {

using nlohmann::json;

std::string format_trajectories(const TrajectoryBatch& batch) {
  std::string out;
  for (const auto& traj : batch) {
    json steps = json::array();
    for (const auto& step : traj.steps)
      steps.push_back({step.state, step.action, step.next_state, step.timestep, step.done ? 1 : 0});
    json line = {{"v", 1}, {"seed", traj.seed}, {"steps", std::move(steps)}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

void write_trajectories(const std::string& path, const TrajectoryBatch& batch) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path + " for writing");
  file << format_trajectories(batch);
  if (!file) throw IoError("failed writing " + path);
}

namespace {

long as_integer(const json& value, long line, const char* what) {
  if (!value.is_number_integer()) throw ParseError(std::string("expected integer ") + what, line);
  return value.get<long>();
}

}  // namespace

TrajectoryBatch parse_trajectories(const std::string& text) {
  TrajectoryBatch batch;
  std::istringstream in(text);
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), number);
    }
    if (!doc.is_object() || !doc.contains("v") || !doc.contains("seed") || !doc.contains("steps"))
      throw ParseError("trajectory line needs \"v\", \"seed\" and \"steps\"", number);
    if (as_integer(doc["v"], number, "schema version") != 1)
      throw ParseError("unsupported trajectory schema version", number);
    if (!doc["seed"].is_number_integer()) throw ParseError("expected integer seed", number);
    Trajectory traj;
    traj.seed = doc["seed"].is_number_unsigned() ? doc["seed"].get<std::uint64_t>()
                                                 : static_cast<std::uint64_t>(doc["seed"].get<long>());
    if (!doc["steps"].is_array()) throw ParseError("\"steps\" must be an array", number);
    for (const auto& row : doc["steps"]) {
      if (!row.is_array() || row.size() != 5) throw ParseError("each step needs 5 integers", number);
      Transition step;
      step.state = as_integer(row[0], number, "state");
      step.action = as_integer(row[1], number, "action");
      step.next_state = as_integer(row[2], number, "next state");
      step.timestep = static_cast<int>(as_integer(row[3], number, "timestep"));
      const long done = as_integer(row[4], number, "done flag");
      if (done != 0 && done != 1) throw ParseError("done flag must be 0 or 1", number);
      step.done = done == 1;
      traj.steps.push_back(step);
    }
    batch.push_back(std::move(traj));
  }
  return batch;
}

TrajectoryBatch read_trajectories(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_trajectories(buffer.str());
}

void validate_batch(const TrajectoryBatch& batch, Index num_states, Index num_actions, int horizon) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& steps = batch[i].steps;
    if (static_cast<int>(steps.size()) > horizon)
      throw ValidationError("trajectory " + std::to_string(i) + " is longer than the horizon");
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& step = steps[t];
      if (step.state < 0 || step.state >= num_states || step.next_state < 0 ||
          step.next_state >= num_states || step.action < 0 || step.action >= num_actions)
        throw ValidationError("trajectory " + std::to_string(i) + " has an out-of-range id");
      if (step.timestep < 0 || step.timestep >= horizon)
        throw ValidationError("trajectory " + std::to_string(i) + " has a timestep outside the horizon");
      if (t + 1 < steps.size() && steps[t + 1].state != step.next_state)
        throw ValidationError("trajectory " + std::to_string(i) + " does not chain at step " +
                              std::to_string(t));
    }
  }
}

}  // namespace cairl
