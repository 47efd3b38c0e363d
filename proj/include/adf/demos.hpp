#pragma once

#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "adf/env.hpp"
#include "adf/learner.hpp"

namespace adf {

inline constexpr int kDemoFormatVersion = 1;

struct Demonstration {
  ScenarioSpec scenario;
  DemoSource source = DemoSource::AgentDemo;
  std::string participant;
  std::string session;
  std::string recorded_at;  // free-form wall-clock stamp, empty when not recorded
  // World settings that differ from the defaults, as key/value overrides.
  std::vector<std::pair<std::string, std::string>> world;
  SpawnOverrides overrides;
  std::vector<StepRecord> steps;  // last entry is the end state with no actions
  Outcome outcome = Outcome::Timeout;
  int ticks = 0;

  WorldConfig world_config() const;
  bool operator==(const Demonstration&) const = default;
};

Demonstration make_demonstration(const EpisodeRecord& episode, DemoSource source, const WorldConfig& cfg,
                                 std::string participant = {});

// One JSON object per line.
std::string demo_to_json(const Demonstration& demo);
Demonstration demo_from_json(const std::string& line);

struct DemoStore {
  std::vector<Demonstration> episodes;

  std::size_t count(std::optional<DemoSource> source = std::nullopt, bool wins_only = false) const;
};

DemoStore read_demo_store(const std::string& path);
void write_demo_store(const DemoStore& store, const std::string& path);

// Appends records to a JSONL file. All appends go through one lock so concurrent
// sessions never interleave partial lines.
class DemoWriter {
 public:
  explicit DemoWriter(const std::string& path);
  void append(const Demonstration& demo);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::mutex mu_;
};

ScenarioSpec collect_scenario(ScenarioKind kind, std::uint64_t seed, int attempt);

// Runs `policy` on fresh scenarios until `count` episodes pass the win filter. Gives up
// with OutOfRange after `max_attempts` episodes.
DemoStore collect_agent_demos(Policy& policy, const WorldConfig& cfg, ScenarioKind kind, int count,
                              bool only_wins, std::uint64_t seed, DemoSource source = DemoSource::AgentDemo,
                              int max_attempts = -1);

// Turn toward the waypoint: 1 when the wrapped heading error is >= 0, else 0.
ActionId waypoint_action(Vec2 position, double heading, Vec2 waypoint);

// Per tick, per drone: the action steering toward its active waypoint, or the recorded
// executed action for ticks without one.
std::vector<std::vector<int>> embodiment_map(const std::vector<StepRecord>& steps);

// Tags each tick with the arbitration outcome: log[t][drone] says who controlled it.
Demonstration record_policy_corrected(const EpisodeRecord& episode,
                                      const std::vector<std::vector<Controller>>& arbitration_log,
                                      const WorldConfig& cfg, std::string participant = {});

struct LoadOptions {
  std::optional<DemoSource> source;  // nullopt loads every source
  bool wins_only = true;
  bool equalize_sources = false;
  bool mapped_actions = false;  // use embodiment-mapped actions instead of executed ones
  int n_step = 10;
  double gamma = 0.99;
};

DemoBuffer load_transitions(const DemoStore& store, const LoadOptions& options, const WorldConfig& fallback);

// Largest |stored reward - reward recomputed from the stored states|.
double reward_divergence(const Demonstration& demo);

// Re-simulates the episode from its seed and action log; returns the largest position
// difference (blue or red) against the stored trace.
double replay_divergence(const Demonstration& demo);

}  // namespace adf
