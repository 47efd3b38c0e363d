#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adf/sim.hpp"

namespace adf {

inline constexpr std::size_t kFrameSize = 4;   // (dx_red, dy_red, dx_zone, dy_zone)
inline constexpr std::size_t kStackDepth = 3;  // oldest -> newest
inline constexpr std::size_t kObservationSize = kFrameSize * kStackDepth;
inline constexpr std::size_t kActionCount = 2;

struct Observation {
  std::array<double, kObservationSize> features{};
  bool operator==(const Observation&) const = default;
};

enum class ActionId : int { NegativeTurn = 0, PositiveTurn = 1 };

inline double turn_input(ActionId a) { return a == ActionId::PositiveTurn ? 1.0 : -1.0; }
inline int to_int(ActionId a) { return static_cast<int>(a); }
ActionId action_from_int(int value);

enum class Controller { Agent, Human };
enum class Outcome { Win, Loss, Timeout };
enum class DemoSource { AgentDemo, HumanDemo, PolicyCorrected };

std::string to_string(Controller c);
std::string to_string(Outcome o);
std::string to_string(DemoSource s);
Controller parse_controller(const std::string& s);
Outcome parse_outcome(const std::string& s);
DemoSource parse_demo_source(const std::string& s);

struct Transition {
  Observation observation;
  ActionId action = ActionId::NegativeTurn;
  double reward = 0.0;
  Observation next_observation;
  bool terminal = false;   // absorbing end: neutralization or zone entry
  bool truncated = false;  // time-limit end; the next observation still bootstraps
  int agent_id = 0;
  Controller controller = Controller::Agent;

  bool episode_end() const { return terminal || truncated; }
};

// Per-drone frame history. The red slots hold the last detected offset while the red
// drone goes unseen; before any detection they point at the red spawn-region center.
class ObservationHistory {
 public:
  Observation push(Vec2 self, const Detection& detection, Vec2 zone_center, Vec2 red_spawn_center);
  void clear();
  bool empty() const { return count_ == 0; }

 private:
  std::array<std::array<double, kFrameSize>, kStackDepth> frames_{};
  std::size_t count_ = 0;
  std::optional<Vec2> last_red_offset_;
};

Observation build_observation(const WorldState& state, int drone_id, ObservationHistory& history,
                              const WorldConfig& cfg);

// Potential used for shaping: -k times this drone's distance to the red drone.
double shaping_potential(const WorldState& state, int drone_id, const WorldConfig& cfg);
double terminal_reward(const StepEvents& events);
double compute_reward(const WorldState& prev, const WorldState& next, const StepEvents& events,
                      int drone_id, const WorldConfig& cfg);

struct BlueSnapshot {
  int id = 0;
  double x = 0, y = 0, heading = 0;
  bool operator==(const BlueSnapshot&) const = default;
};

struct RedSnapshot {
  double x = 0, y = 0, heading = 0;
  bool neutralized = false;
  bool operator==(const RedSnapshot&) const = default;
};

// World state at tick `t` plus what every agent did from it. The final step of an
// episode carries the terminal state and empty action/reward/controller vectors.
struct StepRecord {
  int t = 0;
  std::vector<BlueSnapshot> blues;
  RedSnapshot red;
  std::vector<Detection> detections;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<Controller> controllers;
  std::vector<std::optional<Vec2>> waypoints;  // operator's active waypoint per drone
  bool operator==(const StepRecord&) const = default;
};

struct EpisodeRecord {
  ScenarioSpec scenario;
  SpawnOverrides overrides;
  std::vector<StepRecord> steps;
  std::vector<std::vector<Transition>> transitions;  // per agent, equal lengths
  Outcome outcome = Outcome::Timeout;
  int total_ticks = 0;
};

StepRecord snapshot(const WorldState& state);

// Rebuilds per-agent transitions (observations, rewards, terminal flags) from a logged trace.
std::vector<std::vector<Transition>> transitions_from_steps(const std::vector<StepRecord>& steps,
                                                            Outcome outcome, const WorldConfig& cfg);

struct AgentContext {
  int drone_id;
  const Observation& observation;
  const WorldState& world;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset(const WorldState&) {}
  virtual ActionId act(const AgentContext& ctx) = 0;
};

// Returns an override action while a human controls the drone.
using ControlHook = std::function<std::optional<ActionId>(int drone_id, const WorldState&)>;

// Tick-by-tick episode driver shared by training, evaluation, and the trial server.
class EpisodeRunner {
 public:
  EpisodeRunner(const ScenarioSpec& spec, const WorldConfig& cfg, const SpawnOverrides& overrides = {});

  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const WorldConfig& config() const { return cfg_; }
  const Observation& observation(int drone_id) const;
  bool done() const { return state_.ended; }
  int agent_count() const { return static_cast<int>(state_.blues.size()); }

  struct TickResult {
    StepEvents events;
    std::vector<Transition> transitions;  // one per agent
  };

  const TickResult& step(std::span<const ActionId> actions, std::span<const Controller> controllers);

  Outcome outcome() const;
  EpisodeRecord record() const;

 private:
  WorldConfig cfg_;
  SpawnOverrides overrides_;
  WorldState state_;
  std::vector<ObservationHistory> histories_;
  std::vector<Observation> observations_;
  std::vector<StepRecord> steps_;
  std::vector<std::vector<Transition>> transitions_;
  TickResult last_;
  StepEvents final_events_;
};

// Runs one episode. `policies` holds either one shared policy or one per agent.
EpisodeRecord env_episode(std::span<Policy* const> policies, const ScenarioSpec& spec,
                          const WorldConfig& cfg, const ControlHook& hook = {},
                          const SpawnOverrides& overrides = {});

}  // namespace adf
