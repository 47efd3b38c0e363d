#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adf/common.hpp"

namespace adf {

enum class ScenarioKind { Simple, Complex };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& text);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Simple;
  std::uint64_t seed = 0;
  bool operator==(const ScenarioSpec&) const = default;
};

// Which sensor produces a blue drone's view of the red drone.
enum class SensingMode {
  PerDrone,     // each blue drone senses from its own position with radar_range
  GroundRadar,  // one roll per tick from the ground radar at the zone center
};

struct WorldConfig {
  double map_side = 6000.0;
  Vec2 restricted_center{0.0, 0.0};
  double restricted_radius = 520.0;
  int blue_count = 5;
  double max_speed = 10.0;
  double max_turn_rate = 0.15;  // rad per tick
  double red_speed_ratio = 1.0;
  double radar_range = 1500.0;
  double radar_detect_prob = 0.95;
  double neutralize_range = 10.0;
  double tick_seconds = 1.0;
  int episode_step_limit = 400;
  double shaping_gain = 0.01;
  double discount = 0.99;
  SensingMode sensing = SensingMode::PerDrone;
  bool shaping_from_detection = false;

  // Spawn geometry.
  double blue_spawn_radius = 200.0;
  double red_spawn_offset = 1000.0;
  double red_spawn_radius = 200.0;
  double waypoint_spacing = 200.0;
  double complex_waypoint_radius = 200.0;

  // Throws Error(InvalidConfig) on the first violated constraint.
  void validate() const;

  Vec2 red_spawn_center() const { return restricted_center + Vec2{red_spawn_offset, 0.0}; }
  double blue_step() const { return max_speed * tick_seconds; }
  double red_step() const { return max_speed * red_speed_ratio * tick_seconds; }

  // 600 m map, red spawning 100 m out, 60-tick limit.
  static WorldConfig mini();
};

// Applies one `key = value` override; unknown keys raise InvalidConfig.
void apply_world_override(WorldConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::pair<std::string, std::string>> world_config_entries(const WorldConfig& cfg);

struct BlueDrone {
  int id = 0;
  Vec2 position;
  double heading = 0.0;
  bool functional = true;
  std::vector<Vec2> waypoints;  // operator-assigned; empty means autonomous
};

struct RedDrone {
  Vec2 position;
  double heading = 0.0;
  std::vector<Vec2> waypoints;  // final entry is the restricted center
  std::size_t next_waypoint = 0;
  bool neutralized = false;
};

using Detection = std::optional<Vec2>;

struct StepEvents {
  std::vector<Detection> detections;  // indexed by blue drone id
  bool neutralized_this_tick = false;
  bool red_reached_zone = false;
  bool time_expired = false;

  bool terminal() const { return neutralized_this_tick || red_reached_zone || time_expired; }
};

struct WorldState {
  ScenarioSpec scenario;
  int tick = 0;
  std::vector<BlueDrone> blues;
  RedDrone red;
  Vec2 radar_position;
  Vec2 restricted_center;
  double restricted_radius = 0.0;
  std::vector<Detection> detections;  // sensing result of the latest tick
  bool ended = false;
  Rng rng;

  const BlueDrone& blue(int id) const;
  BlueDrone& blue(int id);
};

struct Pose {
  Vec2 position;
  double heading = 0.0;
  bool operator==(const Pose&) const = default;
};

// Trial-level edits to a seeded layout. They are applied after the seeded draws, so the
// random stream is the same with or without them.
struct SpawnOverrides {
  std::vector<Pose> blue_starts;  // replaces the first blue_starts.size() drones
  std::vector<Vec2> red_route;    // replaces the red waypoints; the zone center is appended
  bool empty() const { return blue_starts.empty() && red_route.empty(); }
  bool operator==(const SpawnOverrides&) const = default;
};

WorldState spawn_scenario(const ScenarioSpec& spec, const WorldConfig& cfg, const SpawnOverrides& overrides = {});

// One kinematic tick at constant max speed. Non-finite turn input raises InvalidAction;
// finite input is clamped to [-1, 1].
BlueDrone step_kinematics(BlueDrone drone, double turn_input, const WorldConfig& cfg);

// Steers toward the red drone's active waypoint; consumes waypoints once within one step.
double red_policy_step(RedDrone& red, const WorldConfig& cfg);

Detection sense_red(Vec2 observer, const RedDrone& red, const WorldConfig& cfg, Rng& rng);

bool check_neutralization(std::span<const BlueDrone> blues, Vec2 red, const WorldConfig& cfg);

// Advances red then blues one tick and evaluates terminal events in precedence order
// neutralization > zone entry > time limit.
StepEvents world_step(WorldState& state, std::span<const double> blue_turn_inputs,
                      const WorldConfig& cfg);

// Key-value text document: kind, seed, then optional world overrides.
std::string serialize_scenario(const ScenarioSpec& spec, const WorldConfig* overrides_from = nullptr);
ScenarioSpec parse_scenario(const std::string& text, WorldConfig* cfg = nullptr);

}  // namespace adf
