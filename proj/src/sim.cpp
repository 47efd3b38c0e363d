#include "adf/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <utility>

#include "adf/keyvalue.hpp"

namespace adf {

std::string to_string(ScenarioKind kind) {
  return kind == ScenarioKind::Simple ? "simple" : "complex";
}

ScenarioKind parse_scenario_kind(const std::string& text) {
  if (text == "simple" || text == "Simple") return ScenarioKind::Simple;
  if (text == "complex" || text == "Complex") return ScenarioKind::Complex;
  throw Error(ErrorCode::InvalidConfig, "unknown scenario kind '" + text + "'");
}

void WorldConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
  };
  require(map_side > 0, "map_side must be > 0");
  require(restricted_radius > 0, "restricted_radius must be > 0");
  require(blue_count > 0, "blue_count must be > 0");
  require(max_speed > 0, "max_speed must be > 0");
  require(max_turn_rate > 0, "max_turn_rate must be > 0");
  require(red_speed_ratio > 0 && red_speed_ratio <= 1, "red_speed_ratio must be in (0, 1]");
  require(radar_range > 0, "radar_range must be > 0");
  require(radar_detect_prob >= 0 && radar_detect_prob <= 1, "radar_detect_prob must be in [0, 1]");
  require(neutralize_range > 0, "neutralize_range must be > 0");
  require(tick_seconds > 0, "tick_seconds must be > 0");
  require(episode_step_limit > 0, "episode_step_limit must be > 0");
  require(shaping_gain >= 0, "shaping_gain must be >= 0");
  require(discount > 0 && discount <= 1, "discount must be in (0, 1]");
  require(blue_spawn_radius >= 0 && red_spawn_radius >= 0, "spawn radii must be >= 0");
  require(red_spawn_offset > 0, "red_spawn_offset must be > 0");
  require(waypoint_spacing >= 0 && complex_waypoint_radius >= 0, "waypoint geometry must be >= 0");
  require(std::isfinite(restricted_center.x) && std::isfinite(restricted_center.y),
          "restricted_center must be finite");
}

WorldConfig WorldConfig::mini() {
  WorldConfig cfg;
  cfg.map_side = 600.0;
  cfg.restricted_radius = 40.0;
  cfg.red_spawn_offset = 100.0;
  cfg.red_spawn_radius = 20.0;
  cfg.blue_spawn_radius = 20.0;
  cfg.waypoint_spacing = 20.0;
  cfg.complex_waypoint_radius = 20.0;
  cfg.radar_range = 600.0;
  cfg.episode_step_limit = 60;
  cfg.red_speed_ratio = 0.5;
  cfg.max_turn_rate = 0.3;
  return cfg;
}

void apply_world_override(WorldConfig& cfg, const std::string& key, const std::string& value) {
  auto d = [&] { return parse_double(key, value); };
  if (key == "map_side") cfg.map_side = d();
  else if (key == "restricted_center_x") cfg.restricted_center.x = d();
  else if (key == "restricted_center_y") cfg.restricted_center.y = d();
  else if (key == "restricted_radius") cfg.restricted_radius = d();
  else if (key == "blue_count") cfg.blue_count = static_cast<int>(parse_int(key, value));
  else if (key == "max_speed") cfg.max_speed = d();
  else if (key == "max_turn_rate") cfg.max_turn_rate = d();
  else if (key == "red_speed_ratio") cfg.red_speed_ratio = d();
  else if (key == "radar_range") cfg.radar_range = d();
  else if (key == "radar_detect_prob") cfg.radar_detect_prob = d();
  else if (key == "neutralize_range") cfg.neutralize_range = d();
  else if (key == "tick_seconds") cfg.tick_seconds = d();
  else if (key == "episode_step_limit") cfg.episode_step_limit = static_cast<int>(parse_int(key, value));
  else if (key == "shaping_gain") cfg.shaping_gain = d();
  else if (key == "discount") cfg.discount = d();
  else if (key == "sensing") {
    if (value == "per_drone") cfg.sensing = SensingMode::PerDrone;
    else if (value == "ground_radar") cfg.sensing = SensingMode::GroundRadar;
    else throw Error(ErrorCode::InvalidConfig, "sensing: expected per_drone or ground_radar");
  } else if (key == "shaping_from_detection") cfg.shaping_from_detection = parse_bool(key, value);
  else if (key == "blue_spawn_radius") cfg.blue_spawn_radius = d();
  else if (key == "red_spawn_offset") cfg.red_spawn_offset = d();
  else if (key == "red_spawn_radius") cfg.red_spawn_radius = d();
  else if (key == "waypoint_spacing") cfg.waypoint_spacing = d();
  else if (key == "complex_waypoint_radius") cfg.complex_waypoint_radius = d();
  else throw Error(ErrorCode::InvalidConfig, "unknown world key '" + key + "'");
}

KeyValues world_config_entries(const WorldConfig& cfg) {
  auto f = format_double;
  return {
      {"map_side", f(cfg.map_side)},
      {"restricted_center_x", f(cfg.restricted_center.x)},
      {"restricted_center_y", f(cfg.restricted_center.y)},
      {"restricted_radius", f(cfg.restricted_radius)},
      {"blue_count", std::to_string(cfg.blue_count)},
      {"max_speed", f(cfg.max_speed)},
      {"max_turn_rate", f(cfg.max_turn_rate)},
      {"red_speed_ratio", f(cfg.red_speed_ratio)},
      {"radar_range", f(cfg.radar_range)},
      {"radar_detect_prob", f(cfg.radar_detect_prob)},
      {"neutralize_range", f(cfg.neutralize_range)},
      {"tick_seconds", f(cfg.tick_seconds)},
      {"episode_step_limit", std::to_string(cfg.episode_step_limit)},
      {"shaping_gain", f(cfg.shaping_gain)},
      {"discount", f(cfg.discount)},
      {"sensing", cfg.sensing == SensingMode::PerDrone ? "per_drone" : "ground_radar"},
      {"shaping_from_detection", cfg.shaping_from_detection ? "true" : "false"},
      {"blue_spawn_radius", f(cfg.blue_spawn_radius)},
      {"red_spawn_offset", f(cfg.red_spawn_offset)},
      {"red_spawn_radius", f(cfg.red_spawn_radius)},
      {"waypoint_spacing", f(cfg.waypoint_spacing)},
      {"complex_waypoint_radius", f(cfg.complex_waypoint_radius)},
  };
}

const BlueDrone& WorldState::blue(int id) const {
  if (id < 0 || id >= static_cast<int>(blues.size()))
    throw Error(ErrorCode::UnknownDrone, "unknown drone id " + std::to_string(id));
  return blues[static_cast<std::size_t>(id)];
}

BlueDrone& WorldState::blue(int id) {
  return const_cast<BlueDrone&>(std::as_const(*this).blue(id));
}

namespace {

Vec2 clamp_to_map(Vec2 p, const WorldConfig& cfg) {
  const double half = cfg.map_side / 2.0;
  return {std::clamp(p.x, cfg.restricted_center.x - half, cfg.restricted_center.x + half),
          std::clamp(p.y, cfg.restricted_center.y - half, cfg.restricted_center.y + half)};
}

void advance(Vec2& position, double& heading, double turn_input, double step_length,
             const WorldConfig& cfg) {
  if (!std::isfinite(turn_input))
    throw Error(ErrorCode::InvalidAction, "turn input must be finite");
  turn_input = std::clamp(turn_input, -1.0, 1.0);
  heading = wrap_angle(heading + cfg.max_turn_rate * turn_input);
  position = clamp_to_map(position + Vec2{std::cos(heading), std::sin(heading)} * step_length, cfg);
}

std::vector<Detection> sense_all(WorldState& state, const WorldConfig& cfg) {
  std::vector<Detection> out(state.blues.size());
  if (cfg.sensing == SensingMode::GroundRadar) {
    if (auto seen = sense_red(state.radar_position, state.red, cfg, state.rng)) {
      for (std::size_t i = 0; i < out.size(); ++i)
        if (state.blues[i].functional) out[i] = state.red.position - state.blues[i].position;
    }
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (state.blues[i].functional) out[i] = sense_red(state.blues[i].position, state.red, cfg, state.rng);
  }
  return out;
}

}  // namespace

WorldState spawn_scenario(const ScenarioSpec& spec, const WorldConfig& cfg, const SpawnOverrides& overrides) {
  cfg.validate();
  WorldState s;
  s.scenario = spec;
  s.rng.reseed(spec.seed);
  s.restricted_center = cfg.restricted_center;
  s.restricted_radius = cfg.restricted_radius;
  s.radar_position = cfg.restricted_center;

  s.blues.resize(static_cast<std::size_t>(cfg.blue_count));
  for (int i = 0; i < cfg.blue_count; ++i) {
    auto& b = s.blues[static_cast<std::size_t>(i)];
    b.id = i;
    b.position = s.rng.in_disc(cfg.restricted_center, cfg.blue_spawn_radius);
    b.heading = s.rng.uniform(-std::numbers::pi, std::numbers::pi);
  }

  const Vec2 red_center = cfg.red_spawn_center();
  s.red.position = s.rng.in_disc(red_center, cfg.red_spawn_radius);

  const Vec2 mid = (red_center + cfg.restricted_center) * 0.5;
  if (spec.kind == ScenarioKind::Simple) {
    // Three collinear waypoints centred on the midpoint, ordered from the red side.
    const Vec2 dir = (cfg.restricted_center - red_center) * (1.0 / norm(cfg.restricted_center - red_center));
    for (int k = -1; k <= 1; ++k) s.red.waypoints.push_back(mid + dir * (k * cfg.waypoint_spacing));
  } else {
    Vec2 wp;
    for (int attempt = 0;; ++attempt) {
      wp = s.rng.in_disc(mid, cfg.complex_waypoint_radius);
      const bool clear = std::none_of(s.blues.begin(), s.blues.end(), [&](const BlueDrone& b) {
        return distance(b.position, wp) <= cfg.neutralize_range;
      });
      if (clear || attempt >= 1000) break;
    }
    s.red.waypoints.push_back(wp);
  }
  s.red.waypoints.push_back(cfg.restricted_center);

  if (overrides.blue_starts.size() > s.blues.size())
    throw Error(ErrorCode::InvalidConfig, "more blue start overrides than blue drones");
  for (std::size_t i = 0; i < overrides.blue_starts.size(); ++i) {
    const Pose& p = overrides.blue_starts[i];
    if (!std::isfinite(p.position.x) || !std::isfinite(p.position.y) || !std::isfinite(p.heading))
      throw Error(ErrorCode::InvalidConfig, "blue start override is not finite");
    s.blues[i].position = p.position;
    s.blues[i].heading = wrap_angle(p.heading);
  }
  if (!overrides.red_route.empty()) {
    s.red.waypoints = overrides.red_route;
    s.red.waypoints.push_back(cfg.restricted_center);
  }
  s.red.heading = bearing(s.red.position, s.red.waypoints.front());

  s.detections = sense_all(s, cfg);
  return s;
}

BlueDrone step_kinematics(BlueDrone drone, double turn_input, const WorldConfig& cfg) {
  if (!drone.functional) throw Error(ErrorCode::InvalidAction, "drone is not functional");
  advance(drone.position, drone.heading, turn_input, cfg.blue_step(), cfg);
  return drone;
}

double red_policy_step(RedDrone& red, const WorldConfig& cfg) {
  while (red.next_waypoint + 1 < red.waypoints.size() &&
         distance(red.position, red.waypoints[red.next_waypoint]) <= cfg.red_step())
    ++red.next_waypoint;
  if (red.waypoints.empty()) return 0.0;
  const Vec2 target = red.waypoints[red.next_waypoint];
  const double error = wrap_angle(bearing(red.position, target) - red.heading);
  return std::clamp(error / cfg.max_turn_rate, -1.0, 1.0);
}

Detection sense_red(Vec2 observer, const RedDrone& red, const WorldConfig& cfg, Rng& rng) {
  if (red.neutralized) return std::nullopt;
  if (distance(observer, red.position) > cfg.radar_range) return std::nullopt;
  if (!rng.bernoulli(cfg.radar_detect_prob)) return std::nullopt;
  return red.position - observer;
}

bool check_neutralization(std::span<const BlueDrone> blues, Vec2 red, const WorldConfig& cfg) {
  return std::any_of(blues.begin(), blues.end(), [&](const BlueDrone& b) {
    return b.functional && distance(b.position, red) <= cfg.neutralize_range;
  });
}

StepEvents world_step(WorldState& state, std::span<const double> blue_turn_inputs,
                      const WorldConfig& cfg) {
  if (state.ended) throw Error(ErrorCode::InvalidPhase, "episode already ended");
  if (blue_turn_inputs.size() != state.blues.size())
    throw Error(ErrorCode::InvalidAction, "expected one turn input per blue drone");
  for (double u : blue_turn_inputs)
    if (!std::isfinite(u)) throw Error(ErrorCode::InvalidAction, "turn input must be finite");

  const double red_turn = red_policy_step(state.red, cfg);
  advance(state.red.position, state.red.heading, red_turn, cfg.red_step(), cfg);

  for (std::size_t i = 0; i < state.blues.size(); ++i) {
    auto& b = state.blues[i];
    if (b.functional) advance(b.position, b.heading, blue_turn_inputs[i], cfg.blue_step(), cfg);
  }

  StepEvents ev;
  ev.detections = sense_all(state, cfg);
  state.detections = ev.detections;

  if (check_neutralization(state.blues, state.red.position, cfg)) {
    ev.neutralized_this_tick = true;
    state.red.neutralized = true;
  } else if (distance(state.red.position, state.restricted_center) <= state.restricted_radius) {
    ev.red_reached_zone = true;
  } else if (state.tick + 1 >= cfg.episode_step_limit) {
    ev.time_expired = true;
  }
  ++state.tick;
  state.ended = ev.terminal();
  return ev;
}

std::string serialize_scenario(const ScenarioSpec& spec, const WorldConfig* overrides_from) {
  KeyValues kv{{"kind", to_string(spec.kind)}, {"seed", std::to_string(spec.seed)}};
  if (overrides_from) {
    const auto defaults = world_config_entries(WorldConfig{});
    const auto entries = world_config_entries(*overrides_from);
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].second != defaults[i].second) kv.push_back(entries[i]);
  }
  return format_key_values(kv);
}

ScenarioSpec parse_scenario(const std::string& text, WorldConfig* cfg) {
  ScenarioSpec spec;
  bool have_kind = false, have_seed = false;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "kind") {
      spec.kind = parse_scenario_kind(value);
      have_kind = true;
    } else if (key == "seed") {
      const auto* end = value.data() + value.size();
      auto [ptr, ec] = std::from_chars(value.data(), end, spec.seed);
      if (ec != std::errc() || ptr != end) throw Error(ErrorCode::Parse, "seed: not an unsigned integer");
      have_seed = true;
    } else if (cfg) {
      apply_world_override(*cfg, key, value);
    } else {
      throw Error(ErrorCode::Parse, "unexpected key '" + key + "' in scenario document");
    }
  }
  if (!have_kind || !have_seed) throw Error(ErrorCode::Parse, "scenario document needs kind and seed");
  if (cfg) cfg->validate();
  return spec;
}

}  // namespace adf
