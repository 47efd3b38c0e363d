#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adf/sim.hpp"

using namespace adf;

namespace {

WorldConfig world_with_range(double radar_range) {
  WorldConfig cfg;
  cfg.radar_range = radar_range;
  return cfg;
}

}  // namespace

TEST(Angles, WrapStaysInRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(-100.0, 100.0);
    const double w = wrap_angle(a);
    EXPECT_GE(w, -std::numbers::pi);
    EXPECT_LE(w, std::numbers::pi);
    EXPECT_NEAR(std::sin(w), std::sin(a), 1e-9);
    EXPECT_NEAR(std::cos(w), std::cos(a), 1e-9);
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(Rng(42).next(), c.next());
}

TEST(Rng, BelowIsUniformEnough) {
  Rng rng(1);
  std::array<int, 5> hist{};
  for (int i = 0; i < 50000; ++i) ++hist[rng.below(5)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
  EXPECT_THROW(rng.below(0), Error);
}

TEST(Kinematics, ConstantSpeedAndClampedTurn) {
  const WorldConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    BlueDrone d;
    d.position = {rng.uniform(-100, 100), rng.uniform(-100, 100)};
    d.heading = rng.uniform(-3, 3);
    const double u = rng.uniform(-3, 3);
    const BlueDrone n = step_kinematics(d, u, cfg);
    EXPECT_NEAR(distance(n.position, d.position), cfg.max_speed * cfg.tick_seconds, 1e-9);
    const double turned = wrap_angle(n.heading - d.heading);
    EXPECT_NEAR(turned, std::clamp(u, -1.0, 1.0) * cfg.max_turn_rate, 1e-9);
  }
}

TEST(Kinematics, RejectsNonFiniteInput) {
  const WorldConfig cfg;
  BlueDrone d;
  EXPECT_THROW(step_kinematics(d, std::nan(""), cfg), Error);
  EXPECT_THROW(step_kinematics(d, INFINITY, cfg), Error);
}

TEST(Sensing, DetectionRateNearConfigured) {
  const WorldConfig cfg = world_with_range(1500);
  RedDrone red;
  red.position = {500, 0};
  Rng rng(11);
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto d = sense_red({0, 0}, red, cfg, rng);
    if (d) {
      ++hits;
      EXPECT_EQ(*d, (Vec2{500, 0}));
    }
  }
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.95, 0.01);
}

TEST(Sensing, OutOfRangeNeverDetected) {
  const WorldConfig cfg = world_with_range(100);
  RedDrone red;
  red.position = {100.0 + 1e-9, 0};
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) EXPECT_FALSE(sense_red({0, 0}, red, cfg, rng).has_value());
}

TEST(Sensing, NeutralizedRedIsInvisible) {
  const WorldConfig cfg;
  RedDrone red;
  red.neutralized = true;
  Rng rng(5);
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(sense_red({0, 0}, red, cfg, rng).has_value());
}

TEST(Neutralization, InclusiveBoundary) {
  const WorldConfig cfg;
  std::vector<BlueDrone> blues(1);
  for (double d : {0.0, 5.0, 9.999999, 10.0}) EXPECT_TRUE(check_neutralization(blues, {d, 0}, cfg)) << d;
  for (double d : {10.000001, 10.5, 50.0}) EXPECT_FALSE(check_neutralization(blues, {d, 0}, cfg)) << d;
  blues[0].functional = false;
  EXPECT_FALSE(check_neutralization(blues, {0, 0}, cfg));
}

TEST(Spawn, DeterministicPerSeed) {
  const WorldConfig cfg;
  for (auto kind : {ScenarioKind::Simple, ScenarioKind::Complex}) {
    const auto a = spawn_scenario({kind, 9}, cfg);
    const auto b = spawn_scenario({kind, 9}, cfg);
    const auto c = spawn_scenario({kind, 10}, cfg);
    ASSERT_EQ(a.blues.size(), 5u);
    for (std::size_t i = 0; i < a.blues.size(); ++i) EXPECT_EQ(a.blues[i].position, b.blues[i].position);
    EXPECT_EQ(a.red.waypoints, b.red.waypoints);
    EXPECT_EQ(a.rng, b.rng);
    EXPECT_NE(a.blues[0].position, c.blues[0].position);
  }
}

TEST(Spawn, GeometryMatchesConfig) {
  const WorldConfig cfg;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto simple = spawn_scenario({ScenarioKind::Simple, s}, cfg);
    for (const auto& b : simple.blues)
      EXPECT_LE(distance(b.position, cfg.restricted_center), cfg.blue_spawn_radius + 1e-9);
    EXPECT_LE(distance(simple.red.position, cfg.red_spawn_center()), cfg.red_spawn_radius + 1e-9);
    ASSERT_FALSE(simple.red.waypoints.empty());
    EXPECT_EQ(simple.red.waypoints.back(), cfg.restricted_center);

    const auto complex = spawn_scenario({ScenarioKind::Complex, s}, cfg);
    const Vec2 mid = (cfg.red_spawn_center() + cfg.restricted_center) * 0.5;
    ASSERT_EQ(simple.red.waypoints.size(), 4u);
    EXPECT_LT(distance(simple.red.waypoints[1], mid), 1e-9);
    ASSERT_EQ(complex.red.waypoints.size(), 2u);
    EXPECT_LE(distance(complex.red.waypoints[0], mid), cfg.complex_waypoint_radius + 1e-9);
  }
}

TEST(Spawn, OverridesReplaceStartsAndRouteWithoutShiftingRng) {
  const WorldConfig cfg = WorldConfig::mini();
  SpawnOverrides ov;
  ov.blue_starts = {{{1, 2}, 0.5}, {{-3, 4}, -1.0}};
  ov.red_route = {{50, 50}, {20, 20}};
  const auto plain = spawn_scenario({ScenarioKind::Simple, 4}, cfg);
  const auto edited = spawn_scenario({ScenarioKind::Simple, 4}, cfg, ov);
  EXPECT_EQ(edited.blues[0].position, (Vec2{1, 2}));
  EXPECT_DOUBLE_EQ(edited.blues[1].heading, -1.0);
  EXPECT_EQ(edited.blues[2].position, plain.blues[2].position);
  ASSERT_EQ(edited.red.waypoints.size(), 3u);
  EXPECT_EQ(edited.red.waypoints.back(), cfg.restricted_center);

  SpawnOverrides too_many;
  too_many.blue_starts.assign(6, Pose{});
  EXPECT_THROW(spawn_scenario({ScenarioKind::Simple, 4}, cfg, too_many), Error);
}

TEST(WorldStep, TerminalPrecedenceAndTimeLimit) {
  WorldConfig cfg = WorldConfig::mini();
  auto state = spawn_scenario({ScenarioKind::Simple, 2}, cfg);
  // A blue drone flying alongside the red drone closes within range on the first tick.
  state.blues[0].position = state.red.position;
  state.blues[0].heading = state.red.heading;
  std::vector<double> turns(state.blues.size(), 0.0);
  const auto ev = world_step(state, turns, cfg);
  EXPECT_TRUE(ev.neutralized_this_tick);
  EXPECT_TRUE(state.red.neutralized);
  EXPECT_TRUE(state.ended);
  EXPECT_THROW(world_step(state, turns, cfg), Error);

  cfg.episode_step_limit = 3;
  auto s2 = spawn_scenario({ScenarioKind::Simple, 2}, cfg);
  StepEvents last;
  int ticks = 0;
  while (!s2.ended) {
    last = world_step(s2, turns, cfg);
    ++ticks;
  }
  EXPECT_LE(ticks, 3);
  if (ticks == 3 && !last.neutralized_this_tick && !last.red_reached_zone) EXPECT_TRUE(last.time_expired);
}

TEST(WorldStep, RejectsWrongArity) {
  const WorldConfig cfg;
  auto state = spawn_scenario({ScenarioKind::Simple, 1}, cfg);
  std::vector<double> turns(2, 0.0);
  EXPECT_THROW(world_step(state, turns, cfg), Error);
}

TEST(WorldStep, RedReachesZoneWhenUnopposed) {
  WorldConfig cfg = WorldConfig::mini();
  cfg.episode_step_limit = 1000;
  auto state = spawn_scenario({ScenarioKind::Simple, 8}, cfg);
  for (auto& b : state.blues) b.position = {-280, -280};
  std::vector<double> turns(state.blues.size(), 1.0);
  StepEvents ev;
  while (!state.ended) ev = world_step(state, turns, cfg);
  EXPECT_TRUE(ev.red_reached_zone);
  EXPECT_LE(distance(state.red.position, cfg.restricted_center), cfg.restricted_radius + 1e-9);
}

TEST(Config, ValidationRejectsBadValues) {
  WorldConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"radar_detect_prob", "1.5"}, {"blue_count", "0"}, {"max_speed", "-1"}, {"discount", "1.2"}}) {
    WorldConfig c;
    try {
      apply_world_override(c, k, v);
      c.validate();
      ADD_FAILURE() << k << "=" << v << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
  }
  EXPECT_THROW(apply_world_override(cfg, "no_such_key", "1"), Error);
}

TEST(Config, EntriesRoundTrip) {
  WorldConfig a = WorldConfig::mini();
  a.radar_detect_prob = 0.9;
  WorldConfig b;
  for (const auto& [k, v] : world_config_entries(a)) apply_world_override(b, k, v);
  EXPECT_EQ(world_config_entries(a), world_config_entries(b));
}

TEST(Scenario, SerializeRoundTrip) {
  WorldConfig cfg = WorldConfig::mini();
  const ScenarioSpec spec{ScenarioKind::Complex, 0xFFFFFFFFFFFFFFFFULL};
  const std::string text = serialize_scenario(spec, &cfg);
  WorldConfig parsed;
  EXPECT_EQ(parse_scenario(text, &parsed), spec);
  EXPECT_EQ(world_config_entries(parsed), world_config_entries(cfg));
  EXPECT_THROW(parse_scenario("kind = diagonal\nseed = 1\n"), Error);
}
