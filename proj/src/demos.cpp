#include "adf/demos.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

namespace adf {

using nlohmann::json;

namespace {

std::vector<std::pair<std::string, std::string>> non_default_entries(const WorldConfig& cfg) {
  const auto defaults = world_config_entries(WorldConfig{});
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, value] : world_config_entries(cfg)) {
    for (const auto& [dkey, dvalue] : defaults)
      if (dkey == key && dvalue != value) out.emplace_back(key, value);
  }
  std::sort(out.begin(), out.end());  // same order as a parsed JSON object
  return out;
}

json vec_json(Vec2 v) { return {{"x", v.x}, {"y", v.y}}; }
Vec2 vec_from(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>()}; }

json step_json(const StepRecord& s) {
  json blues = json::array();
  for (const auto& b : s.blues) blues.push_back({{"id", b.id}, {"x", b.x}, {"y", b.y}, {"heading", b.heading}});
  json detections = json::array();
  for (const auto& d : s.detections) detections.push_back(d ? vec_json(*d) : json(nullptr));
  json controllers = json::array();
  for (auto c : s.controllers) controllers.push_back(to_string(c));
  json waypoints = json::array();
  for (const auto& w : s.waypoints) waypoints.push_back(w ? vec_json(*w) : json(nullptr));
  return {{"t", s.t},
          {"blues", std::move(blues)},
          {"red", {{"x", s.red.x}, {"y", s.red.y}, {"heading", s.red.heading}, {"neutralized", s.red.neutralized}}},
          {"detections", std::move(detections)},
          {"actions", s.actions},
          {"rewards", s.rewards},
          {"controllers", std::move(controllers)},
          {"waypoints", std::move(waypoints)}};
}

StepRecord step_from(const json& j) {
  StepRecord s;
  s.t = j.at("t").get<int>();
  for (const auto& b : j.at("blues"))
    s.blues.push_back({b.at("id").get<int>(), b.at("x").get<double>(), b.at("y").get<double>(),
                       b.at("heading").get<double>()});
  const auto& r = j.at("red");
  s.red = {r.at("x").get<double>(), r.at("y").get<double>(), r.at("heading").get<double>(),
           r.at("neutralized").get<bool>()};
  for (const auto& d : j.at("detections")) s.detections.push_back(d.is_null() ? Detection{} : Detection{vec_from(d)});
  for (const auto& a : j.at("actions")) {
    const int v = a.get<int>();
    action_from_int(v);
    s.actions.push_back(v);
  }
  s.rewards = j.at("rewards").get<std::vector<double>>();
  for (const auto& c : j.at("controllers")) s.controllers.push_back(parse_controller(c.get<std::string>()));
  if (j.contains("waypoints"))
    for (const auto& w : j.at("waypoints"))
      s.waypoints.push_back(w.is_null() ? std::nullopt : std::optional<Vec2>(vec_from(w)));
  if (s.actions.size() != s.rewards.size() || s.actions.size() != s.controllers.size())
    throw Error(ErrorCode::Parse, "step " + std::to_string(s.t) + ": actions, rewards and controllers differ in length");
  return s;
}

}  // namespace

WorldConfig Demonstration::world_config() const {
  WorldConfig cfg;
  for (const auto& [key, value] : world) apply_world_override(cfg, key, value);
  return cfg;
}

Demonstration make_demonstration(const EpisodeRecord& episode, DemoSource source, const WorldConfig& cfg,
                                 std::string participant) {
  Demonstration d;
  d.scenario = episode.scenario;
  d.source = source;
  d.participant = std::move(participant);
  d.world = non_default_entries(cfg);
  d.overrides = episode.overrides;
  d.steps = episode.steps;
  d.outcome = episode.outcome;
  d.ticks = episode.total_ticks;
  return d;
}

std::string demo_to_json(const Demonstration& demo) {
  json steps = json::array();
  for (const auto& s : demo.steps) steps.push_back(step_json(s));
  json world = json::object();
  for (const auto& [key, value] : demo.world) world[key] = value;
  json doc = {{"version", kDemoFormatVersion},
              {"scenario", {{"kind", to_string(demo.scenario.kind)}, {"seed", demo.scenario.seed}}},
              {"source", to_string(demo.source)},
              {"participant", demo.participant},
              {"session", demo.session},
              {"recorded_at", demo.recorded_at},
              {"world", std::move(world)},
              {"steps", std::move(steps)},
              {"outcome", to_string(demo.outcome)},
              {"ticks", demo.ticks}};
  if (!demo.overrides.empty()) {
    json starts = json::array();
    for (const auto& p : demo.overrides.blue_starts)
      starts.push_back({{"x", p.position.x}, {"y", p.position.y}, {"heading", p.heading}});
    json route = json::array();
    for (const auto& w : demo.overrides.red_route) route.push_back(vec_json(w));
    doc["overrides"] = {{"blue_starts", std::move(starts)}, {"red_route", std::move(route)}};
  }
  return doc.dump();
}

Demonstration demo_from_json(const std::string& line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("demo record: ") + e.what());
  }
  try {
    const int version = doc.at("version").get<int>();
    if (version != kDemoFormatVersion)
      throw Error(ErrorCode::Parse, "unsupported demo record version " + std::to_string(version));
    Demonstration d;
    d.scenario.kind = parse_scenario_kind(doc.at("scenario").at("kind").get<std::string>());
    d.scenario.seed = doc.at("scenario").at("seed").get<std::uint64_t>();
    d.source = parse_demo_source(doc.at("source").get<std::string>());
    d.participant = doc.value("participant", "");
    d.session = doc.value("session", "");
    d.recorded_at = doc.value("recorded_at", "");
    if (doc.contains("world"))
      for (const auto& [key, value] : doc.at("world").items()) d.world.emplace_back(key, value.get<std::string>());
    if (doc.contains("overrides")) {
      const auto& o = doc.at("overrides");
      for (const auto& p : o.at("blue_starts"))
        d.overrides.blue_starts.push_back({vec_from(p), p.at("heading").get<double>()});
      for (const auto& w : o.at("red_route")) d.overrides.red_route.push_back(vec_from(w));
    }
    for (const auto& s : doc.at("steps")) d.steps.push_back(step_from(s));
    d.outcome = parse_outcome(doc.at("outcome").get<std::string>());
    d.ticks = doc.at("ticks").get<int>();
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("demo record: ") + e.what());
  }
}

std::size_t DemoStore::count(std::optional<DemoSource> source, bool wins_only) const {
  std::size_t n = 0;
  for (const auto& d : episodes)
    if ((!source || d.source == *source) && (!wins_only || d.outcome == Outcome::Win)) ++n;
  return n;
}

DemoStore read_demo_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  DemoStore store;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      store.episodes.push_back(demo_from_json(line));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return store;
}

void write_demo_store(const DemoStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  for (const auto& d : store.episodes) out << demo_to_json(d) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

DemoWriter::DemoWriter(const std::string& path) : path_(path), out_(path, std::ios::app) {
  if (!out_) throw Error(ErrorCode::Io, "cannot open " + path + " for appending");
}

void DemoWriter::append(const Demonstration& demo) {
  const std::string line = demo_to_json(demo);
  std::lock_guard lock(mu_);
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::Io, "write failed: " + path_);
}

ScenarioSpec collect_scenario(ScenarioKind kind, std::uint64_t seed, int attempt) {
  return {kind, mix_seed(mix_seed(seed, 0xDE30), static_cast<std::uint64_t>(attempt))};
}

DemoStore collect_agent_demos(Policy& policy, const WorldConfig& cfg, ScenarioKind kind, int count,
                              bool only_wins, std::uint64_t seed, DemoSource source, int max_attempts) {
  if (count < 0) throw Error(ErrorCode::InvalidConfig, "demo count must be >= 0");
  if (max_attempts < 0) max_attempts = 100 * count + 1000;
  DemoStore store;
  Policy* p = &policy;
  for (int attempt = 0; static_cast<int>(store.episodes.size()) < count; ++attempt) {
    if (attempt >= max_attempts)
      throw Error(ErrorCode::OutOfRange, "collected " + std::to_string(store.episodes.size()) + " of " +
                                             std::to_string(count) + " demos in " + std::to_string(attempt) +
                                             " episodes");
    const auto rec = env_episode(std::span<Policy* const>(&p, 1), collect_scenario(kind, seed, attempt), cfg);
    if (only_wins && rec.outcome != Outcome::Win) continue;
    store.episodes.push_back(make_demonstration(rec, source, cfg));
  }
  return store;
}

ActionId waypoint_action(Vec2 position, double heading, Vec2 waypoint) {
  const double error = wrap_angle(bearing(position, waypoint) - heading);
  return error >= 0.0 ? ActionId::PositiveTurn : ActionId::NegativeTurn;
}

std::vector<std::vector<int>> embodiment_map(const std::vector<StepRecord>& steps) {
  std::vector<std::vector<int>> out;
  for (const auto& s : steps) {
    if (s.actions.empty()) break;
    std::vector<int> tick(s.actions.size());
    for (std::size_t i = 0; i < s.actions.size(); ++i) {
      const bool has_wp = i < s.waypoints.size() && s.waypoints[i] && i < s.blues.size();
      tick[i] = has_wp ? to_int(waypoint_action({s.blues[i].x, s.blues[i].y}, s.blues[i].heading, *s.waypoints[i]))
                       : s.actions[i];
    }
    out.push_back(std::move(tick));
  }
  return out;
}

Demonstration record_policy_corrected(const EpisodeRecord& episode,
                                      const std::vector<std::vector<Controller>>& arbitration_log,
                                      const WorldConfig& cfg, std::string participant) {
  Demonstration d = make_demonstration(episode, DemoSource::PolicyCorrected, cfg, std::move(participant));
  std::size_t acted = 0;
  for (const auto& s : d.steps)
    if (!s.actions.empty()) ++acted;
  if (arbitration_log.size() != acted)
    throw Error(ErrorCode::InvalidConfig, "arbitration log has " + std::to_string(arbitration_log.size()) +
                                              " ticks, episode has " + std::to_string(acted));
  for (std::size_t t = 0; t < acted; ++t) {
    if (arbitration_log[t].size() != d.steps[t].actions.size())
      throw Error(ErrorCode::InvalidConfig, "arbitration log tick " + std::to_string(t) + " has the wrong drone count");
    d.steps[t].controllers = arbitration_log[t];
  }
  return d;
}

DemoBuffer load_transitions(const DemoStore& store, const LoadOptions& options, const WorldConfig& fallback) {
  DemoBuffer buffer;
  buffer.set_equalize_sources(options.equalize_sources);
  for (const auto& demo : store.episodes) {
    if (options.source && demo.source != *options.source) continue;
    if (options.wins_only && demo.outcome != Outcome::Win) continue;
    const WorldConfig cfg = demo.world.empty() ? fallback : demo.world_config();
    std::vector<StepRecord> steps = demo.steps;
    if (options.mapped_actions) {
      const auto mapped = embodiment_map(steps);
      for (std::size_t t = 0; t < mapped.size(); ++t) steps[t].actions = mapped[t];
    }
    for (const auto& agent : transitions_from_steps(steps, demo.outcome, cfg))
      for (auto& sample : make_samples(agent, options.n_step, options.gamma, true))
        buffer.add(std::move(sample), demo.source);
  }
  return buffer;
}

double reward_divergence(const Demonstration& demo) {
  const WorldConfig cfg = demo.world_config();
  auto potential = [&](const StepRecord& s, std::size_t i) {
    if (cfg.shaping_from_detection) {
      const auto& det = s.detections.at(i);
      return det ? -cfg.shaping_gain * norm(*det) : 0.0;
    }
    return -cfg.shaping_gain * distance({s.blues.at(i).x, s.blues.at(i).y}, {s.red.x, s.red.y});
  };
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < demo.steps.size(); ++t) {
    const auto& s = demo.steps[t];
    const auto& next = demo.steps[t + 1];
    const bool last = t + 2 == demo.steps.size();
    double terminal = 0.0;
    if (last && demo.outcome == Outcome::Win) terminal = 1.0;
    if (last && demo.outcome == Outcome::Loss) terminal = -1.0;
    for (std::size_t i = 0; i < s.rewards.size(); ++i) {
      const double expected = terminal + cfg.discount * potential(next, i) - potential(s, i);
      worst = std::max(worst, std::abs(expected - s.rewards[i]));
    }
  }
  return worst;
}

double replay_divergence(const Demonstration& demo) {
  if (demo.steps.empty()) throw Error(ErrorCode::EmptyInput, "demonstration has no steps");
  const WorldConfig cfg = demo.world_config();
  WorldState state = spawn_scenario(demo.scenario, cfg, demo.overrides);
  double worst = 0.0;
  auto compare = [&](const StepRecord& s) {
    if (s.blues.size() != state.blues.size())
      throw Error(ErrorCode::Parse, "stored blue count does not match the scenario");
    for (std::size_t i = 0; i < s.blues.size(); ++i)
      worst = std::max(worst, distance({s.blues[i].x, s.blues[i].y}, state.blues[i].position));
    worst = std::max(worst, distance({s.red.x, s.red.y}, state.red.position));
  };
  for (const auto& s : demo.steps) {
    compare(s);
    if (s.actions.empty()) break;
    if (state.ended) throw Error(ErrorCode::Parse, "stored episode continues past the simulated end");
    std::vector<double> turns;
    for (int a : s.actions) turns.push_back(turn_input(action_from_int(a)));
    world_step(state, turns, cfg);
  }
  return worst;
}

}  // namespace adf
