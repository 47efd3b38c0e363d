#include "adf/server.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>

namespace adf {

using nlohmann::json;

namespace {

json vec_json(Vec2 v) { return {{"x", v.x}, {"y", v.y}}; }

Vec2 vec_from(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>()}; }

json trial_json(const TrialConfig& c) {
  json starts = json::array();
  for (const auto& p : c.blue_starts) starts.push_back({{"x", p.position.x}, {"y", p.position.y}, {"heading", p.heading}});
  json route = json::array();
  for (const auto& w : c.red_route) route.push_back(vec_json(w));
  return {{"scenario", {{"kind", to_string(c.scenario.kind)}, {"seed", c.scenario.seed}}},
          {"mini", c.mini},
          {"blue_count", c.blue_count},
          {"blue_starts", std::move(starts)},
          {"red_route", std::move(route)},
          {"algorithm", to_string(c.algorithm)},
          {"checkpoint", c.checkpoint},
          {"human_involved", c.human_involved},
          {"update_frequency", c.update_frequency},
          {"reveal_red", c.reveal_red},
          {"participant", c.participant}};
}

TrialConfig trial_from(const json& j) {
  TrialConfig c;
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    if (s.contains("kind")) c.scenario.kind = parse_scenario_kind(s.at("kind").get<std::string>());
    if (s.contains("seed")) c.scenario.seed = s.at("seed").get<std::uint64_t>();
  }
  c.mini = j.value("mini", c.mini);
  c.blue_count = j.value("blue_count", c.blue_count);
  if (j.contains("blue_starts"))
    for (const auto& p : j.at("blue_starts")) c.blue_starts.push_back({vec_from(p), p.value("heading", 0.0)});
  if (j.contains("red_route"))
    for (const auto& w : j.at("red_route")) c.red_route.push_back(vec_from(w));
  if (j.contains("algorithm")) c.algorithm = parse_agent_algorithm(j.at("algorithm").get<std::string>());
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.human_involved = j.value("human_involved", c.human_involved);
  c.update_frequency = j.value("update_frequency", c.update_frequency);
  c.reveal_red = j.value("reveal_red", c.reveal_red);
  c.participant = j.value("participant", c.participant);
  return c;
}

std::string timestamp_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string to_string(AgentAlgorithm a) {
  switch (a) {
    case AgentAlgorithm::Trained: return "trained";
    case AgentAlgorithm::Heuristic: return "heuristic";
    case AgentAlgorithm::Random: return "random";
  }
  return "heuristic";
}

AgentAlgorithm parse_agent_algorithm(const std::string& s) {
  if (s == "trained") return AgentAlgorithm::Trained;
  if (s == "heuristic") return AgentAlgorithm::Heuristic;
  if (s == "random") return AgentAlgorithm::Random;
  throw Error(ErrorCode::InvalidConfig, "unknown agent algorithm '" + s + "'");
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Configuring: return "configuring";
    case Phase::Running: return "running";
    case Phase::Paused: return "paused";
    case Phase::Ended: return "ended";
  }
  return "configuring";
}

void TrialConfig::validate() const {
  if (!(update_frequency > 0.0) || !std::isfinite(update_frequency))
    throw Error(ErrorCode::InvalidConfig, "update_frequency must be > 0");
  if (blue_count < 1) throw Error(ErrorCode::InvalidConfig, "blue_count must be >= 1");
  if (static_cast<int>(blue_starts.size()) > blue_count)
    throw Error(ErrorCode::InvalidConfig, "more blue start positions than blue drones");
  if (algorithm == AgentAlgorithm::Trained) {
    if (checkpoint.empty()) throw Error(ErrorCode::InvalidConfig, "trained agent needs a checkpoint path");
    if (!std::filesystem::exists(checkpoint)) throw Error(ErrorCode::Io, "checkpoint not found: " + checkpoint);
  }
}

ClientMessage parse_client_message(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("message is not JSON: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw Error(ErrorCode::Parse, "message must be an object");
    ClientMessage msg;
    msg.seq = doc.value("seq", std::int64_t{0});
    const std::string type = doc.at("type").get<std::string>();
    const json payload = doc.contains("payload") && !doc.at("payload").is_null() ? doc.at("payload") : json::object();
    if (type == "add_waypoint") {
      msg.command = AddWaypoint{payload.at("drone_id").get<int>(), payload.at("x").get<double>(),
                                payload.at("y").get<double>()};
    } else if (type == "delete_waypoint") {
      msg.command = DeleteWaypoint{payload.at("drone_id").get<int>(), payload.at("waypoint_index").get<int>()};
    } else if (type == "pause") {
      msg.command = Pause{};
    } else if (type == "resume") {
      msg.command = Resume{};
    } else if (type == "set_speed") {
      msg.command = SetSpeed{payload.at("multiplier").get<int>()};
    } else if (type == "configure") {
      msg.command = Configure{trial_from(payload)};
    } else if (type == "start") {
      msg.command = Start{};
    } else if (type == "stop") {
      msg.command = Stop{};
    } else {
      throw Error(ErrorCode::Parse, "unknown message type '" + type + "'");
    }
    return msg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed message: ") + e.what());
  }
}

std::string client_message_to_json(const ClientMessage& msg) {
  json doc{{"seq", msg.seq}};
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        json payload = json::object();
        if constexpr (std::is_same_v<T, AddWaypoint>) {
          doc["type"] = "add_waypoint";
          payload = {{"drone_id", c.drone_id}, {"x", c.x}, {"y", c.y}};
        } else if constexpr (std::is_same_v<T, DeleteWaypoint>) {
          doc["type"] = "delete_waypoint";
          payload = {{"drone_id", c.drone_id}, {"waypoint_index", c.waypoint_index}};
        } else if constexpr (std::is_same_v<T, Pause>) {
          doc["type"] = "pause";
        } else if constexpr (std::is_same_v<T, Resume>) {
          doc["type"] = "resume";
        } else if constexpr (std::is_same_v<T, SetSpeed>) {
          doc["type"] = "set_speed";
          payload = {{"multiplier", c.multiplier}};
        } else if constexpr (std::is_same_v<T, Configure>) {
          doc["type"] = "configure";
          payload = trial_json(c.config);
        } else if constexpr (std::is_same_v<T, Start>) {
          doc["type"] = "start";
        } else {
          doc["type"] = "stop";
        }
        doc["payload"] = std::move(payload);
      },
      msg.command);
  return doc.dump();
}

std::string error_message(std::int64_t seq, std::int64_t in_reply_to, ErrorCode code, const std::string& text) {
  return json{{"type", "error"},
              {"seq", seq},
              {"payload", {{"code", error_code_name(code)}, {"message", text}, {"in_reply_to", in_reply_to}}}}
      .dump();
}

std::pair<ActionId, Controller> resolve_action(BlueDrone& drone, Policy& agent, const Observation& obs,
                                               const WorldState& world, const WorldConfig& cfg) {
  auto& queue = drone.waypoints;
  while (!queue.empty() && distance(drone.position, queue.front()) <= cfg.blue_step()) queue.erase(queue.begin());
  if (!queue.empty()) return {waypoint_action(drone.position, drone.heading, queue.front()), Controller::Human};
  return {agent.act({drone.id, obs, world}), Controller::Agent};
}

Session::Session(WorldConfig base_world, Sink sink, DemoWriter* recorder)
    : base_world_(base_world), world_(base_world), sink_(std::move(sink)), recorder_(recorder) {}

void Session::enqueue(ClientMessage msg) {
  std::lock_guard lock(queue_mu_);
  queue_.push_back(std::move(msg));
}

void Session::apply_pending() {
  std::deque<ClientMessage> pending;
  {
    std::lock_guard lock(queue_mu_);
    pending.swap(queue_);
  }
  for (const auto& msg : pending) handle(msg);
}

void Session::emit(const std::string& type, json payload) {
  if (!sink_) return;
  sink_(json{{"type", type}, {"seq", ++out_seq_}, {"payload", std::move(payload)}}.dump());
}

void Session::fail(std::int64_t in_reply_to, ErrorCode code, const std::string& text) {
  if (sink_) sink_(error_message(++out_seq_, in_reply_to, code, text));
}

void Session::handle(const ClientMessage& msg) {
  const auto seq = msg.seq;
  const bool live = phase_ == Phase::Running || phase_ == Phase::Paused;
  auto blue_for = [&](int id) -> BlueDrone* {
    if (!runner_ || id < 0 || id >= runner_->agent_count()) return nullptr;
    return &runner_->mutable_state().blue(id);
  };

  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Configure>) {
          if (live) return fail(seq, ErrorCode::InvalidPhase, "configure is not allowed while a trial runs");
          try {
            c.config.validate();
            WorldConfig world = c.config.mini ? WorldConfig::mini() : base_world_;
            world.blue_count = c.config.blue_count;
            world.validate();
            std::unique_ptr<Policy> agent;
            switch (c.config.algorithm) {
              case AgentAlgorithm::Trained:
                agent = std::make_unique<GreedyPolicy>(nn::load_checkpoint(c.config.checkpoint).online);
                break;
              case AgentAlgorithm::Heuristic:
                agent = std::make_unique<HeuristicPolicy>(world);
                break;
              case AgentAlgorithm::Random:
                agent = std::make_unique<RandomPolicy>(mix_seed(c.config.scenario.seed, 0x5E55));
                break;
            }
            config_ = c.config;
            world_ = world;
            agent_ = std::move(agent);
            episode_index_ = 0;
            phase_ = Phase::Configuring;
          } catch (const Error& e) {
            return fail(seq, e.code(), e.what());
          }
          json world_entries = json::object();
          for (const auto& [k, v] : world_config_entries(world_)) world_entries[k] = v;
          emit("config_ack", {{"in_reply_to", seq}, {"config", trial_json(config_)}, {"world", std::move(world_entries)}});
        } else if constexpr (std::is_same_v<T, Start>) {
          if (live) return fail(seq, ErrorCode::InvalidPhase, "trial already running");
          try {
            start_episode();
          } catch (const Error& e) {
            return fail(seq, e.code(), e.what());
          }
        } else if constexpr (std::is_same_v<T, Pause>) {
          if (phase_ == Phase::Paused) return;
          if (phase_ != Phase::Running) return fail(seq, ErrorCode::InvalidPhase, "pause needs a running trial");
          phase_ = Phase::Paused;
        } else if constexpr (std::is_same_v<T, Resume>) {
          if (phase_ == Phase::Running) return;
          if (phase_ != Phase::Paused) return fail(seq, ErrorCode::InvalidPhase, "resume needs a paused trial");
          phase_ = Phase::Running;
        } else if constexpr (std::is_same_v<T, SetSpeed>) {
          if (c.multiplier != 1 && c.multiplier != 2 && c.multiplier != 5)
            return fail(seq, ErrorCode::OutOfRange, "speed multiplier must be 1, 2 or 5");
          speed_ = c.multiplier;
        } else if constexpr (std::is_same_v<T, AddWaypoint>) {
          if (!live) return fail(seq, ErrorCode::InvalidPhase, "waypoints need a running or paused trial");
          if (!config_.human_involved) return fail(seq, ErrorCode::InvalidConfig, "this trial has no human operator");
          BlueDrone* b = blue_for(c.drone_id);
          if (!b) return fail(seq, ErrorCode::UnknownDrone, "unknown drone id " + std::to_string(c.drone_id));
          if (!std::isfinite(c.x) || !std::isfinite(c.y))
            return fail(seq, ErrorCode::InvalidConfig, "waypoint coordinates must be finite");
          b->waypoints.push_back({c.x, c.y});
        } else if constexpr (std::is_same_v<T, DeleteWaypoint>) {
          if (!live) return fail(seq, ErrorCode::InvalidPhase, "waypoints need a running or paused trial");
          BlueDrone* b = blue_for(c.drone_id);
          if (!b) return fail(seq, ErrorCode::UnknownDrone, "unknown drone id " + std::to_string(c.drone_id));
          if (c.waypoint_index < 0 || c.waypoint_index >= static_cast<int>(b->waypoints.size()))
            return fail(seq, ErrorCode::OutOfRange,
                        "waypoint index " + std::to_string(c.waypoint_index) + " out of range (drone has " +
                            std::to_string(b->waypoints.size()) + ")");
          b->waypoints.erase(b->waypoints.begin() + c.waypoint_index);
        } else {
          if (phase_ == Phase::Ended) return;
          if (!live) return fail(seq, ErrorCode::InvalidPhase, "no trial to stop");
          finish_episode(true);
        }
      },
      msg.command);
}

void Session::start_episode() {
  if (!agent_) {
    config_.validate();
    world_ = config_.mini ? WorldConfig::mini() : base_world_;
    world_.blue_count = config_.blue_count;
    agent_ = std::make_unique<HeuristicPolicy>(world_);
  }
  ScenarioSpec spec = config_.scenario;
  spec.seed += static_cast<std::uint64_t>(episode_index_);
  runner_ = std::make_unique<EpisodeRunner>(spec, world_, SpawnOverrides{config_.blue_starts, config_.red_route});
  agent_->reset(runner_->state());
  log_.clear();
  last_demo_.reset();
  ++episode_index_;
  phase_ = Phase::Running;
  broadcast_state();
}

void Session::tick() {
  if (phase_ != Phase::Running || !runner_ || runner_->done()) return;
  const int n = runner_->agent_count();
  std::vector<ActionId> actions(static_cast<std::size_t>(n));
  std::vector<Controller> controllers(static_cast<std::size_t>(n));
  WorldState& state = runner_->mutable_state();
  for (int id = 0; id < n; ++id) {
    const auto i = static_cast<std::size_t>(id);
    std::tie(actions[i], controllers[i]) =
        resolve_action(state.blue(id), *agent_, runner_->observation(id), state, world_);
  }
  runner_->step(actions, controllers);
  log_.push_back(controllers);
  if (runner_->done()) finish_episode(false);
}

void Session::finish_episode(bool interrupted) {
  EpisodeRecord rec = runner_->record();
  if (interrupted) rec.outcome = Outcome::Timeout;
  Demonstration demo;
  if (!config_.human_involved) {
    demo = make_demonstration(rec, DemoSource::AgentDemo, world_, config_.participant);
  } else if (config_.algorithm == AgentAlgorithm::Trained) {
    demo = record_policy_corrected(rec, log_, world_, config_.participant);
  } else {
    demo = make_demonstration(rec, DemoSource::HumanDemo, world_, config_.participant);
  }
  demo.recorded_at = timestamp_now();
  if (rec.outcome == Outcome::Win) ++wins_;
  if (rec.outcome == Outcome::Loss) ++losses_;
  phase_ = Phase::Ended;

  bool recorded = false;
  if (recorder_) {
    try {
      recorder_->append(demo);
      recorded = true;
    } catch (const Error& e) {
      fail(0, e.code(), e.what());
    }
  }
  emit("episode_end", {{"outcome", to_string(rec.outcome)},
                       {"ticks", rec.total_ticks},
                       {"source", to_string(demo.source)},
                       {"interrupted", interrupted},
                       {"recorded", recorded},
                       {"score", {{"wins", wins_}, {"losses", losses_}}}});
  last_demo_ = std::move(demo);
  broadcast_state();
}

void Session::disconnect() {
  if (phase_ == Phase::Running || phase_ == Phase::Paused) finish_episode(true);
  sink_ = nullptr;
}

std::string Session::state_json() const {
  json blues = json::array();
  json red_visible = nullptr;
  int tick = 0;
  if (runner_) {
    const auto& s = runner_->state();
    tick = s.tick;
    for (const auto& b : s.blues) {
      json wps = json::array();
      for (const auto& w : b.waypoints) wps.push_back(vec_json(w));
      blues.push_back({{"id", b.id},
                       {"x", b.position.x},
                       {"y", b.position.y},
                       {"heading", b.heading},
                       {"waypoints", std::move(wps)},
                       {"controller", to_string(b.waypoints.empty() ? Controller::Agent : Controller::Human)}});
    }
    const bool seen = std::any_of(s.detections.begin(), s.detections.end(), [](const Detection& d) { return d.has_value(); });
    if ((seen || config_.reveal_red) && !s.red.neutralized) red_visible = vec_json(s.red.position);
  }
  return json{{"tick", tick},
              {"blues", std::move(blues)},
              {"red_visible", std::move(red_visible)},
              {"score", {{"wins", wins_}, {"losses", losses_}}},
              {"phase", to_string(phase_)},
              {"speed", speed_},
              {"zone", {{"x", world_.restricted_center.x}, {"y", world_.restricted_center.y}, {"radius", world_.restricted_radius}}},
              {"map_side", world_.map_side}}
      .dump();
}

void Session::broadcast_state() { emit("state_update", json::parse(state_json())); }

void run_session_loop(Session& session, const LoopOptions& options, const std::atomic<bool>& stop,
                      const std::function<void()>& poll_io) {
  using clock = std::chrono::steady_clock;
  auto period = [&] {
    const double secs = session.world_config().tick_seconds * options.pace_scale / session.speed();
    return std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(secs));
  };
  auto broadcast_period = [&] {
    return std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / session.config().update_frequency));
  };
  auto next_tick = clock::now();
  auto next_broadcast = clock::now();
  bool was_running = false;
  while (!stop.load()) {
    if (poll_io) poll_io();
    session.apply_pending();
    auto now = clock::now();
    const bool running = session.phase() == Phase::Running;
    if (running && !was_running) next_tick = now + period();
    if (running && now >= next_tick) {
      session.tick();
      next_tick += period();
      if (next_tick < now) next_tick = now;
    }
    was_running = session.phase() == Phase::Running;
    if (now >= next_broadcast) {
      session.broadcast_state();
      next_broadcast = now + broadcast_period();
    }
    auto wake = std::min(next_broadcast, now + options.idle_poll);
    if (was_running) wake = std::min(wake, next_tick);
    std::this_thread::sleep_until(wake);
  }
}

unsigned short port_from_env(unsigned short fallback) {
  const char* v = std::getenv("ADF_PORT");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const long p = std::strtol(v, &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) return fallback;
  return static_cast<unsigned short>(p);
}

}  // namespace adf
