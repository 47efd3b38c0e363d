#include "adf/env.hpp"

#include <algorithm>

namespace adf {

ActionId action_from_int(int value) {
  if (value == 0) return ActionId::NegativeTurn;
  if (value == 1) return ActionId::PositiveTurn;
  throw Error(ErrorCode::InvalidAction, "action must be 0 or 1, got " + std::to_string(value));
}

std::string to_string(Controller c) { return c == Controller::Agent ? "agent" : "human"; }

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Win: return "win";
    case Outcome::Loss: return "loss";
    case Outcome::Timeout: return "timeout";
  }
  return "timeout";
}

std::string to_string(DemoSource s) {
  switch (s) {
    case DemoSource::AgentDemo: return "agent";
    case DemoSource::HumanDemo: return "human";
    case DemoSource::PolicyCorrected: return "pc";
  }
  return "agent";
}

Controller parse_controller(const std::string& s) {
  if (s == "agent") return Controller::Agent;
  if (s == "human") return Controller::Human;
  throw Error(ErrorCode::Parse, "unknown controller '" + s + "'");
}

Outcome parse_outcome(const std::string& s) {
  if (s == "win") return Outcome::Win;
  if (s == "loss") return Outcome::Loss;
  if (s == "timeout") return Outcome::Timeout;
  throw Error(ErrorCode::Parse, "unknown outcome '" + s + "'");
}

DemoSource parse_demo_source(const std::string& s) {
  if (s == "agent") return DemoSource::AgentDemo;
  if (s == "human") return DemoSource::HumanDemo;
  if (s == "pc" || s == "policy_corrected") return DemoSource::PolicyCorrected;
  throw Error(ErrorCode::Parse, "unknown demo source '" + s + "'");
}

Observation ObservationHistory::push(Vec2 self, const Detection& detection, Vec2 zone_center,
                                     Vec2 red_spawn_center) {
  if (detection) last_red_offset_ = *detection;
  const Vec2 red = last_red_offset_ ? *last_red_offset_ : red_spawn_center - self;
  const Vec2 zone = zone_center - self;
  const std::array<double, kFrameSize> frame{red.x, red.y, zone.x, zone.y};

  if (count_ == 0) {
    frames_.fill(frame);
  } else {
    std::rotate(frames_.begin(), frames_.begin() + 1, frames_.end());
    frames_.back() = frame;
  }
  count_ = std::min(count_ + 1, kStackDepth);

  Observation obs;
  for (std::size_t f = 0; f < kStackDepth; ++f)
    std::copy(frames_[f].begin(), frames_[f].end(), obs.features.begin() + f * kFrameSize);
  return obs;
}

void ObservationHistory::clear() {
  count_ = 0;
  last_red_offset_.reset();
}

Observation build_observation(const WorldState& state, int drone_id, ObservationHistory& history,
                              const WorldConfig& cfg) {
  const auto& b = state.blue(drone_id);
  const Detection det = static_cast<std::size_t>(drone_id) < state.detections.size()
                            ? state.detections[static_cast<std::size_t>(drone_id)]
                            : std::nullopt;
  return history.push(b.position, det, state.restricted_center, cfg.red_spawn_center());
}

double shaping_potential(const WorldState& state, int drone_id, const WorldConfig& cfg) {
  const auto& b = state.blue(drone_id);
  if (cfg.shaping_from_detection) {
    const auto& det = state.detections.at(static_cast<std::size_t>(drone_id));
    return det ? -cfg.shaping_gain * norm(*det) : 0.0;
  }
  return -cfg.shaping_gain * distance(b.position, state.red.position);
}

double terminal_reward(const StepEvents& events) {
  if (events.neutralized_this_tick) return 1.0;
  if (events.red_reached_zone) return -1.0;
  return 0.0;
}

double compute_reward(const WorldState& prev, const WorldState& next, const StepEvents& events,
                      int drone_id, const WorldConfig& cfg) {
  const double shaping =
      cfg.discount * shaping_potential(next, drone_id, cfg) - shaping_potential(prev, drone_id, cfg);
  return terminal_reward(events) + shaping;
}

StepRecord snapshot(const WorldState& state) {
  StepRecord rec;
  rec.t = state.tick;
  for (const auto& b : state.blues) {
    rec.blues.push_back({b.id, b.position.x, b.position.y, b.heading});
    rec.waypoints.push_back(b.waypoints.empty() ? std::nullopt : std::optional<Vec2>(b.waypoints.front()));
  }
  rec.red = {state.red.position.x, state.red.position.y, state.red.heading, state.red.neutralized};
  rec.detections = state.detections;
  return rec;
}

std::vector<std::vector<Transition>> transitions_from_steps(const std::vector<StepRecord>& steps,
                                                            Outcome outcome, const WorldConfig& cfg) {
  if (steps.empty()) return {};
  const std::size_t agents = steps.front().blues.size();
  std::vector<std::vector<Transition>> out(agents);
  for (std::size_t a = 0; a < agents; ++a) {
    ObservationHistory history;
    auto observe = [&](const StepRecord& s) {
      const auto& b = s.blues.at(a);
      const Detection det = a < s.detections.size() ? s.detections[a] : std::nullopt;
      return history.push({b.x, b.y}, det, cfg.restricted_center, cfg.red_spawn_center());
    };
    Observation obs = observe(steps.front());
    for (std::size_t t = 0; t + 1 < steps.size(); ++t) {
      const auto& s = steps[t];
      Transition tr;
      tr.observation = obs;
      tr.action = action_from_int(s.actions.at(a));
      tr.reward = s.rewards.at(a);
      tr.controller = s.controllers.at(a);
      tr.agent_id = static_cast<int>(a);
      obs = observe(steps[t + 1]);
      tr.next_observation = obs;
      const bool last = t + 2 == steps.size();
      tr.terminal = last && outcome != Outcome::Timeout;
      tr.truncated = last && outcome == Outcome::Timeout;
      out[a].push_back(tr);
    }
  }
  return out;
}

EpisodeRunner::EpisodeRunner(const ScenarioSpec& spec, const WorldConfig& cfg, const SpawnOverrides& overrides)
    : cfg_(cfg), overrides_(overrides), state_(spawn_scenario(spec, cfg, overrides)) {
  const auto n = state_.blues.size();
  histories_.resize(n);
  observations_.resize(n);
  transitions_.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    observations_[i] = build_observation(state_, static_cast<int>(i), histories_[i], cfg_);
}

const Observation& EpisodeRunner::observation(int drone_id) const {
  if (drone_id < 0 || drone_id >= agent_count())
    throw Error(ErrorCode::UnknownDrone, "unknown drone id " + std::to_string(drone_id));
  return observations_[static_cast<std::size_t>(drone_id)];
}

const EpisodeRunner::TickResult& EpisodeRunner::step(std::span<const ActionId> actions,
                                                     std::span<const Controller> controllers) {
  const auto n = state_.blues.size();
  if (actions.size() != n || controllers.size() != n)
    throw Error(ErrorCode::InvalidAction, "expected one action and controller per agent");

  StepRecord rec = snapshot(state_);
  const WorldState prev = state_;

  std::vector<double> turns(n);
  for (std::size_t i = 0; i < n; ++i) turns[i] = turn_input(actions[i]);
  last_.events = world_step(state_, turns, cfg_);
  last_.transitions.assign(n, Transition{});

  for (std::size_t i = 0; i < n; ++i) {
    const int id = static_cast<int>(i);
    auto& tr = last_.transitions[i];
    tr.observation = observations_[i];
    tr.action = actions[i];
    tr.reward = compute_reward(prev, state_, last_.events, id, cfg_);
    observations_[i] = build_observation(state_, id, histories_[i], cfg_);
    tr.next_observation = observations_[i];
    tr.terminal = last_.events.neutralized_this_tick || last_.events.red_reached_zone;
    tr.truncated = last_.events.time_expired;
    tr.agent_id = id;
    tr.controller = controllers[i];
    transitions_[i].push_back(tr);

    rec.actions.push_back(to_int(actions[i]));
    rec.rewards.push_back(tr.reward);
    rec.controllers.push_back(controllers[i]);
  }
  steps_.push_back(std::move(rec));
  if (state_.ended) {
    final_events_ = last_.events;
    steps_.push_back(snapshot(state_));
  }
  return last_;
}

Outcome EpisodeRunner::outcome() const {
  if (!state_.ended) return Outcome::Timeout;
  if (final_events_.neutralized_this_tick) return Outcome::Win;
  if (final_events_.red_reached_zone) return Outcome::Loss;
  return Outcome::Timeout;
}

EpisodeRecord EpisodeRunner::record() const {
  EpisodeRecord rec;
  rec.scenario = state_.scenario;
  rec.overrides = overrides_;
  rec.steps = steps_;
  if (!state_.ended) rec.steps.push_back(snapshot(state_));
  rec.transitions = transitions_;
  rec.outcome = outcome();
  rec.total_ticks = state_.tick;
  return rec;
}

EpisodeRecord env_episode(std::span<Policy* const> policies, const ScenarioSpec& spec,
                          const WorldConfig& cfg, const ControlHook& hook, const SpawnOverrides& overrides) {
  EpisodeRunner runner(spec, cfg, overrides);
  const int n = runner.agent_count();
  if (policies.empty() || (policies.size() != 1 && static_cast<int>(policies.size()) != n))
    throw Error(ErrorCode::InvalidConfig, "need one shared policy or one policy per agent");
  auto policy_for = [&](int id) { return policies.size() == 1 ? policies[0] : policies[static_cast<std::size_t>(id)]; };
  for (Policy* p : policies) p->reset(runner.state());

  std::vector<ActionId> actions(static_cast<std::size_t>(n));
  std::vector<Controller> controllers(static_cast<std::size_t>(n));
  while (!runner.done()) {
    for (int id = 0; id < n; ++id) {
      const auto i = static_cast<std::size_t>(id);
      std::optional<ActionId> human = hook ? hook(id, runner.state()) : std::nullopt;
      if (human) {
        actions[i] = *human;
        controllers[i] = Controller::Human;
      } else {
        actions[i] = policy_for(id)->act({id, runner.observation(id), runner.state()});
        controllers[i] = Controller::Agent;
      }
    }
    runner.step(actions, controllers);
  }
  return runner.record();
}

}  // namespace adf
