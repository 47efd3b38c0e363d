#include "adf/learner.hpp"

#include <chrono>
#include <sstream>

#include "adf/keyvalue.hpp"

namespace adf {

void DemoBuffer::add(LearnSample sample, DemoSource source) {
  sample.demo = true;
  by_source_[static_cast<std::size_t>(source)].push_back(items_.size());
  items_.push_back(std::move(sample));
  sources_.push_back(source);
}

std::size_t DemoBuffer::count(DemoSource s) const { return by_source_[static_cast<std::size_t>(s)].size(); }

std::size_t DemoBuffer::sample_index(Rng& rng) const {
  if (items_.empty()) throw Error(ErrorCode::EmptyInput, "demo buffer is empty");
  if (!equalize_) return rng.below(items_.size());
  std::array<std::size_t, 3> present{};
  std::size_t n = 0;
  for (std::size_t s = 0; s < by_source_.size(); ++s)
    if (!by_source_[s].empty()) present[n++] = s;
  const auto& pool = by_source_[present[rng.below(n)]];
  return pool[rng.below(pool.size())];
}

bool DemoBuffer::operator==(const DemoBuffer& o) const {
  if (items_.size() != o.items_.size() || sources_ != o.sources_ || equalize_ != o.equalize_) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& a = items_[i];
    const auto& b = o.items_[i];
    if (!(a.observation == b.observation && a.action == b.action && a.reward == b.reward &&
          a.next_observation == b.next_observation && a.terminal == b.terminal &&
          a.n_step_reward == b.n_step_reward && a.n_step_observation == b.n_step_observation &&
          a.n_step_discount == b.n_step_discount && a.demo == b.demo))
      return false;
  }
  return true;
}

void LossWeights::validate() const {
  if (n_step < 0 || supervised < 0 || l2 < 0 || margin < 0)
    throw Error(ErrorCode::InvalidConfig, "loss weights and margin must be >= 0");
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "n-step horizon must be >= 1");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
  };
  require(episodes >= 0, "episodes must be >= 0");
  require(replay_capacity > 0, "replay_capacity must be > 0");
  require(batch_size > 0, "batch_size must be > 0");
  require(learning_rate > 0, "learning_rate must be > 0");
  require(gamma > 0 && gamma <= 1, "gamma must be in (0, 1]");
  require(target_update_every > 0, "target_update_every must be > 0");
  require(epsilon_end <= epsilon_start, "epsilon_end must not exceed epsilon_start");
  require(epsilon_end >= 0 && epsilon_start <= 1, "epsilon must lie in [0, 1]");
  require(epsilon_decay > 0 && epsilon_decay <= 1, "epsilon_decay must be in (0, 1]");
  require(demo_fraction >= 0 && demo_fraction <= 1, "demo_fraction must be in [0, 1]");
  require(eval_every > 0 && eval_episodes >= 0, "eval_every must be > 0");
  require(input_scale > 0, "input_scale must be > 0");
  loss.validate();
}

TrainConfig TrainConfig::mini() {
  TrainConfig cfg;
  cfg.episodes = 800;
  cfg.replay_capacity = 100000;
  cfg.learning_rate = 0.001;
  cfg.eval_every = 10;
  cfg.eval_episodes = 50;
  cfg.epsilon_decay = 0.9998;
  cfg.input_scale = 100.0f;
  return cfg;
}

void apply_train_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto d = [&] { return parse_double(key, value); };
  auto i = [&] { return parse_int(key, value); };
  if (key == "episodes") cfg.episodes = static_cast<int>(i());
  else if (key == "replay_capacity") cfg.replay_capacity = static_cast<std::size_t>(i());
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(i());
  else if (key == "learning_rate") cfg.learning_rate = d();
  else if (key == "gamma") cfg.gamma = d();
  else if (key == "target_update_every") cfg.target_update_every = static_cast<int>(i());
  else if (key == "epsilon_start") cfg.epsilon_start = d();
  else if (key == "epsilon_end") cfg.epsilon_end = d();
  else if (key == "epsilon_decay") cfg.epsilon_decay = d();
  else if (key == "demo_fraction") cfg.demo_fraction = d();
  else if (key == "eval_every") cfg.eval_every = static_cast<int>(i());
  else if (key == "eval_episodes") cfg.eval_episodes = static_cast<int>(i());
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(i());
  else if (key == "input_scale") cfg.input_scale = static_cast<float>(d());
  else if (key == "lambda_n_step") cfg.loss.n_step = d();
  else if (key == "lambda_supervised") cfg.loss.supervised = d();
  else if (key == "lambda_l2") cfg.loss.l2 = d();
  else if (key == "margin") cfg.loss.margin = d();
  else if (key == "n_step") cfg.loss.n = static_cast<int>(i());
  else throw Error(ErrorCode::InvalidConfig, "unknown training key '" + key + "'");
}

KeyValues train_config_entries(const TrainConfig& cfg) {
  auto f = format_double;
  return {{"episodes", std::to_string(cfg.episodes)},
          {"replay_capacity", std::to_string(cfg.replay_capacity)},
          {"batch_size", std::to_string(cfg.batch_size)},
          {"learning_rate", f(cfg.learning_rate)},
          {"gamma", f(cfg.gamma)},
          {"target_update_every", std::to_string(cfg.target_update_every)},
          {"epsilon_start", f(cfg.epsilon_start)},
          {"epsilon_end", f(cfg.epsilon_end)},
          {"epsilon_decay", f(cfg.epsilon_decay)},
          {"demo_fraction", f(cfg.demo_fraction)},
          {"eval_every", std::to_string(cfg.eval_every)},
          {"eval_episodes", std::to_string(cfg.eval_episodes)},
          {"seed", std::to_string(cfg.seed)},
          {"input_scale", f(cfg.input_scale)},
          {"lambda_n_step", f(cfg.loss.n_step)},
          {"lambda_supervised", f(cfg.loss.supervised)},
          {"lambda_l2", f(cfg.loss.l2)},
          {"margin", f(cfg.loss.margin)},
          {"n_step", std::to_string(cfg.loss.n)}};
}

NStepSummary summarize_window(std::span<const Transition> window, int n, double gamma) {
  if (window.empty() || n < 1) throw Error(ErrorCode::EmptyInput, "n-step window is empty");
  NStepSummary s;
  double discount = 1.0;
  const std::size_t len = std::min(window.size(), static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < len; ++k) {
    const auto& tr = window[k];
    s.reward_sum += discount * tr.reward;
    discount *= gamma;
    s.bootstrap_observation = tr.next_observation;
    if (tr.terminal) {
      s.bootstrap_discount = 0.0;
      return s;
    }
    if (tr.truncated) break;
  }
  s.bootstrap_discount = discount;
  return s;
}

namespace {

LearnSample sample_from(std::span<const Transition> window, int n, double gamma, bool demo) {
  const auto& tr = window.front();
  const NStepSummary s = summarize_window(window, n, gamma);
  LearnSample out;
  out.observation = tr.observation;
  out.action = tr.action;
  out.reward = tr.reward;
  out.next_observation = tr.next_observation;
  out.terminal = tr.terminal;
  out.n_step_reward = s.reward_sum;
  out.n_step_observation = s.bootstrap_observation;
  out.n_step_discount = s.bootstrap_discount;
  out.demo = demo;
  return out;
}

}  // namespace

std::vector<LearnSample> make_samples(std::span<const Transition> episode, int n, double gamma, bool demo) {
  std::vector<LearnSample> out;
  out.reserve(episode.size());
  for (std::size_t t = 0; t < episode.size(); ++t) out.push_back(sample_from(episode.subspan(t), n, gamma, demo));
  return out;
}

std::vector<LearnSample> NStepCollector::push(const Transition& tr) {
  window_.push_back(tr);
  std::vector<LearnSample> out;
  if (tr.episode_end()) {
    out = make_samples(window_, n_, gamma_, false);
    window_.clear();
  } else if (static_cast<int>(window_.size()) == n_) {
    out.push_back(sample_from(window_, n_, gamma_, false));
    window_.erase(window_.begin());
  }
  return out;
}

int demo_items_per_batch(int batch_size, double demo_fraction) {
  return static_cast<int>(std::floor(batch_size * demo_fraction + 0.5));
}

std::vector<LearnSample> sample_mixed(const DemoBuffer& demos, const ReplayBuffer& replay, int batch_size,
                                      double demo_fraction, Rng& rng) {
  const int n_demo = demos.empty() ? 0 : demo_items_per_batch(batch_size, demo_fraction);
  const int n_agent = batch_size - n_demo;
  if (n_agent > 0 && replay.empty()) throw Error(ErrorCode::EmptyInput, "replay buffer is empty");
  std::vector<LearnSample> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < n_demo; ++i) batch.push_back(demos[demos.sample_index(rng)]);
  for (int i = 0; i < n_agent; ++i) {
    batch.push_back(replay.sample(rng));
    batch.back().demo = false;
  }
  return batch;
}

double epsilon_schedule(std::int64_t env_steps, const TrainConfig& cfg) {
  const double e = cfg.epsilon_start * std::pow(cfg.epsilon_decay, static_cast<double>(env_steps));
  return std::max(cfg.epsilon_end, e);
}

std::size_t argmax_action(const std::array<float, kActionCount>& q) { return greedy_index(q); }

ActionId GreedyPolicy::act(const AgentContext& ctx) {
  return action_from_int(static_cast<int>(argmax_action(nn::q_values(params_, ctx.observation))));
}

ActionId RandomPolicy::act(const AgentContext&) {
  return rng_.bernoulli(0.5) ? ActionId::PositiveTurn : ActionId::NegativeTurn;
}

ActionId heuristic_action(double heading, Vec2 self, std::optional<Vec2> aim, std::optional<Vec2> fallback,
                          Vec2 spawn_center) {
  auto error_to = [&](Vec2 p) { return wrap_angle(bearing(self, p) - heading); };
  double err = 0.0;
  if (aim) err = error_to(*aim);
  if (err == 0.0) err = error_to(fallback ? *fallback : spawn_center);
  return err >= 0.0 ? ActionId::PositiveTurn : ActionId::NegativeTurn;
}

void HeuristicPolicy::reset(const WorldState& world) { tracks_.assign(world.blues.size(), Track{}); }

ActionId HeuristicPolicy::act(const AgentContext& ctx) {
  const auto id = static_cast<std::size_t>(ctx.drone_id);
  if (tracks_.size() < ctx.world.blues.size()) tracks_.resize(ctx.world.blues.size());
  auto& track = tracks_[id];
  const auto& self = ctx.world.blue(ctx.drone_id);
  const int tick = ctx.world.tick;

  if (id < ctx.world.detections.size() && ctx.world.detections[id] && track.seen_tick != tick) {
    const Vec2 abs = self.position + *ctx.world.detections[id];
    if (track.last) {
      track.previous = track.last;
      track.previous_tick = track.last_tick;
    }
    track.last = abs;
    track.last_tick = tick;
    track.seen_tick = tick;
  }

  std::optional<Vec2> aim;
  if (track.last && track.previous && track.last_tick > track.previous_tick) {
    const Vec2 v = (*track.last - *track.previous) * (1.0 / (track.last_tick - track.previous_tick));
    aim = *track.last + v * static_cast<double>(tick - track.last_tick + 1);
  } else if (track.last) {
    aim = track.last;
  }
  return heuristic_action(self.heading, self.position, aim, track.last, cfg_.red_spawn_center());
}

std::string curve_to_csv(const LearningCurve& curve) {
  std::ostringstream out;
  out << "episode,success_rate,eval_episode_count,epsilon,wall_seconds\n";
  for (const auto& p : curve)
    out << p.episode << ',' << format_double(p.success_rate) << ',' << p.eval_episodes << ','
        << format_double(p.epsilon) << ',' << format_double(p.wall_seconds) << '\n';
  return out.str();
}

LearningCurve curve_from_csv(const std::string& text) {
  LearningCurve curve;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("episode", 0) == 0) continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw Error(ErrorCode::Parse, "curve CSV row needs at least episode,success_rate");
    CurvePoint p;
    p.episode = static_cast<int>(parse_int("episode", cells[0]));
    p.success_rate = parse_double("success_rate", cells[1]);
    if (cells.size() > 2) p.eval_episodes = static_cast<int>(parse_int("eval_episode_count", cells[2]));
    if (cells.size() > 3) p.epsilon = parse_double("epsilon", cells[3]);
    if (cells.size() > 4) p.wall_seconds = parse_double("wall_seconds", cells[4]);
    curve.push_back(p);
  }
  return curve;
}

ScenarioSpec eval_scenario(ScenarioKind kind, std::uint64_t seed, int index) {
  return {kind, mix_seed(mix_seed(seed, 0xE7A1), static_cast<std::uint64_t>(index))};
}

ScenarioSpec train_scenario(ScenarioKind kind, std::uint64_t seed, int episode) {
  return {kind, mix_seed(mix_seed(seed, 0x7A1B), static_cast<std::uint64_t>(episode))};
}

EvalResult evaluate_policy(Policy& policy, const WorldConfig& world, ScenarioKind kind, int episodes,
                           std::uint64_t seed) {
  EvalResult r;
  double ticks = 0.0;
  Policy* p = &policy;
  for (int i = 0; i < episodes; ++i) {
    const auto rec = env_episode(std::span<Policy* const>(&p, 1), eval_scenario(kind, seed, i), world);
    switch (rec.outcome) {
      case Outcome::Win: ++r.wins; break;
      case Outcome::Loss: ++r.losses; break;
      case Outcome::Timeout: ++r.timeouts; break;
    }
    ticks += rec.total_ticks;
  }
  r.mean_ticks = episodes > 0 ? ticks / episodes : 0.0;
  return r;
}

TrainResult train(const TrainConfig& cfg, const WorldConfig& world, ScenarioKind kind, const DemoBuffer* demos,
                  const ProgressFn& progress) {
  cfg.validate();
  world.validate();
  const bool use_demos = demos != nullptr && cfg.demo_fraction > 0.0;
  if (use_demos && demos->empty())
    throw Error(ErrorCode::InvalidConfig, "demo_fraction > 0 but the demonstration set holds no winning episodes");
  static const DemoBuffer kNoDemos;
  const DemoBuffer& demo_set = use_demos ? *demos : kNoDemos;

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  auto& ck = result.checkpoint;
  ck = nn::fresh_checkpoint(cfg.seed, cfg.input_scale, cfg.learning_rate);
  ck.meta.scenario = to_string(kind);

  Rng rng(mix_seed(cfg.seed, 0x5EED));
  ReplayBuffer replay(cfg.replay_capacity);
  std::vector<NStepCollector> collectors;
  nn::QFunctionParams grad;

  std::vector<ActionId> actions;
  std::vector<Controller> controllers;
  std::vector<Observation> obs;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    EpisodeRunner runner(train_scenario(kind, cfg.seed, ep), world);
    const auto n = static_cast<std::size_t>(runner.agent_count());
    collectors.assign(n, NStepCollector(cfg.loss.n, cfg.gamma));
    actions.assign(n, ActionId::NegativeTurn);
    controllers.assign(n, Controller::Agent);
    obs.resize(n);

    while (!runner.done()) {
      for (std::size_t i = 0; i < n; ++i) obs[i] = runner.observation(static_cast<int>(i));
      const auto q = nn::forward(ck.online, nn::to_input<float>(obs));
      const double eps = epsilon_schedule(ck.meta.env_steps, cfg);
      for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        if (rng.uniform() < eps) {
          actions[i] = rng.bernoulli(0.5) ? ActionId::PositiveTurn : ActionId::NegativeTurn;
        } else {
          actions[i] = q(1, col) > q(0, col) ? ActionId::PositiveTurn : ActionId::NegativeTurn;
        }
      }
      const auto& tick = runner.step(actions, controllers);
      for (std::size_t i = 0; i < n; ++i)
        for (auto& s : collectors[i].push(tick.transitions[i])) replay.push(std::move(s));
      ++ck.meta.env_steps;

      if (replay.size() >= static_cast<std::size_t>(cfg.batch_size)) {
        const auto batch = sample_mixed(demo_set, replay, cfg.batch_size, cfg.demo_fraction, rng);
        combined_loss<float>(batch, ck.online, ck.target.params, cfg.loss, cfg.gamma, &grad);
        nn::adam_step(ck.online, ck.optimizer, grad);
        ++ck.meta.updates;
        if (ck.meta.updates % cfg.target_update_every == 0) ck.target = nn::sync_target(ck.online);
      }
    }
    ck.meta.episodes = ep + 1;
    ck.meta.epsilon = epsilon_schedule(ck.meta.env_steps, cfg);

    if ((ep + 1) % cfg.eval_every == 0) {
      GreedyPolicy greedy(ck.online);
      const auto r = evaluate_policy(greedy, world, kind, cfg.eval_episodes, cfg.seed);
      CurvePoint p;
      p.episode = ep + 1;
      p.success_rate = r.success_rate();
      p.eval_episodes = r.episodes();
      p.epsilon = ck.meta.epsilon;
      p.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.curve.push_back(p);
      if (progress) progress(p);
    }
  }
  return result;
}

}  // namespace adf
