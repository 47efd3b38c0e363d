#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adf/env.hpp"
#include "adf/nn.hpp"

namespace adf {

// One replayable item: the 1-step transition plus its precomputed n-step window summary.
struct LearnSample {
  Observation observation;
  ActionId action = ActionId::NegativeTurn;
  double reward = 0.0;
  Observation next_observation;
  bool terminal = false;
  double n_step_reward = 0.0;      // sum_{i<k} gamma^i r_{t+i}
  Observation n_step_observation;  // s_{t+k}
  double n_step_discount = 0.0;    // gamma^k, or 0 when the window reached a terminal
  bool demo = false;
};

template <class T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error(ErrorCode::InvalidConfig, "buffer capacity must be > 0");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[cursor_] = std::move(item);
    }
    cursor_ = (cursor_ + 1) % capacity_;
    ++total_pushed_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  std::uint64_t total_pushed() const { return total_pushed_; }
  const T& operator[](std::size_t i) const { return items_[i]; }
  const T& sample(Rng& rng) const { return items_[rng.below(items_.size())]; }

  // Oldest to newest.
  std::vector<T> ordered() const {
    if (items_.size() < capacity_) return items_;
    std::vector<T> out(items_.begin() + static_cast<std::ptrdiff_t>(cursor_), items_.end());
    out.insert(out.end(), items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(cursor_));
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::uint64_t total_pushed_ = 0;
  std::vector<T> items_;
};

using ReplayBuffer = RingBuffer<LearnSample>;

// Permanent demonstration transitions. With source equalisation, sampling first picks a
// source uniformly, then an item within it.
class DemoBuffer {
 public:
  void add(LearnSample sample, DemoSource source);
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const LearnSample& operator[](std::size_t i) const { return items_[i]; }
  DemoSource source(std::size_t i) const { return sources_[i]; }
  std::size_t count(DemoSource s) const;
  void set_equalize_sources(bool on) { equalize_ = on; }
  bool equalize_sources() const { return equalize_; }
  std::size_t sample_index(Rng& rng) const;

  bool operator==(const DemoBuffer& o) const;

 private:
  std::vector<LearnSample> items_;
  std::vector<DemoSource> sources_;
  std::array<std::vector<std::size_t>, 3> by_source_;
  bool equalize_ = false;
};

struct LossWeights {
  double n_step = 1.0;      // lambda_1
  double supervised = 1.0;  // lambda_2
  double l2 = 0.0;          // lambda_3
  double margin = 0.8;      // M
  int n = 10;

  void validate() const;
};

struct TrainConfig {
  int episodes = 10000;
  std::size_t replay_capacity = 100000;
  int batch_size = 64;
  double learning_rate = 0.0004;
  double gamma = 0.99;
  int target_update_every = 10;  // gradient updates
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay = 0.999995;  // per environment tick
  double demo_fraction = 0.30;
  int eval_every = 100;
  int eval_episodes = 30;
  std::uint64_t seed = 0;
  float input_scale = 1000.0f;  // meters per network input unit
  LossWeights loss;

  void validate() const;

  // Scaled-down training schedule paired with WorldConfig::mini().
  static TrainConfig mini();
};

void apply_train_override(TrainConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Loss terms. Templated on the network scalar so oracles can run in double.

template <class T>
std::size_t greedy_index(const std::array<T, kActionCount>& q) {
  return q[1] > q[0] ? 1 : 0;
}

// y = r + gamma * Q_target(s', argmax_a Q_online(s', a)); y = r at a terminal.
template <class T>
double double_q_target(const Transition& tr, const nn::QNetwork<T>& online,
                       const nn::QNetwork<T>& target, double gamma) {
  if (tr.terminal) return tr.reward;
  const auto select = nn::q_values(online, tr.next_observation);
  const auto eval = nn::q_values(target, tr.next_observation);
  return tr.reward + gamma * static_cast<double>(eval[greedy_index(select)]);
}

// J_E = max_a [Q(s,a) + l(a_E,a)] - Q(s,a_E), with l = 0 at a_E and M elsewhere.
inline double margin_loss(const std::array<double, kActionCount>& q, ActionId demonstrated, double margin) {
  const auto e = static_cast<std::size_t>(to_int(demonstrated));
  double best = q[0] + (e == 0 ? 0.0 : margin);
  for (std::size_t a = 1; a < kActionCount; ++a) best = std::max(best, q[a] + (a == e ? 0.0 : margin));
  return best - q[e];
}

// Summary of an n-step window starting at window[0]; stops at the first episode end.
struct NStepSummary {
  double reward_sum = 0.0;
  Observation bootstrap_observation;
  double bootstrap_discount = 0.0;
};

NStepSummary summarize_window(std::span<const Transition> window, int n, double gamma);

template <class T>
double bootstrap_value(const Observation& obs, const nn::QNetwork<T>& online, const nn::QNetwork<T>& target) {
  const auto select = nn::q_values(online, obs);
  const auto eval = nn::q_values(target, obs);
  return static_cast<double>(eval[greedy_index(select)]);
}

// sum_{i<n} gamma^i r_{t+i} + gamma^n Q_target(s_{t+n}, argmax Q_online(s_{t+n})), truncated
// at the episode end with no bootstrap past a terminal.
template <class T>
double n_step_return(std::span<const Transition> window, int n, double gamma,
                     const nn::QNetwork<T>& target, const nn::QNetwork<T>& online) {
  const NStepSummary s = summarize_window(window, n, gamma);
  if (s.bootstrap_discount == 0.0) return s.reward_sum;
  return s.reward_sum + s.bootstrap_discount * bootstrap_value(s.bootstrap_observation, online, target);
}

// Builds replay items for one agent's episode (or a streaming prefix of it).
std::vector<LearnSample> make_samples(std::span<const Transition> episode, int n, double gamma, bool demo);

// Streams n-step samples for one agent: emits an item once n successors are known and
// flushes the tail when the episode ends.
class NStepCollector {
 public:
  NStepCollector(int n, double gamma) : n_(n), gamma_(gamma) {}
  std::vector<LearnSample> push(const Transition& tr);
  void clear() { window_.clear(); }

 private:
  int n_;
  double gamma_;
  std::vector<Transition> window_;
};

struct LossReport {
  double total = 0.0;
  double dq = 0.0;
  double n_step = 0.0;
  double supervised = 0.0;
  double l2 = 0.0;
};

// J = J_DQ + l1 J_n + l2 J_E + l3 J_L2. Squared TD terms are batch means; J_E sums the
// margin loss over demo items and divides by the batch size; J_L2 is the squared
// parameter norm. When `grad` is given it receives dJ/dtheta.
template <class T>
LossReport combined_loss(std::span<const LearnSample> batch, const nn::QNetwork<T>& online,
                         const nn::QNetwork<T>& target, const LossWeights& w, double gamma,
                         nn::QNetwork<T>* grad = nullptr) {
  using Mat = nn::Matrix<T>;
  if (batch.empty()) throw Error(ErrorCode::EmptyInput, "combined_loss: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto A = static_cast<Eigen::Index>(kActionCount);

  Mat s(static_cast<Eigen::Index>(kObservationSize), B), s1(s.rows(), B), sn(s.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& item = batch[static_cast<std::size_t>(b)];
    for (std::size_t f = 0; f < kObservationSize; ++f) {
      const auto r = static_cast<Eigen::Index>(f);
      s(r, b) = static_cast<T>(item.observation.features[f]);
      s1(r, b) = static_cast<T>(item.next_observation.features[f]);
      sn(r, b) = static_cast<T>(item.n_step_observation.features[f]);
    }
  }

  nn::ForwardCache<T> cache;
  nn::forward(online, s, cache);
  const Mat q1_online = nn::forward(online, s1);
  const Mat q1_target = nn::forward(target, s1);
  const Mat qn_online = nn::forward(online, sn);
  const Mat qn_target = nn::forward(target, sn);

  auto pick = [](const Mat& sel, const Mat& eval, Eigen::Index b) {
    return static_cast<double>(eval(sel(1, b) > sel(0, b) ? 1 : 0, b));
  };

  LossReport rep;
  Mat dq = Mat::Zero(A, B);
  const double inv_b = 1.0 / static_cast<double>(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& item = batch[static_cast<std::size_t>(b)];
    const auto a = static_cast<Eigen::Index>(to_int(item.action));
    const double q_sa = static_cast<double>(cache.q(a, b));

    const double y1 = item.terminal ? item.reward : item.reward + gamma * pick(q1_online, q1_target, b);
    const double e1 = y1 - q_sa;
    rep.dq += e1 * e1 * inv_b;
    double d = -2.0 * e1 * inv_b;

    const double yn = item.n_step_discount == 0.0
                          ? item.n_step_reward
                          : item.n_step_reward + item.n_step_discount * pick(qn_online, qn_target, b);
    const double en = yn - q_sa;
    rep.n_step += en * en * inv_b;
    d += w.n_step * (-2.0 * en * inv_b);
    dq(a, b) += static_cast<T>(d);

    if (item.demo) {
      const std::array<double, kActionCount> q{static_cast<double>(cache.q(0, b)),
                                               static_cast<double>(cache.q(1, b))};
      rep.supervised += margin_loss(q, item.action, w.margin) * inv_b;
      Eigen::Index best = 0;
      double best_val = q[0] + (a == 0 ? 0.0 : w.margin);
      for (Eigen::Index k = 1; k < A; ++k) {
        const double v = q[static_cast<std::size_t>(k)] + (k == a ? 0.0 : w.margin);
        if (v > best_val) {
          best_val = v;
          best = k;
        }
      }
      dq(best, b) += static_cast<T>(w.supervised * inv_b);
      dq(a, b) -= static_cast<T>(w.supervised * inv_b);
    }
  }
  if (w.l2 != 0.0) rep.l2 = nn::squared_norm(online);
  rep.total = rep.dq + w.n_step * rep.n_step + w.supervised * rep.supervised + w.l2 * rep.l2;

  if (grad) {
    *grad = nn::backward(online, cache, dq);
    if (w.l2 != 0.0) nn::axpy(*grad, static_cast<T>(2.0 * w.l2), online);
  }
  return rep;
}

// Number of demo items in a batch: round-half-up of batch_size * demo_fraction.
int demo_items_per_batch(int batch_size, double demo_fraction);

std::vector<LearnSample> sample_mixed(const DemoBuffer& demos, const ReplayBuffer& replay, int batch_size,
                                      double demo_fraction, Rng& rng);

double epsilon_schedule(std::int64_t env_steps, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Policies.

std::size_t argmax_action(const std::array<float, kActionCount>& q);

class GreedyPolicy : public Policy {
 public:
  explicit GreedyPolicy(nn::QFunctionParams params) : params_(std::move(params)) {}
  ActionId act(const AgentContext& ctx) override;

 private:
  nn::QFunctionParams params_;
};

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  ActionId act(const AgentContext&) override;

 private:
  Rng rng_;
};

// Lead pursuit: aims at the red drone's position extrapolated along the velocity
// estimated from its last two detections, turning toward whichever side reduces the
// heading error. Keeps per-drone tracks, so one instance can serve the whole team.
class HeuristicPolicy : public Policy {
 public:
  explicit HeuristicPolicy(const WorldConfig& cfg) : cfg_(cfg) {}
  void reset(const WorldState& world) override;
  ActionId act(const AgentContext& ctx) override;

 private:
  struct Track {
    int last_tick = -1;
    int seen_tick = -1;
    std::optional<Vec2> last;
    std::optional<Vec2> previous;
    int previous_tick = -1;
  };
  WorldConfig cfg_;
  std::vector<Track> tracks_;
};

ActionId heuristic_action(double heading, Vec2 self, std::optional<Vec2> aim, std::optional<Vec2> fallback,
                          Vec2 spawn_center);

// ---------------------------------------------------------------------------
// Training.

struct CurvePoint {
  int episode = 0;
  double success_rate = 0.0;
  int eval_episodes = 0;
  double epsilon = 0.0;
  double wall_seconds = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

std::string curve_to_csv(const LearningCurve& curve);
LearningCurve curve_from_csv(const std::string& text);

struct EvalResult {
  int wins = 0;
  int losses = 0;
  int timeouts = 0;
  double mean_ticks = 0.0;
  int episodes() const { return wins + losses + timeouts; }
  double success_rate() const { return episodes() == 0 ? 0.0 : static_cast<double>(wins) / episodes(); }
};

// Seeds used for evaluation episode `index` of a run seeded with `seed`.
ScenarioSpec eval_scenario(ScenarioKind kind, std::uint64_t seed, int index);
ScenarioSpec train_scenario(ScenarioKind kind, std::uint64_t seed, int episode);

EvalResult evaluate_policy(Policy& policy, const WorldConfig& world, ScenarioKind kind, int episodes,
                           std::uint64_t seed);

struct TrainResult {
  nn::Checkpoint checkpoint;
  LearningCurve curve;
};

using ProgressFn = std::function<void(const CurvePoint&)>;

// D3QN with optional DQfD demonstration mixing. Throws InvalidConfig when demo_fraction > 0
// and a supplied demo buffer is empty.
TrainResult train(const TrainConfig& cfg, const WorldConfig& world, ScenarioKind kind,
                  const DemoBuffer* demos = nullptr, const ProgressFn& progress = {});

}  // namespace adf
