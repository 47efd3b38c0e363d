// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "adf/analysis.hpp"
#include "adf/demos.hpp"
#include "adf/learner.hpp"
#include "oracles.hpp"

using namespace adf;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome_ {
  bool pass = false;
  std::string detail;
};

Observation random_obs(Rng& rng, double scale = 100.0) {
  Observation o;
  for (auto& f : o.features) f = rng.uniform(-scale, scale);
  return o;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Dueling identity on the production (float) network.
Outcome_ dueling_identity() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst_mean = 0, worst_shift = 0;
  for (int i = 0; i < 1000; ++i) {
    nn::QFunctionParams net = nn::QFunctionParams::initialized(rng, 100.0f);
    const Observation obs = random_obs(rng);
    nn::ForwardCache<float> c;
    nn::forward(net, nn::to_input<float>(std::span<const Observation>(&obs, 1)), c);
    const double v = c.value(0, 0);
    const double mean = ((c.q(0, 0) - v) + (c.q(1, 0) - v)) / 2.0;
    worst_mean = std::max(worst_mean, std::abs(mean));
    const auto before = nn::q_values(net, obs);
    net.advantage.bias.array() += static_cast<float>(rng.uniform(-1, 1));
    const auto after = nn::q_values(net, obs);
    worst_shift = std::max({worst_shift, std::abs(double(before[0]) - after[0]), std::abs(double(before[1]) - after[1])});
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst_mean <= 1e-6 && worst_shift <= 1e-6 && secs < 1.0,
          fmt("max |mean(Q-V)| %.2e, max shift change %.2e, %.2fs", worst_mean, worst_shift, secs)};
}

// 2. Backward pass against central differences (h = 1e-5). Probes whose +/-h evaluations
// land on different ReLU activation patterns straddle a kink where the derivative does
// not exist; they are skipped and counted.
Outcome_ gradient_oracle() {
  using Net = nn::QNetwork<double>;
  const auto t0 = Clock::now();
  Rng rng(202);
  const double h = 1e-5;
  double worst = 0;
  long probes = 0, skipped = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Net net = Net::initialized(rng, 100.0);
    std::vector<Observation> batch;
    for (int b = 0; b < 4; ++b) batch.push_back(random_obs(rng));
    const auto x = nn::to_input<double>(batch);
    nn::Matrix<double> dq(2, 4);
    for (Eigen::Index i = 0; i < dq.size(); ++i) dq(i) = rng.uniform(-1, 1);

    nn::ForwardCache<double> cache;
    nn::forward(net, x, cache);
    const Net grad = nn::backward(net, cache, dq);
    std::vector<std::span<const double>> gs;
    grad.for_each_tensor([&](int, std::span<const double> s) { gs.push_back(s); });

    auto eval = [&](const Net& n, nn::ForwardCache<double>& c) {
      nn::forward(n, x, c);
      return (c.q.array() * dq.array()).sum();
    };
    Net probe = net;
    std::vector<std::pair<int, std::size_t>> picks;
    probe.for_each_tensor([&](int t, std::span<double> s) {
      for (int k = 0; k < 8; ++k) picks.emplace_back(t, rng.below(s.size()));
    });
    for (const auto& [t, k] : picks) {
      probe.for_each_tensor([&](int tt, std::span<double> s) {
        if (tt != t) return;
        const double orig = s[k];
        nn::ForwardCache<double> up_c, down_c;
        s[k] = orig + h;
        const double up = eval(probe, up_c);
        s[k] = orig - h;
        const double down = eval(probe, down_c);
        s[k] = orig;
        ++probes;
        const bool same_pattern = ((up_c.pre1.array() > 0) == (down_c.pre1.array() > 0)).all() &&
                                  ((up_c.pre2.array() > 0) == (down_c.pre2.array() > 0)).all();
        if (!same_pattern) {
          ++skipped;
          return;
        }
        const double fd = (up - down) / (2 * h);
        const double an = gs[static_cast<std::size_t>(t)][k];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
      });
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst < 1e-4 && secs < 10.0 && skipped * 100 < probes,
          fmt("max rel err %.2e over %ld probes (%ld kink probes skipped), %.2fs", worst, probes, skipped, secs)};
}

// 3. Loss terms against independent scalar recomputation.
Outcome_ loss_oracles() {
  using Net = nn::QNetwork<double>;
  Rng rng(303);
  double w_dq = 0, w_margin = 0, w_n = 0, w_total = 0;
  bool one_step_exact = true;
  for (int i = 0; i < 1000; ++i) {
    const Net online = Net::initialized(rng, 100.0, 32), target = Net::initialized(rng, 100.0, 32);
    const double gamma = rng.uniform(0.8, 1.0);
    const int len = 1 + static_cast<int>(rng.below(14));
    std::vector<Transition> ep(static_cast<std::size_t>(len));
    Observation cur = random_obs(rng);
    for (auto& tr : ep) {
      tr.observation = cur;
      tr.action = action_from_int(static_cast<int>(rng.below(2)));
      tr.reward = rng.uniform(-1, 1);
      cur = random_obs(rng);
      tr.next_observation = cur;
    }
    const double end = rng.uniform();
    if (end < 0.4) ep.back().terminal = true;
    else if (end < 0.8) ep.back().truncated = true;

    const auto& tr0 = ep.front();
    w_dq = std::max(w_dq, std::abs(double_q_target(tr0, online, target, gamma) -
                                   oracle::double_q_target(tr0.reward, tr0.terminal, tr0.next_observation, online,
                                                           target, gamma)));
    const std::array<double, 2> q{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const int expert = static_cast<int>(rng.below(2));
    w_margin = std::max(w_margin, std::abs(margin_loss(q, action_from_int(expert), 0.8) -
                                           oracle::margin_loss(q, expert, 0.8)));
    const int n = 1 + static_cast<int>(rng.below(12));
    w_n = std::max(w_n, std::abs(n_step_return(std::span<const Transition>(ep), n, gamma, target, online) -
                                 oracle::n_step_return(ep, n, gamma, online, target)));
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const auto win = std::span<const Transition>(ep).subspan(t);
      one_step_exact = one_step_exact &&
                       n_step_return(win, 1, gamma, target, online) == double_q_target(ep[t], online, target, gamma);
    }

    auto batch = make_samples(ep, 10, gamma, false);
    for (auto& s : batch) s.demo = rng.bernoulli(0.3);
    LossWeights w;
    w.n_step = rng.uniform(0, 2);
    w.supervised = rng.uniform(0, 2);
    w.l2 = rng.uniform(0, 1e-4);
    w_total = std::max(w_total, std::abs(combined_loss<double>(batch, online, target, w, gamma).total -
                                         oracle::combined_loss(batch, online, target, w, gamma)));
  }
  const bool ok = w_dq <= 1e-9 && w_margin <= 1e-9 && w_n <= 1e-9 && w_total <= 1e-9 && one_step_exact;
  return {ok, fmt("max err: double-Q %.1e, margin %.1e, n-step %.1e, combined %.1e; n=1 identical: %s", w_dq,
                  w_margin, w_n, w_total, one_step_exact ? "yes" : "no")};
}

// 4. Sensing statistics.
Outcome_ sensing_statistics() {
  const WorldConfig cfg;
  Rng rng(404);
  RedDrone red;
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = cfg.radar_range * std::sqrt(rng.uniform());
    const double a = rng.uniform(-3.14159, 3.14159);
    red.position = {r * std::cos(a), r * std::sin(a)};
    if (distance({0, 0}, red.position) > cfg.radar_range) continue;
    hits += sense_red({0, 0}, red, cfg, rng).has_value() ? 1 : 0;
  }
  int false_hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = cfg.radar_range * (1.0 + 1e-9 + rng.uniform());
    const double a = rng.uniform(-3.14159, 3.14159);
    red.position = {r * std::cos(a), r * std::sin(a)};
    false_hits += sense_red({0, 0}, red, cfg, rng).has_value() ? 1 : 0;
  }
  const double frac = hits / 10000.0;
  return {frac >= 0.94 && frac <= 0.96 && false_hits == 0,
          fmt("in-range detection fraction %.4f, out-of-range detections %d", frac, false_hits)};
}

// 5. Neutralization boundary sweep.
Outcome_ neutralization_boundary() {
  const WorldConfig cfg;
  Rng rng(505);
  std::vector<BlueDrone> blues(1);
  int checked = 0, wrong = 0;
  auto check = [&](Vec2 red) {
    const double d = std::hypot(red.x - blues[0].position.x, red.y - blues[0].position.y);
    ++checked;
    if (check_neutralization(blues, red, cfg) != (d <= cfg.neutralize_range)) ++wrong;
  };
  const double r = cfg.neutralize_range;
  for (double d : {r, std::nextafter(r, 0.0), std::nextafter(r, 1e9), r - 1e-12, r + 1e-12, 0.0}) {
    blues[0].position = {0, 0};
    check({d, 0});
    check({0, -d});
  }
  for (int i = 0; i < 20000; ++i) {
    blues[0].position = {rng.uniform(-500, 500), rng.uniform(-500, 500)};
    const double d = r + rng.uniform(-0.1, 0.1) * std::pow(10.0, -static_cast<double>(rng.below(8)));
    const double a = rng.uniform(-3.14159, 3.14159);
    check(blues[0].position + Vec2{d * std::cos(a), d * std::sin(a)});
  }
  blues[0].position = {0, 0};
  const bool exact_edge = check_neutralization(blues, {r, 0}, cfg) &&
                          !check_neutralization(blues, {std::nextafter(r, 1e9), 0}, cfg);
  return {wrong == 0 && exact_edge, fmt("%d placements, %d disagreements, 10 m triggers and 10 m + 1 ulp does not: %s",
                                        checked, wrong, exact_edge ? "yes" : "no")};
}

// 6. Shaping telescopes over whole episodes.
Outcome_ shaping_telescoping() {
  double worst_exact = 0, worst_disc = 0;
  for (double gamma : {1.0, 0.99}) {
    WorldConfig cfg = WorldConfig::mini();
    cfg.discount = gamma;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      RandomPolicy policy(seed + 17);
      Policy* p = &policy;
      const auto rec = env_episode(std::span<Policy* const>(&p, 1),
                                   {seed % 2 ? ScenarioKind::Complex : ScenarioKind::Simple, seed}, cfg);
      const double term = rec.outcome == Outcome::Win ? 1.0 : rec.outcome == Outcome::Loss ? -1.0 : 0.0;
      const auto T = rec.transitions[0].size();
      for (std::size_t d = 0; d < rec.transitions.size(); ++d) {
        auto phi = [&](const StepRecord& s) {
          return -cfg.shaping_gain * std::hypot(s.blues[d].x - s.red.x, s.blues[d].y - s.red.y);
        };
        double sum = 0, disc = 1;
        for (std::size_t t = 0; t < T; ++t) {
          sum += disc * (rec.transitions[d][t].reward - (t + 1 == T ? term : 0.0));
          disc *= gamma;
        }
        const double err = std::abs(sum - (std::pow(gamma, double(T)) * phi(rec.steps.back()) - phi(rec.steps.front())));
        (gamma == 1.0 ? worst_exact : worst_disc) = std::max(gamma == 1.0 ? worst_exact : worst_disc, err);
      }
    }
  }
  return {worst_exact <= 1e-9 && worst_disc <= 1e-9,
          fmt("100 episodes x 5 drones; max err gamma=1 %.1e, gamma=0.99 %.1e", worst_exact, worst_disc)};
}

// 7. Exact Mann-Whitney against full enumeration.
Outcome_ exact_mann_whitney() {
  Rng rng(707);
  double worst = 0;
  bool exact_used = true;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(1 + rng.below(6)), b(1 + rng.below(6));
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.uniform();
    const auto e = oracle::enumerate_mwu(a, b);
    const auto r = mann_whitney_u(a, b);
    exact_used = exact_used && r.method == MwuMethod::Exact;
    worst = std::max({worst, std::abs(r.u - e.u), std::abs(r.p_two_sided - e.p_two_sided),
                      std::abs(mann_whitney_u(a, b, Alternative::Less).p_value - e.p_less),
                      std::abs(mann_whitney_u(a, b, Alternative::Greater).p_value - e.p_greater)});
  }
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const auto r = mann_whitney_u(a, b);
  const bool known = r.u == 0.0 && std::abs(r.p_two_sided - 0.1) < 1e-12 && r.effect == 1.0;
  return {worst <= 1e-12 && exact_used && known,
          fmt("500 draws max deviation %.1e; (1,2,3) vs (4,5,6): U=%g p=%.4f effect=%g", worst, r.u, r.p_two_sided,
              r.effect)};
}

struct RunSummary {
  int first_60 = 0;
  double final = 0;
};

RunSummary summarize(const LearningCurve& curve, int episodes, int spacing) {
  return {episodes_to_reach(curve, 0.6, episodes + spacing), final_success(curve, 10)};
}

// 8. Scaled-down learning.
Outcome_ mini_learning() {
  const auto t0 = Clock::now();
  const WorldConfig world = WorldConfig::mini();
  TrainConfig cfg = TrainConfig::mini();
  std::string detail;
  bool ok = true;
  double sum = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    const auto res = train(cfg, world, ScenarioKind::Simple);
    const double final = final_success(res.curve, 10);
    RandomPolicy random(mix_seed(seed, 0xBA5E));
    const int n = cfg.eval_episodes * 10;
    const double baseline = evaluate_policy(random, world, ScenarioKind::Simple, n, mix_seed(seed, 0xE7A1)).success_rate();
    ok = ok && final >= 0.70 && final - baseline >= 0.30;
    sum += final;
    detail += fmt("seed %d final %.3f vs random %.3f; ", int(seed), final, baseline);
  }
  const double mins = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  ok = ok && mins < 15.0;
  return {ok, detail + fmt("mean final %.3f, %.1f min", sum / 3.0, mins)};
}

// 9. Demonstrations speed up learning without changing where it ends.
Outcome_ demo_speedup() {
  const auto t0 = Clock::now();
  const WorldConfig world = WorldConfig::mini();
  TrainConfig cfg = TrainConfig::mini();
  cfg.demo_fraction = 0.30;

  HeuristicPolicy oracle_policy(world);
  const DemoStore store = collect_agent_demos(oracle_policy, world, ScenarioKind::Simple, 500, true, 999);
  LoadOptions load;
  load.n_step = cfg.loss.n;
  load.gamma = cfg.gamma;
  const DemoBuffer demos = load_transitions(store, load, world);

  std::vector<double> reach_plain, reach_demo;
  double final_plain = 0, final_demo = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    cfg.seed = seed;
    const auto plain = summarize(train(cfg, world, ScenarioKind::Simple).curve, cfg.episodes, cfg.eval_every);
    const auto with = summarize(train(cfg, world, ScenarioKind::Simple, &demos).curve, cfg.episodes, cfg.eval_every);
    reach_plain.push_back(plain.first_60);
    reach_demo.push_back(with.first_60);
    final_plain += plain.final / 5.0;
    final_demo += with.final / 5.0;
  }
  const auto mwu = mann_whitney_u(reach_demo, reach_plain, Alternative::TwoSided);
  double mean_plain = 0, mean_demo = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    mean_plain += reach_plain[i] / 5.0;
    mean_demo += reach_demo[i] / 5.0;
  }
  const bool ok = mean_demo < mean_plain && mwu.u < 12.5 && mwu.p_two_sided < 0.05 &&
                  std::abs(final_demo - final_plain) <= 0.05;
  std::string lists;
  for (std::size_t i = 0; i < 5; ++i) lists += fmt("%s%g/%g", i ? " " : "", reach_demo[i], reach_plain[i]);
  const double mins = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  return {ok, fmt("episodes to 60%% demo/plain [%s], U=%g p=%.4f (%s); final %.3f vs %.3f; %zu demo transitions; %.1f min",
                  lists.c_str(), mwu.u, mwu.p_two_sided, to_string(mwu.method).c_str(), final_demo, final_plain,
                  demos.size(), mins)};
}

// 10. Diversity metrics.
Outcome_ diversity_metrics() {
  bool ok = true;
  const auto single = state_entropy(std::vector<Trajectory>{{{1, 1}, {2, 3}, {9.5, 0.5}}}, 10.0);
  ok = ok && single.entropy == 0.0 && single.unique_cells == 1;
  double worst_log = 0;
  for (int k = 1; k <= 64; ++k) {
    Trajectory t;
    for (int i = 0; i < k; ++i)
      for (int rep = 0; rep < 4; ++rep) t.push_back({(i % 8) * 10.0 + 2.5 + rep, (i / 8) * 10.0 + 7.0});
    const auto r = state_entropy(std::vector<Trajectory>{t}, 10.0);
    worst_log = std::max(worst_log, std::abs(r.entropy - std::log(double(k))));
    ok = ok && r.unique_cells == static_cast<std::size_t>(k);
  }
  ok = ok && worst_log <= 1e-9;

  Rng rng(1010);
  const WorldConfig cfg = WorldConfig::mini();
  bool monotone = true, conserved = true;
  for (int i = 0; i < 200; ++i) {
    std::vector<Trajectory> a(1 + rng.below(3)), b(1 + rng.below(3));
    std::size_t points = 0;
    for (auto* set : {&a, &b})
      for (auto& t : *set)
        for (std::uint64_t k = 0, n = 1 + rng.below(50); k < n; ++k, ++points)
          t.push_back({rng.uniform(-350, 350), rng.uniform(-350, 350)});
    std::vector<Trajectory> both(a);
    both.insert(both.end(), b.begin(), b.end());
    const auto ua = state_entropy(a).unique_cells, ub = state_entropy(b).unique_cells, uab = state_entropy(both).unique_cells;
    monotone = monotone && uab >= ua && uab >= ub;
    const double cell = 5.0 + rng.uniform() * 50.0;
    conserved = conserved && heatmap(both, cell, cfg).total() == points &&
                heatmap(a, cell, cfg).total() + heatmap(b, cell, cfg).total() == points;
  }
  ok = ok && monotone && conserved;
  return {ok, fmt("single cell entropy %g; max |H - ln k| %.1e for k<=64; union monotone: %s; heatmap conserves: %s",
                  single.entropy, worst_log, monotone ? "yes" : "no", conserved ? "yes" : "no")};
}

// 11. Replay determinism and lossless JSONL.
Outcome_ replay_determinism() {
  const WorldConfig cfg = WorldConfig::mini();
  DemoStore store;
  HeuristicPolicy h(cfg);
  RandomPolicy r(11);
  Rng rng(1111);
  for (int i = 0; i < 60; ++i) {
    Policy* p = i % 2 ? static_cast<Policy*>(&h) : static_cast<Policy*>(&r);
    SpawnOverrides ov;
    if (i % 3 == 0) {
      ov.blue_starts.push_back({{rng.uniform(-50, 50), rng.uniform(-50, 50)}, rng.uniform(-3, 3)});
      ov.red_route.push_back({rng.uniform(-200, 200), rng.uniform(-200, 200)});
    }
    const ControlHook hook = [&](int id, const WorldState& s) -> std::optional<ActionId> {
      if (i % 4 == 1 && id == 0 && s.tick % 3 == 0) return ActionId::PositiveTurn;
      return std::nullopt;
    };
    const auto rec = env_episode(std::span<Policy* const>(&p, 1),
                                 {i % 2 ? ScenarioKind::Complex : ScenarioKind::Simple, rng.next()}, cfg, hook, ov);
    store.episodes.push_back(make_demonstration(rec, i % 4 == 1 ? DemoSource::HumanDemo : DemoSource::AgentDemo, cfg));
  }
  const auto path = (std::filesystem::temp_directory_path() / "adf_acceptance_replay.jsonl").string();
  write_demo_store(store, path);
  const DemoStore back = read_demo_store(path);
  std::filesystem::remove(path);
  bool lossless = back.episodes.size() == store.episodes.size();
  double worst = 0;
  for (std::size_t i = 0; lossless && i < back.episodes.size(); ++i) {
    lossless = lossless && back.episodes[i] == store.episodes[i] &&
               demo_to_json(back.episodes[i]) == demo_to_json(store.episodes[i]);
    worst = std::max(worst, replay_divergence(back.episodes[i]));
  }
  return {lossless && worst == 0.0,
          fmt("%zu episodes; round-trip lossless: %s; max replay divergence %g m", store.episodes.size(),
              lossless ? "yes" : "no", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome_()>>> criteria{
      {"dueling identity", dueling_identity},
      {"gradient oracle", gradient_oracle},
      {"loss oracles", loss_oracles},
      {"sensing statistics", sensing_statistics},
      {"neutralization boundary", neutralization_boundary},
      {"shaping telescoping", shaping_telescoping},
      {"exact Mann-Whitney", exact_mann_whitney},
      {"mini-scale learning", mini_learning},
      {"demonstration speedup", demo_speedup},
      {"diversity metrics", diversity_metrics},
      {"replay determinism", replay_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome_ r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failures += r.pass ? 0 : 1;
    std::printf("[%s] %2zu %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
