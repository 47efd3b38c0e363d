#include "adf/adf.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "adf/analysis.hpp"
#include "adf/demos.hpp"
#include "adf/keyvalue.hpp"
#include "adf/learner.hpp"
#include "adf/server.hpp"

struct adf_config {
  adf::WorldConfig world;
  adf::TrainConfig train;
};

struct adf_checkpoint {
  adf::nn::Checkpoint ck;
};

struct adf_demos {
  adf::DemoStore store;
};

struct adf_server {
  std::unique_ptr<adf::TrialServer> server;
};

namespace {

thread_local std::string last_error;

struct NullArgument {};

template <class... P>
void require(const P*... ptrs) {
  if (((ptrs == nullptr) || ...)) throw NullArgument{};
}

template <class F>
adf_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return ADF_OK;
  } catch (const adf::Error& e) {
    last_error = e.what();
    return static_cast<adf_status>(e.code());
  } catch (const NullArgument&) {
    last_error = "required argument is NULL";
    return ADF_ERR_NULL_ARGUMENT;
  } catch (const std::exception& e) {
    last_error = e.what();
    return ADF_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return ADF_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

bool is_train_key(const std::string& key) {
  for (const auto& [k, v] : adf::train_config_entries(adf::TrainConfig{}))
    if (k == key) return true;
  return false;
}

std::optional<adf::DemoSource> source_filter(const char* source) {
  if (!source) return std::nullopt;
  return adf::parse_demo_source(source);
}

std::unique_ptr<adf::Policy> make_policy(const adf_config& cfg, const adf_checkpoint* ck, const char* policy,
                                         std::uint64_t seed) {
  const std::string name = policy ? policy : "greedy";
  if (name == "greedy") {
    if (!ck) throw adf::Error(adf::ErrorCode::InvalidConfig, "greedy policy needs a checkpoint");
    return std::make_unique<adf::GreedyPolicy>(ck->ck.online);
  }
  if (name == "heuristic") return std::make_unique<adf::HeuristicPolicy>(cfg.world);
  if (name == "random") return std::make_unique<adf::RandomPolicy>(adf::mix_seed(seed, 0x4A4D));
  throw adf::Error(adf::ErrorCode::InvalidConfig, "unknown policy '" + name + "'");
}

const adf::Demonstration& episode_at(const adf_demos* demos, size_t index) {
  if (index >= demos->store.episodes.size())
    throw adf::Error(adf::ErrorCode::OutOfRange, "episode index " + std::to_string(index) + " out of range");
  return demos->store.episodes[index];
}

}  // namespace

extern "C" {

const char* adf_version(void) { return "1.0.0"; }

const char* adf_last_error(void) { return last_error.c_str(); }

const char* adf_status_name(adf_status status) {
  if (status == ADF_ERR_NULL_ARGUMENT) return "null_argument";
  return adf::error_code_name(static_cast<adf::ErrorCode>(status));
}

void adf_string_free(char* s) { std::free(s); }

adf_status adf_config_new(int mini, adf_config** out) {
  return guard([&] {
    require(out);
    auto cfg = std::make_unique<adf_config>();
    if (mini) {
      cfg->world = adf::WorldConfig::mini();
      cfg->train = adf::TrainConfig::mini();
    }
    *out = cfg.release();
  });
}

void adf_config_free(adf_config* cfg) { delete cfg; }

adf_status adf_config_set(adf_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, key, value);
    const std::string k = key;
    if (k == "gamma" || k == "discount") {
      adf::apply_train_override(cfg->train, "gamma", value);
      adf::apply_world_override(cfg->world, "discount", value);
    } else if (is_train_key(k)) {
      adf::apply_train_override(cfg->train, k, value);
    } else {
      adf::apply_world_override(cfg->world, k, value);
    }
  });
}

adf_status adf_config_load_file(adf_config* cfg, const char* path) {
  return guard([&] {
    require(cfg, path);
    std::ifstream in(path);
    if (!in) throw adf::Error(adf::ErrorCode::Io, std::string("cannot read ") + path);
    std::stringstream ss;
    ss << in.rdbuf();
    adf_config next = *cfg;
    for (const auto& [k, v] : adf::parse_key_values(ss.str())) {
      const adf_status st = adf_config_set(&next, k.c_str(), v.c_str());
      if (st != ADF_OK) throw adf::Error(static_cast<adf::ErrorCode>(st), std::string(path) + ": " + last_error);
    }
    *cfg = next;
  });
}

adf_status adf_config_dump(const adf_config* cfg, char** out_text) {
  return guard([&] {
    require(cfg, out_text);
    cfg->world.validate();
    cfg->train.validate();
    adf::KeyValues all = adf::world_config_entries(cfg->world);
    for (const auto& kv : adf::train_config_entries(cfg->train)) all.push_back(kv);
    *out_text = dup_string(adf::format_key_values(all));
  });
}

adf_status adf_checkpoint_fresh(const adf_config* cfg, uint64_t seed, adf_checkpoint** out) {
  return guard([&] {
    require(cfg, out);
    auto ck = std::make_unique<adf_checkpoint>();
    ck->ck = adf::nn::fresh_checkpoint(seed, cfg->train.input_scale, cfg->train.learning_rate);
    *out = ck.release();
  });
}

adf_status adf_checkpoint_load(const char* path, adf_checkpoint** out) {
  return guard([&] {
    require(path, out);
    auto ck = std::make_unique<adf_checkpoint>();
    ck->ck = adf::nn::load_checkpoint(path);
    *out = ck.release();
  });
}

adf_status adf_checkpoint_save(const adf_checkpoint* ck, const char* path) {
  return guard([&] {
    require(ck, path);
    adf::nn::save_checkpoint(ck->ck, path);
  });
}

void adf_checkpoint_free(adf_checkpoint* ck) { delete ck; }

adf_status adf_train(const adf_config* cfg, const char* scenario, const adf_demos* demos, const char* demo_source,
                     adf_progress_fn progress, void* user, adf_checkpoint** out_checkpoint, char** out_curve_csv) {
  return guard([&] {
    require(cfg, scenario, out_checkpoint, out_curve_csv);
    const auto kind = adf::parse_scenario_kind(scenario);
    adf::DemoBuffer buffer;
    if (demos) {
      adf::LoadOptions opt;
      const std::string src = demo_source ? demo_source : "mixed";
      if (src == "mixed") {
        opt.equalize_sources = true;
      } else {
        opt.source = adf::parse_demo_source(src);
      }
      opt.n_step = cfg->train.loss.n;
      opt.gamma = cfg->train.gamma;
      buffer = adf::load_transitions(demos->store, opt, cfg->world);
      if (buffer.empty()) throw adf::Error(adf::ErrorCode::EmptyInput, "no winning demonstrations match the filter");
    }
    adf::ProgressFn fn;
    if (progress)
      fn = [&](const adf::CurvePoint& p) { progress(p.episode, p.success_rate, p.epsilon, p.wall_seconds, user); };
    auto result = adf::train(cfg->train, cfg->world, kind, demos ? &buffer : nullptr, fn);
    auto ck = std::make_unique<adf_checkpoint>();
    ck->ck = std::move(result.checkpoint);
    char* curve = dup_string(adf::curve_to_csv(result.curve));
    *out_checkpoint = ck.release();
    *out_curve_csv = curve;
  });
}

adf_status adf_evaluate(const adf_config* cfg, const adf_checkpoint* ck, const char* policy, const char* scenario,
                        int episodes, uint64_t seed, adf_eval_result* out) {
  return guard([&] {
    require(cfg, scenario, out);
    if (episodes <= 0) throw adf::Error(adf::ErrorCode::InvalidConfig, "episode count must be > 0");
    auto p = make_policy(*cfg, ck, policy, seed);
    const auto r = adf::evaluate_policy(*p, cfg->world, adf::parse_scenario_kind(scenario), episodes, seed);
    *out = {r.wins, r.losses, r.timeouts, r.mean_ticks, r.success_rate()};
  });
}

adf_status adf_demos_new(adf_demos** out) {
  return guard([&] {
    require(out);
    *out = new adf_demos{};
  });
}

adf_status adf_demos_read(const char* path, adf_demos** out) {
  return guard([&] {
    require(path, out);
    auto d = std::make_unique<adf_demos>();
    d->store = adf::read_demo_store(path);
    *out = d.release();
  });
}

adf_status adf_demos_write(const adf_demos* demos, const char* path) {
  return guard([&] {
    require(demos, path);
    adf::write_demo_store(demos->store, path);
  });
}

adf_status adf_demos_append(adf_demos* into, const adf_demos* from) {
  return guard([&] {
    require(into, from);
    into->store.episodes.insert(into->store.episodes.end(), from->store.episodes.begin(), from->store.episodes.end());
  });
}

void adf_demos_free(adf_demos* demos) { delete demos; }

adf_status adf_demos_count(const adf_demos* demos, const char* source, int wins_only, size_t* out) {
  return guard([&] {
    require(demos, out);
    *out = demos->store.count(source_filter(source), wins_only != 0);
  });
}

adf_status adf_demos_collect(const adf_config* cfg, const adf_checkpoint* ck, const char* policy,
                             const char* scenario, int count, int only_wins, uint64_t seed, const char* source,
                             adf_demos** out) {
  return guard([&] {
    require(cfg, scenario, out);
    auto p = make_policy(*cfg, ck, policy, seed);
    const auto src = source ? adf::parse_demo_source(source) : adf::DemoSource::AgentDemo;
    auto d = std::make_unique<adf_demos>();
    d->store = adf::collect_agent_demos(*p, cfg->world, adf::parse_scenario_kind(scenario), count, only_wins != 0,
                                        seed, src);
    *out = d.release();
  });
}

adf_status adf_demo_replay(const adf_demos* demos, size_t index, double* out_max_divergence,
                           double* out_reward_divergence) {
  return guard([&] {
    require(demos, out_max_divergence);
    const auto& d = episode_at(demos, index);
    *out_max_divergence = adf::replay_divergence(d);
    if (out_reward_divergence) *out_reward_divergence = adf::reward_divergence(d);
  });
}

adf_status adf_demo_trajectory_csv(const adf_demos* demos, size_t index, char** out_csv) {
  return guard([&] {
    require(demos, out_csv);
    const auto& d = episode_at(demos, index);
    std::ostringstream out;
    out << "episode,tick,drone,x,y,heading,controller\n";
    for (const auto& s : d.steps) {
      for (std::size_t i = 0; i < s.blues.size(); ++i) {
        const auto& b = s.blues[i];
        const std::string ctl = i < s.controllers.size() ? adf::to_string(s.controllers[i]) : "";
        out << index << ',' << s.t << ',' << b.id << ',' << adf::format_double(b.x) << ','
            << adf::format_double(b.y) << ',' << adf::format_double(b.heading) << ',' << ctl << '\n';
      }
      out << index << ',' << s.t << ",red," << adf::format_double(s.red.x) << ',' << adf::format_double(s.red.y)
          << ',' << adf::format_double(s.red.heading) << ",\n";
    }
    *out_csv = dup_string(out.str());
  });
}

adf_status adf_mwu(const double* a, size_t na, const double* b, size_t nb, int alternative, adf_mwu_result* out) {
  return guard([&] {
    require(out);
    if ((na && !a) || (nb && !b)) throw NullArgument{};
    if (alternative < ADF_TWO_SIDED || alternative > ADF_GREATER)
      throw adf::Error(adf::ErrorCode::InvalidConfig, "unknown alternative");
    const auto r = adf::mann_whitney_u(std::span<const double>(a, na), std::span<const double>(b, nb),
                                       static_cast<adf::Alternative>(alternative));
    *out = {r.u, r.p_two_sided, r.p_value, r.effect, r.method == adf::MwuMethod::Exact ? 1 : 0};
  });
}

adf_status adf_compare_curves(const char* const* curves_a, size_t na, const char* const* curves_b, size_t nb,
                              int alternative, adf_mwu_result* out) {
  return guard([&] {
    require(out);
    if ((na && !curves_a) || (nb && !curves_b)) throw NullArgument{};
    if (alternative < ADF_TWO_SIDED || alternative > ADF_GREATER)
      throw adf::Error(adf::ErrorCode::InvalidConfig, "unknown alternative");
    auto parse = [](const char* const* texts, size_t n) {
      std::vector<adf::LearningCurve> curves;
      for (size_t i = 0; i < n; ++i) {
        require(texts[i]);
        curves.push_back(adf::curve_from_csv(texts[i]));
      }
      return curves;
    };
    const auto ca = parse(curves_a, na), cb = parse(curves_b, nb);
    const auto r = adf::compare_curves(ca, cb, static_cast<adf::Alternative>(alternative));
    *out = {r.u, r.p_two_sided, r.p_value, r.effect, r.method == adf::MwuMethod::Exact ? 1 : 0};
  });
}

adf_status adf_curve_stats(const char* curve_csv, double threshold, int final_blocks, int* out_episodes_to_reach,
                           double* out_final_success) {
  return guard([&] {
    require(curve_csv, out_episodes_to_reach, out_final_success);
    const auto curve = adf::curve_from_csv(curve_csv);
    if (curve.empty()) throw adf::Error(adf::ErrorCode::EmptyInput, "learning curve is empty");
    const int last = curve.back().episode;
    const int spacing = curve.size() > 1 ? last - curve[curve.size() - 2].episode : last;
    *out_episodes_to_reach = adf::episodes_to_reach(curve, threshold, last + spacing);
    *out_final_success = adf::final_success(curve, final_blocks);
  });
}

adf_status adf_demos_diversity(const adf_demos* demos, double cell_size, adf_diversity* out) {
  return guard([&] {
    require(demos, out);
    const auto trajectories = adf::blue_trajectories(demos->store);
    const auto r = adf::state_entropy(trajectories, cell_size);
    *out = {r.entropy, r.unique_cells, r.cell_size, r.n_points};
  });
}

adf_status adf_demos_heatmap_csv(const adf_demos* demos, const adf_config* cfg, double cell_size, char** out_csv) {
  return guard([&] {
    require(demos, cfg, out_csv);
    const auto trajectories = adf::blue_trajectories(demos->store);
    *out_csv = dup_string(adf::heatmap_to_csv(adf::heatmap(trajectories, cell_size, cfg->world)));
  });
}

adf_status adf_server_start(const adf_config* cfg, unsigned short port, const char* web_root,
                            const char* record_path, double pace_scale, adf_server** out) {
  return guard([&] {
    require(cfg, out);
    if (!(pace_scale > 0.0)) throw adf::Error(adf::ErrorCode::InvalidConfig, "pace scale must be > 0");
    adf::ServerOptions opt;
    opt.port = port;
    opt.web_root = web_root ? web_root : "";
    opt.record_path = record_path ? record_path : "";
    opt.world = cfg->world;
    opt.loop.pace_scale = pace_scale;
    auto s = std::make_unique<adf_server>();
    s->server = std::make_unique<adf::TrialServer>(opt);
    s->server->start();
    *out = s.release();
  });
}

unsigned short adf_server_port(const adf_server* server) { return server ? server->server->port() : 0; }

void adf_server_stop(adf_server* server) {
  if (!server) return;
  server->server->stop();
  delete server;
}

}  // extern "C"
