// Command-line front end. Talks to the library only through the C interface.
#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "adf/adf.h"

namespace {

struct Failure {
  adf_status status;
  std::string message;
};

void check(adf_status st) {
  if (st != ADF_OK) throw Failure{st, adf_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  adf_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{ADF_ERR_IO, "cannot read " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Failure{ADF_ERR_IO, "cannot write " + path};
  out << text;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

int parse_alternative(const std::string& s) {
  if (s == "two-sided") return ADF_TWO_SIDED;
  if (s == "less") return ADF_LESS;
  if (s == "greater") return ADF_GREATER;
  throw Failure{ADF_ERR_INVALID_CONFIG, "alternative must be two-sided, less or greater"};
}

struct Config {
  adf_config* cfg = nullptr;
  ~Config() { adf_config_free(cfg); }
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
  bool mini = false;
  bool json = false;
  std::vector<std::string> sets;
};

// Defaults, then the config file, then --set pairs, then subcommand flags.
void resolve(Config& c, const Globals& g, const std::vector<std::pair<std::string, std::string>>& flags) {
  check(adf_config_new(g.mini ? 1 : 0, &c.cfg));
  if (!g.config_path.empty()) check(adf_config_load_file(c.cfg, g.config_path.c_str()));
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure{ADF_ERR_INVALID_CONFIG, "--set expects key=value, got '" + kv + "'"};
    check(adf_config_set(c.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (g.seed_set) check(adf_config_set(c.cfg, "seed", std::to_string(g.seed).c_str()));
  for (const auto& [k, v] : flags) check(adf_config_set(c.cfg, k.c_str(), v.c_str()));
  char* text = nullptr;
  check(adf_config_dump(c.cfg, &text));
  std::cerr << "# resolved config\n" << take(text) << std::flush;
}

struct Checkpoint {
  adf_checkpoint* ck = nullptr;
  ~Checkpoint() { adf_checkpoint_free(ck); }
};

struct Demos {
  adf_demos* d = nullptr;
  ~Demos() { adf_demos_free(d); }
};

volatile std::sig_atomic_t g_signal = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Air-defense drone training, demonstrations and analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--config", g.config_path, "Key-value config file")->check(CLI::ExistingFile);
  app.add_flag("--mini", g.mini, "Scaled-down world and training schedule");
  app.add_flag("--json", g.json, "Machine-readable output and errors");
  app.add_option("--set", g.sets, "Override a config key (key=value), repeatable");

  // train
  auto* train = app.add_subcommand("train", "Train a D3QN agent, optionally with demonstrations");
  std::string scenario = "simple", demos_path, demo_source = "mixed", out_dir;
  int episodes = -1;
  double demo_fraction = -1;
  train->add_option("--scenario", scenario)->check(CLI::IsMember({"simple", "complex"}));
  train->add_option("--episodes", episodes);
  train->add_option("--demos", demos_path)->check(CLI::ExistingFile);
  train->add_option("--demo-source", demo_source)->check(CLI::IsMember({"agent", "human", "pc", "mixed"}));
  train->add_option("--demo-fraction", demo_fraction);
  train->add_option("--out", out_dir)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a policy");
  std::string checkpoint_path, policy;
  int eval_episodes = 30;
  eval->add_option("--checkpoint", checkpoint_path)->check(CLI::ExistingFile);
  eval->add_option("--policy", policy)->check(CLI::IsMember({"greedy", "heuristic", "random"}));
  eval->add_option("--scenario", scenario)->check(CLI::IsMember({"simple", "complex"}));
  eval->add_option("--episodes", eval_episodes);

  // collect
  auto* collect = app.add_subcommand("collect", "Record demonstrations from a policy");
  int count = 500;
  bool include_losses = false, append = false;
  std::string source = "agent", demos_out;
  collect->add_option("--checkpoint", checkpoint_path)->check(CLI::ExistingFile);
  collect->add_option("--policy", policy)->check(CLI::IsMember({"greedy", "heuristic", "random"}));
  collect->add_option("--scenario", scenario)->check(CLI::IsMember({"simple", "complex"}));
  collect->add_option("--count", count);
  collect->add_flag("--include-losses", include_losses, "Keep non-winning episodes");
  collect->add_option("--source", source)->check(CLI::IsMember({"agent", "human", "pc"}));
  collect->add_option("--out", demos_out)->required();
  collect->add_flag("--append", append, "Append to an existing store");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Statistics and diversity metrics");
  analyze->require_subcommand(1);
  std::vector<std::string> curves_a, curves_b;
  std::string alternative = "two-sided", curve_path, heat_out;
  double threshold = 0.6, cell_size = 10.0;
  int final_blocks = 10;
  auto* mwu = analyze->add_subcommand("mwu", "Mann-Whitney U between two sets of learning curves");
  mwu->add_option("--a", curves_a)->required()->check(CLI::ExistingFile);
  mwu->add_option("--b", curves_b)->required()->check(CLI::ExistingFile);
  mwu->add_option("--alternative", alternative);
  auto* curve = analyze->add_subcommand("curve", "Episodes to a success threshold and final success");
  curve->add_option("--curve", curve_path)->required()->check(CLI::ExistingFile);
  curve->add_option("--threshold", threshold);
  curve->add_option("--final-blocks", final_blocks);
  auto* diversity = analyze->add_subcommand("diversity", "State-visitation entropy of stored episodes");
  diversity->add_option("--demos", demos_path)->required()->check(CLI::ExistingFile);
  diversity->add_option("--cell-size", cell_size);
  auto* heat = analyze->add_subcommand("heatmap", "Visitation heatmap CSV of stored episodes");
  heat->add_option("--demos", demos_path)->required()->check(CLI::ExistingFile);
  heat->add_option("--cell-size", cell_size);
  heat->add_option("--out", heat_out)->required();

  // replay
  auto* replay = app.add_subcommand("replay", "Re-simulate stored episodes and report divergence");
  long long index = -1;
  double tolerance = 0.0;
  std::string trajectory_out;
  replay->add_option("--demos", demos_path)->required()->check(CLI::ExistingFile);
  replay->add_option("--index", index, "Episode index (default: all)");
  replay->add_option("--tolerance", tolerance, "Largest accepted divergence in meters");
  replay->add_option("--trajectory-out", trajectory_out, "Write the episode's trajectory CSV");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the trial server");
  int port = -1;
  std::string web_root, record_path;
  double pace_scale = 1.0;
  serve->add_option("--port", port, "Listen port (default ADF_PORT or 8080)");
  serve->add_option("--web-root", web_root);
  serve->add_option("--record", record_path, "Append finished trials to this JSONL file");
  serve->add_option("--pace-scale", pace_scale, "Wall seconds per simulated second");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (g.json && e.get_exit_code() != 0) {
      std::cout << "{\"error\":{\"code\":\"usage\",\"message\":\"" << json_escape(e.what()) << "\"}}\n";
      return 2;
    }
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (episodes >= 0) flags.emplace_back("episodes", std::to_string(episodes));
      if (demo_fraction >= 0) {
        std::ostringstream f;
        f.precision(17);
        f << demo_fraction;
        flags.emplace_back("demo_fraction", f.str());
      }
      Config c;
      resolve(c, g, flags);
      Demos demos;
      if (!demos_path.empty()) check(adf_demos_read(demos_path.c_str(), &demos.d));
      std::filesystem::create_directories(out_dir);
      Checkpoint ck;
      char* curve_csv = nullptr;
      auto progress = [](int ep, double sr, double eps, double wall, void* user) {
        if (!*static_cast<bool*>(user))
          std::printf("episode %d success %.3f epsilon %.4f wall %.1fs\n", ep, sr, eps, wall);
        std::fflush(stdout);
      };
      check(adf_train(c.cfg, scenario.c_str(), demos.d, demo_source.c_str(), progress, &g.json, &ck.ck, &curve_csv));
      const std::string csv = take(curve_csv);
      const auto ck_path = (std::filesystem::path(out_dir) / "checkpoint.json").string();
      check(adf_checkpoint_save(ck.ck, ck_path.c_str()));
      write_file((std::filesystem::path(out_dir) / "curve.csv").string(), csv);
      char* cfg_text = nullptr;
      check(adf_config_dump(c.cfg, &cfg_text));
      write_file((std::filesystem::path(out_dir) / "config.txt").string(), take(cfg_text));
      int reach = 0;
      double final_sr = 0;
      check(adf_curve_stats(csv.c_str(), 0.6, 10, &reach, &final_sr));
      if (g.json)
        std::printf("{\"checkpoint\":\"%s\",\"episodes_to_60\":%d,\"final_success\":%.6f}\n", json_escape(ck_path).c_str(),
                    reach, final_sr);
      else
        std::printf("wrote %s\nepisodes to 60%%: %d, final success %.3f\n", ck_path.c_str(), reach, final_sr);
    } else if (*eval || *collect) {
      Config c;
      resolve(c, g, {});
      Checkpoint ck;
      if (!checkpoint_path.empty()) check(adf_checkpoint_load(checkpoint_path.c_str(), &ck.ck));
      if (policy.empty()) policy = ck.ck ? "greedy" : "heuristic";
      if (*eval) {
        adf_eval_result r{};
        check(adf_evaluate(c.cfg, ck.ck, policy.c_str(), scenario.c_str(), eval_episodes, g.seed, &r));
        if (g.json)
          std::printf("{\"policy\":\"%s\",\"episodes\":%d,\"wins\":%d,\"losses\":%d,\"timeouts\":%d,"
                      "\"success_rate\":%.6f,\"mean_ticks\":%.3f}\n",
                      policy.c_str(), eval_episodes, r.wins, r.losses, r.timeouts, r.success_rate, r.mean_ticks);
        else
          std::printf("%s on %s: success %.3f (%d wins, %d losses, %d timeouts; mean %.1f ticks)\n", policy.c_str(),
                      scenario.c_str(), r.success_rate, r.wins, r.losses, r.timeouts, r.mean_ticks);
      } else {
        Demos fresh;
        check(adf_demos_collect(c.cfg, ck.ck, policy.c_str(), scenario.c_str(), count, include_losses ? 0 : 1, g.seed,
                                source.c_str(), &fresh.d));
        Demos store;
        if (append && std::filesystem::exists(demos_out)) {
          check(adf_demos_read(demos_out.c_str(), &store.d));
          check(adf_demos_append(store.d, fresh.d));
        } else {
          std::swap(store.d, fresh.d);
        }
        check(adf_demos_write(store.d, demos_out.c_str()));
        size_t total = 0, wins = 0;
        check(adf_demos_count(store.d, nullptr, 0, &total));
        check(adf_demos_count(store.d, nullptr, 1, &wins));
        if (g.json)
          std::printf("{\"path\":\"%s\",\"episodes\":%zu,\"wins\":%zu}\n", json_escape(demos_out).c_str(), total, wins);
        else
          std::printf("wrote %zu episodes (%zu wins) to %s\n", total, wins, demos_out.c_str());
      }
    } else if (*analyze) {
      Config c;
      resolve(c, g, {});
      if (*mwu) {
        std::vector<std::string> ta, tb;
        for (const auto& p : curves_a) ta.push_back(read_file(p));
        for (const auto& p : curves_b) tb.push_back(read_file(p));
        std::vector<const char*> pa, pb;
        for (const auto& t : ta) pa.push_back(t.c_str());
        for (const auto& t : tb) pb.push_back(t.c_str());
        adf_mwu_result r{};
        check(adf_compare_curves(pa.data(), pa.size(), pb.data(), pb.size(), parse_alternative(alternative), &r));
        if (g.json)
          std::printf("{\"u\":%.17g,\"p_two_sided\":%.17g,\"p_value\":%.17g,\"effect\":%.17g,\"method\":\"%s\"}\n", r.u,
                      r.p_two_sided, r.p_value, r.effect, r.exact ? "exact" : "normal");
        else
          std::printf("U = %.6g\np = %.6g (%s)\neffect = %.6g\nmethod = %s\n", r.u, r.p_value, alternative.c_str(),
                      r.effect, r.exact ? "exact" : "normal");
      } else if (*curve) {
        int reach = 0;
        double final_sr = 0;
        check(adf_curve_stats(read_file(curve_path).c_str(), threshold, final_blocks, &reach, &final_sr));
        if (g.json)
          std::printf("{\"episodes_to_reach\":%d,\"final_success\":%.6f}\n", reach, final_sr);
        else
          std::printf("episodes to %.2f: %d\nfinal success (last %d blocks): %.4f\n", threshold, reach, final_blocks,
                      final_sr);
      } else {
        Demos demos;
        check(adf_demos_read(demos_path.c_str(), &demos.d));
        if (*diversity) {
          adf_diversity r{};
          check(adf_demos_diversity(demos.d, cell_size, &r));
          if (g.json)
            std::printf("{\"entropy\":%.17g,\"unique_cells\":%llu,\"cell_size\":%.17g,\"n_points\":%llu}\n", r.entropy,
                        static_cast<unsigned long long>(r.unique_cells), r.cell_size,
                        static_cast<unsigned long long>(r.n_points));
          else
            std::printf("entropy %.6f nats, %llu unique cells of %.3g m, %llu points\n", r.entropy,
                        static_cast<unsigned long long>(r.unique_cells), r.cell_size,
                        static_cast<unsigned long long>(r.n_points));
        } else {
          char* csv = nullptr;
          check(adf_demos_heatmap_csv(demos.d, c.cfg, cell_size, &csv));
          write_file(heat_out, take(csv));
          std::printf("wrote %s\n", heat_out.c_str());
        }
      }
    } else if (*replay) {
      Config c;
      resolve(c, g, {});
      Demos demos;
      check(adf_demos_read(demos_path.c_str(), &demos.d));
      size_t total = 0;
      check(adf_demos_count(demos.d, nullptr, 0, &total));
      size_t first = 0, last = total;
      if (index >= 0) {
        first = static_cast<size_t>(index);
        last = first + 1;
      }
      double worst = 0, worst_reward = 0;
      for (size_t i = first; i < last; ++i) {
        double div = 0, rdiv = 0;
        check(adf_demo_replay(demos.d, i, &div, &rdiv));
        worst = std::max(worst, div);
        worst_reward = std::max(worst_reward, rdiv);
        if (!g.json) std::printf("episode %zu: position divergence %.3g m, reward divergence %.3g\n", i, div, rdiv);
      }
      if (!trajectory_out.empty()) {
        char* csv = nullptr;
        check(adf_demo_trajectory_csv(demos.d, first, &csv));
        write_file(trajectory_out, take(csv));
      }
      if (g.json)
        std::printf("{\"episodes\":%zu,\"max_divergence\":%.17g,\"max_reward_divergence\":%.17g}\n", last - first,
                    worst, worst_reward);
      else
        std::printf("max divergence %.3g m over %zu episodes\n", worst, last - first);
      if (worst > tolerance)
        throw Failure{ADF_ERR_INTERNAL, "replay diverged by " + std::to_string(worst) + " m"};
    } else if (*serve) {
      Config c;
      resolve(c, g, {});
      unsigned short p = 8080;
      if (port >= 0) {
        p = static_cast<unsigned short>(port);
      } else if (const char* env = std::getenv("ADF_PORT")) {
        p = static_cast<unsigned short>(std::atoi(env));
      }
      if (web_root.empty() && std::filesystem::exists("web/index.html")) web_root = "web";
      adf_server* server = nullptr;
      check(adf_server_start(c.cfg, p, web_root.empty() ? nullptr : web_root.c_str(),
                             record_path.empty() ? nullptr : record_path.c_str(), pace_scale, &server));
      std::printf("listening on port %u\n", adf_server_port(server));
      std::fflush(stdout);
      std::signal(SIGINT, [](int s) { g_signal = s; });
      std::signal(SIGTERM, [](int s) { g_signal = s; });
      while (!g_signal) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      adf_server_stop(server);
    }
  } catch (const Failure& f) {
    if (g.json)
      std::cout << "{\"error\":{\"code\":\"" << adf_status_name(f.status) << "\",\"message\":\"" << json_escape(f.message)
                << "\"}}\n";
    else
      std::cerr << "error: " << f.message << '\n';
    return 1;
  } catch (const std::exception& e) {
    if (g.json)
      std::cout << "{\"error\":{\"code\":\"internal\",\"message\":\"" << json_escape(e.what()) << "\"}}\n";
    else
      std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
