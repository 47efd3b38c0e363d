#include "adf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "adf/keyvalue.hpp"

namespace adf {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct Ranked {
  double rank_sum_a = 0.0;
  double tie_term = 0.0;  // sum over tie groups of t^3 - t
  bool ties = false;
};

Ranked rank(std::span<const double> a, std::span<const double> b) {
  std::vector<std::pair<double, bool>> all;  // value, from a
  all.reserve(a.size() + b.size());
  for (double v : a) all.emplace_back(v, true);
  for (double v : b) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
  Ranked out;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    const double t = static_cast<double>(j - i);
    if (t > 1) {
      out.ties = true;
      out.tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) out.rank_sum_a += avg;
    i = j;
  }
  return out;
}

}  // namespace

std::string to_string(MwuMethod m) { return m == MwuMethod::Exact ? "exact" : "normal"; }

std::vector<double> mwu_null_counts(int n1, int n2) {
  if (n1 < 0 || n2 < 0) throw Error(ErrorCode::InvalidConfig, "sample sizes must be >= 0");
  const int max_u = n1 * n2;
  // f[i][j] is the count vector for sizes (i, j); the largest item either belongs to the
  // first group (beating all j of the second) or to the second.
  std::vector<std::vector<std::vector<double>>> f(
      static_cast<std::size_t>(n1 + 1), std::vector<std::vector<double>>(static_cast<std::size_t>(n2 + 1)));
  for (int i = 0; i <= n1; ++i) {
    for (int j = 0; j <= n2; ++j) {
      auto& cur = f[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      cur.assign(static_cast<std::size_t>(i * j + 1), 0.0);
      if (i == 0 || j == 0) {
        cur[0] = 1.0;
        continue;
      }
      const auto& take_a = f[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
      const auto& take_b = f[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
      for (std::size_t u = 0; u < take_a.size(); ++u) cur[u + static_cast<std::size_t>(j)] += take_a[u];
      for (std::size_t u = 0; u < take_b.size(); ++u) cur[u] += take_b[u];
    }
  }
  auto out = f[static_cast<std::size_t>(n1)][static_cast<std::size_t>(n2)];
  out.resize(static_cast<std::size_t>(max_u + 1), 0.0);
  return out;
}

MwuResult mann_whitney_u(std::span<const double> a, std::span<const double> b, Alternative alternative) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "mann_whitney_u needs two non-empty samples");
  for (double v : a)
    if (std::isnan(v)) throw Error(ErrorCode::InvalidConfig, "sample contains NaN");
  for (double v : b)
    if (std::isnan(v)) throw Error(ErrorCode::InvalidConfig, "sample contains NaN");

  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const Ranked r = rank(a, b);
  MwuResult out;
  out.alternative = alternative;
  out.u = r.rank_sum_a - n1 * (n1 + 1) / 2.0;
  out.effect = 1.0 - 2.0 * out.u / (n1 * n2);

  if (!r.ties && n1 * n2 <= 400) {
    out.method = MwuMethod::Exact;
    const auto counts = mwu_null_counts(static_cast<int>(a.size()), static_cast<int>(b.size()));
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(out.u));
    double below = 0.0, above = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k <= u) below += counts[k];
      if (k >= u) above += counts[k];
    }
    const double p_less = below / total, p_greater = above / total;
    out.p_two_sided = std::min(1.0, 2.0 * std::min(p_less, p_greater));
    out.p_value = alternative == Alternative::TwoSided ? out.p_two_sided
                  : alternative == Alternative::Less   ? p_less
                                                       : p_greater;
    return out;
  }

  out.method = MwuMethod::NormalApprox;
  const double n = n1 + n2;
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - r.tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    out.p_two_sided = out.p_value = 1.0;
    return out;
  }
  const double sigma = std::sqrt(var);
  const double z_two = std::max(0.0, std::abs(out.u - mu) - 0.5) / sigma;
  out.p_two_sided = std::min(1.0, 2.0 * (1.0 - normal_cdf(z_two)));
  const double p_less = normal_cdf((out.u - mu + 0.5) / sigma);
  const double p_greater = 1.0 - normal_cdf((out.u - mu - 0.5) / sigma);
  out.p_value = alternative == Alternative::TwoSided ? out.p_two_sided
                : alternative == Alternative::Less   ? std::min(1.0, p_less)
                                                     : std::min(1.0, p_greater);
  return out;
}

double success_rate(const nn::Checkpoint& checkpoint, const WorldConfig& world, ScenarioKind kind,
                    int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw Error(ErrorCode::InvalidConfig, "episode count must be > 0");
  GreedyPolicy policy(checkpoint.online);
  return evaluate_policy(policy, world, kind, episodes, seed).success_rate();
}

MwuResult compare_curves(std::span<const LearningCurve> a, std::span<const LearningCurve> b,
                         Alternative alternative) {
  auto pool = [](std::span<const LearningCurve> curves) {
    std::vector<double> v;
    for (const auto& c : curves)
      for (const auto& p : c) v.push_back(p.success_rate);
    return v;
  };
  const auto pa = pool(a), pb = pool(b);
  return mann_whitney_u(pa, pb, alternative);
}

int episodes_to_reach(const LearningCurve& curve, double threshold, int censored) {
  for (const auto& p : curve)
    if (p.success_rate >= threshold) return p.episode;
  return censored;
}

double final_success(const LearningCurve& curve, int blocks) {
  if (curve.empty()) throw Error(ErrorCode::EmptyInput, "learning curve is empty");
  if (blocks <= 0) throw Error(ErrorCode::InvalidConfig, "block count must be > 0");
  const auto k = std::min(curve.size(), static_cast<std::size_t>(blocks));
  double sum = 0.0;
  for (std::size_t i = curve.size() - k; i < curve.size(); ++i) sum += curve[i].success_rate;
  return sum / static_cast<double>(k);
}

std::vector<CurveBand> aggregate_curves(std::span<const LearningCurve> curves) {
  std::map<int, std::vector<double>> by_episode;
  for (const auto& c : curves)
    for (const auto& p : c) by_episode[p.episode].push_back(p.success_rate);
  std::vector<CurveBand> out;
  for (const auto& [episode, values] : by_episode) {
    CurveBand band;
    band.episode = episode;
    band.runs = static_cast<int>(values.size());
    band.mean = std::accumulate(values.begin(), values.end(), 0.0) / band.runs;
    if (band.runs > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - band.mean) * (v - band.mean);
      band.stddev = std::sqrt(ss / (band.runs - 1));
    }
    out.push_back(band);
  }
  return out;
}

DiversityReport state_entropy(std::span<const Trajectory> trajectories, double cell_size) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "cell size must be > 0");
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> cells;
  DiversityReport out;
  out.cell_size = cell_size;
  for (const auto& t : trajectories) {
    for (const auto& p : t) {
      const auto cx = static_cast<std::int64_t>(std::floor(p.x / cell_size));
      const auto cy = static_cast<std::int64_t>(std::floor(p.y / cell_size));
      ++cells[{cx, cy}];
      ++out.n_points;
    }
  }
  if (out.n_points == 0) throw Error(ErrorCode::EmptyInput, "no trajectory points");
  out.unique_cells = cells.size();
  const double n = static_cast<double>(out.n_points);
  for (const auto& [cell, count] : cells) {
    const double p = static_cast<double>(count) / n;
    out.entropy -= p * std::log(p);
  }
  out.entropy = std::max(0.0, out.entropy);
  return out;
}

std::vector<Trajectory> blue_trajectories(const Demonstration& demo) {
  std::vector<Trajectory> out;
  for (const auto& s : demo.steps) {
    if (out.size() < s.blues.size()) out.resize(s.blues.size());
    for (std::size_t i = 0; i < s.blues.size(); ++i) out[i].push_back({s.blues[i].x, s.blues[i].y});
  }
  return out;
}

std::vector<Trajectory> blue_trajectories(const DemoStore& store) {
  std::vector<Trajectory> out;
  for (const auto& d : store.episodes) {
    auto t = blue_trajectories(d);
    out.insert(out.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  return out;
}

std::uint64_t Heatmap::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

Heatmap heatmap(std::span<const Trajectory> trajectories, double cell_size, const WorldConfig& cfg) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "cell size must be > 0");
  Heatmap h;
  h.cell_size = cell_size;
  h.origin = cfg.restricted_center - Vec2{cfg.map_side / 2.0, cfg.map_side / 2.0};
  h.cols = h.rows = std::max(1, static_cast<int>(std::ceil(cfg.map_side / cell_size)));
  h.counts.assign(static_cast<std::size_t>(h.cols) * static_cast<std::size_t>(h.rows), 0);
  auto index = [&](double v, double o, int n) {
    const double c = std::floor((v - o) / cell_size);
    return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(n - 1)));
  };
  for (const auto& t : trajectories) {
    for (const auto& p : t) {
      const int col = index(p.x, h.origin.x, h.cols), row = index(p.y, h.origin.y, h.rows);
      ++h.counts[static_cast<std::size_t>(row) * static_cast<std::size_t>(h.cols) + static_cast<std::size_t>(col)];
    }
  }
  return h;
}

std::string heatmap_to_csv(const Heatmap& h) {
  std::ostringstream out;
  out << "origin_x,origin_y,cell_size,cols,rows\n";
  out << format_double(h.origin.x) << ',' << format_double(h.origin.y) << ',' << format_double(h.cell_size) << ','
      << h.cols << ',' << h.rows << '\n';
  for (int r = 0; r < h.rows; ++r) {
    for (int c = 0; c < h.cols; ++c) out << (c ? "," : "") << h.at(c, r);
    out << '\n';
  }
  return out.str();
}

Heatmap heatmap_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line) || line.rfind("origin_x", 0) != 0) throw Error(ErrorCode::Parse, "heatmap: missing header");
  if (!std::getline(in, line)) throw Error(ErrorCode::Parse, "heatmap: missing dimensions");
  const auto dims = split(line);
  if (dims.size() != 5) throw Error(ErrorCode::Parse, "heatmap: dimension row needs 5 fields");
  Heatmap h;
  h.origin = {parse_double("origin_x", dims[0]), parse_double("origin_y", dims[1])};
  h.cell_size = parse_double("cell_size", dims[2]);
  h.cols = static_cast<int>(parse_int("cols", dims[3]));
  h.rows = static_cast<int>(parse_int("rows", dims[4]));
  if (h.cols <= 0 || h.rows <= 0) throw Error(ErrorCode::Parse, "heatmap: dimensions must be positive");
  for (int r = 0; r < h.rows; ++r) {
    if (!std::getline(in, line)) throw Error(ErrorCode::Parse, "heatmap: expected " + std::to_string(h.rows) + " rows");
    const auto cells = split(line);
    if (static_cast<int>(cells.size()) != h.cols) throw Error(ErrorCode::Parse, "heatmap: row " + std::to_string(r) + " has the wrong width");
    for (const auto& c : cells) {
      const auto v = parse_int("count", c);
      if (v < 0) throw Error(ErrorCode::Parse, "heatmap: negative count");
      h.counts.push_back(static_cast<std::uint64_t>(v));
    }
  }
  return h;
}

std::string diversity_to_json(const DiversityReport& r) {
  return nlohmann::json{{"entropy", r.entropy},
                        {"unique_cells", r.unique_cells},
                        {"cell_size", r.cell_size},
                        {"n_points", r.n_points}}
      .dump();
}

std::string mwu_to_json(const MwuResult& r) {
  const char* alt = r.alternative == Alternative::TwoSided ? "two-sided"
                    : r.alternative == Alternative::Less   ? "less"
                                                           : "greater";
  return nlohmann::json{{"u", r.u},
                        {"p_two_sided", r.p_two_sided},
                        {"p_value", r.p_value},
                        {"effect", r.effect},
                        {"method", to_string(r.method)},
                        {"alternative", alt}}
      .dump();
}

}  // namespace adf
