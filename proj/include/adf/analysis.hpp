#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adf/demos.hpp"
#include "adf/learner.hpp"

namespace adf {

enum class MwuMethod { Exact, NormalApprox };
// Less: the first sample tends to hold smaller values.
enum class Alternative { TwoSided, Less, Greater };

std::string to_string(MwuMethod m);

struct MwuResult {
  double u = 0.0;            // for the first sample
  double p_two_sided = 1.0;
  double p_value = 1.0;      // for the requested alternative
  double effect = 0.0;       // rank-biserial, 1 - 2U / (n1 n2)
  MwuMethod method = MwuMethod::Exact;
  Alternative alternative = Alternative::TwoSided;
};

// Exact null distribution when n1*n2 <= 400 and there are no ties; otherwise the
// normal approximation with tie and continuity corrections.
MwuResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                         Alternative alternative = Alternative::TwoSided);

// Number of ways to order n1 + n2 items so that the first group's U equals u, for every u.
std::vector<double> mwu_null_counts(int n1, int n2);

double success_rate(const nn::Checkpoint& checkpoint, const WorldConfig& world, ScenarioKind kind,
                    int episodes, std::uint64_t seed);

// Pools every evaluation block's success rate per variant and tests the two pools.
MwuResult compare_curves(std::span<const LearningCurve> a, std::span<const LearningCurve> b,
                         Alternative alternative = Alternative::TwoSided);

// First evaluated episode with success >= threshold; `censored` when never reached.
int episodes_to_reach(const LearningCurve& curve, double threshold, int censored);

// Mean success rate over the last `blocks` evaluation points.
double final_success(const LearningCurve& curve, int blocks);

struct CurveBand {
  int episode = 0;
  double mean = 0.0;
  double stddev = 0.0;
  int runs = 0;
};

// Mean and sample standard deviation per episode across runs (episodes matched by value).
std::vector<CurveBand> aggregate_curves(std::span<const LearningCurve> curves);

struct DiversityReport {
  double entropy = 0.0;  // nats
  std::size_t unique_cells = 0;
  double cell_size = 10.0;
  std::size_t n_points = 0;
};

using Trajectory = std::vector<Vec2>;

DiversityReport state_entropy(std::span<const Trajectory> trajectories, double cell_size = 10.0);

// Blue positions per drone across the recorded steps.
std::vector<Trajectory> blue_trajectories(const Demonstration& demo);
std::vector<Trajectory> blue_trajectories(const DemoStore& store);

struct Heatmap {
  Vec2 origin;  // lower-left corner of cell (0, 0)
  double cell_size = 10.0;
  int cols = 0;
  int rows = 0;
  std::vector<std::uint64_t> counts;  // row-major, row 0 at origin.y

  std::uint64_t at(int col, int row) const { return counts[static_cast<std::size_t>(row) * cols + col]; }
  std::uint64_t total() const;
  bool operator==(const Heatmap&) const = default;
};

// Grid covering the map square; positions on or past an edge land in the edge cell.
Heatmap heatmap(std::span<const Trajectory> trajectories, double cell_size, const WorldConfig& cfg);

std::string heatmap_to_csv(const Heatmap& h);
Heatmap heatmap_from_csv(const std::string& text);

std::string diversity_to_json(const DiversityReport& r);
std::string mwu_to_json(const MwuResult& r);

}  // namespace adf
