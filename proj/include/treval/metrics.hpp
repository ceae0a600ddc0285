#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "treval/jsonl.hpp"
#include "treval/perturb.hpp"

namespace treval {

enum class NormalizationMode { Identity, MinMax0To100 };

const char* to_string(NormalizationMode mode);
NormalizationMode normalization_from_string(const std::string& name);

// identity returns the input unchanged. minmax_0_100 maps the given
// population affinely onto [0, 100]; callers pool the per-run,
// per-metric population (clean + all attacks) before calling so clean
// and attack values share one scale. An all-equal population maps to
// 50 everywhere.
std::vector<double> normalize(const std::vector<double>& scores,
                              NormalizationMode mode);

// 100 * (clean - attack) / clean. Positive = the attack lowered the
// reward. Requires clean_mean > 0 (NonPositiveBaseline otherwise).
double reward_drop_rate(double clean_mean, double attack_mean);

// 100 * (attack - clean) / clean. Positive = the attack raised the
// cost. Requires clean_mean > 0.
double cost_drop_rate(double clean_mean, double attack_mean);

// Neumaier-compensated sum; stable to 1e-9 across orderings of up to
// 1e6 values.
double compensated_sum(const std::vector<double>& values);
double mean(const std::vector<double>& values);

struct CellStats {
  double mean_reward = 0.0;
  double mean_cost = 0.0;
  std::size_t n = 0;
};

// Mean scores per (kind, level) cell plus the clean baseline.
// Indexing: cells[kind_index][level - 1].
struct ScoreMatrix {
  double clean_mean_reward = 0.0;
  double clean_mean_cost = 0.0;
  std::size_t clean_n = 0;
  std::array<std::array<CellStats, 3>, 3> cells{};

  bool complete() const;
  json to_json() const;
  static ScoreMatrix from_json(const json& j);
};

struct DropRateTable {
  std::array<std::array<double, 3>, 3> reward{};
  std::array<std::array<double, 3>, 3> cost{};
  // level_avg[l] = mean of the three kinds at level l+1;
  // overall = mean of the three level averages.
  std::array<double, 3> reward_level_avg{};
  std::array<double, 3> cost_level_avg{};
  double reward_overall = 0.0;
  double cost_overall = 0.0;

  json to_json() const;
};

// Cell-wise drop rates plus level and overall averages. The matrix
// must be complete (IncompleteMatrix otherwise), so partial runs can
// never emit misleading overall averages.
DropRateTable build_drop_rate_table(const ScoreMatrix& matrix);

struct Histogram {
  std::vector<double> bin_edges;     // bins + 1 ascending edges
  std::vector<std::size_t> counts;   // sums to the population size

  json to_json() const;
};

// Equal-width bins over `range`, or over [min, max] of `scores` when
// omitted (a degenerate span widens to [v, v+1)). Bins are left-closed
// right-open, last bin closed. Values outside an explicit range clamp
// into the edge bins so counts always sum to the population size.
Histogram histogram(const std::vector<double>& scores, std::size_t bins,
                    std::optional<std::pair<double, double>> range = std::nullopt);

}  // namespace treval
