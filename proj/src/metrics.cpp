#include "treval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "treval/error.hpp"

namespace treval {

const char* to_string(NormalizationMode mode) {
  return mode == NormalizationMode::Identity ? "identity" : "minmax_0_100";
}

NormalizationMode normalization_from_string(const std::string& name) {
  if (name == "identity") return NormalizationMode::Identity;
  if (name == "minmax_0_100") return NormalizationMode::MinMax0To100;
  raise(Errc::ConfigError, "unknown normalization mode: " + name);
}

std::vector<double> normalize(const std::vector<double>& scores,
                              NormalizationMode mode) {
  if (mode == NormalizationMode::Identity) return scores;
  if (scores.empty()) raise(Errc::EmptyPopulation, "nothing to normalize");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out;
  out.reserve(scores.size());
  if (hi == lo) {
    // A flat population carries no ordering information; midpoint.
    out.assign(scores.size(), 50.0);
    return out;
  }
  for (double v : scores) out.push_back(100.0 * (v - lo) / (hi - lo));
  return out;
}

double reward_drop_rate(double clean_mean, double attack_mean) {
  if (!(clean_mean > 0.0)) {
    raise(Errc::NonPositiveBaseline,
          "clean mean must be positive, got " + std::to_string(clean_mean));
  }
  return 100.0 * (clean_mean - attack_mean) / clean_mean;
}

double cost_drop_rate(double clean_mean, double attack_mean) {
  if (!(clean_mean > 0.0)) {
    raise(Errc::NonPositiveBaseline,
          "clean mean must be positive, got " + std::to_string(clean_mean));
  }
  return 100.0 * (attack_mean - clean_mean) / clean_mean;
}

double compensated_sum(const std::vector<double>& values) {
  double sum = 0.0;
  double compensation = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      compensation += (sum - t) + v;
    } else {
      compensation += (v - t) + sum;
    }
    sum = t;
  }
  return sum + compensation;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) raise(Errc::EmptyPopulation, "mean of zero values");
  return compensated_sum(values) / static_cast<double>(values.size());
}

bool ScoreMatrix::complete() const {
  if (clean_n == 0) return false;
  for (const auto& row : cells) {
    for (const auto& cell : row) {
      if (cell.n == 0) return false;
    }
  }
  return true;
}

json ScoreMatrix::to_json() const {
  json grid = json::object();
  for (const auto kind : all_kinds()) {
    json by_level = json::object();
    for (int level = 1; level <= 3; ++level) {
      const auto& cell = cells[kind_index(kind)][level - 1];
      by_level[std::to_string(level)] = json{{"mean_reward", cell.mean_reward},
                                             {"mean_cost", cell.mean_cost},
                                             {"n", cell.n}};
    }
    grid[to_string(kind)] = std::move(by_level);
  }
  return json{{"clean",
               json{{"mean_reward", clean_mean_reward},
                    {"mean_cost", clean_mean_cost},
                    {"n", clean_n}}},
              {"cells", std::move(grid)}};
}

ScoreMatrix ScoreMatrix::from_json(const json& j) {
  ScoreMatrix m;
  const json& clean = j.at("clean");
  m.clean_mean_reward = clean.at("mean_reward").get<double>();
  m.clean_mean_cost = clean.at("mean_cost").get<double>();
  m.clean_n = clean.at("n").get<std::size_t>();
  const json& grid = j.at("cells");
  for (const auto kind : all_kinds()) {
    const json& by_level = grid.at(to_string(kind));
    for (int level = 1; level <= 3; ++level) {
      const json& cell = by_level.at(std::to_string(level));
      auto& out = m.cells[kind_index(kind)][level - 1];
      out.mean_reward = cell.at("mean_reward").get<double>();
      out.mean_cost = cell.at("mean_cost").get<double>();
      out.n = cell.at("n").get<std::size_t>();
    }
  }
  return m;
}

json DropRateTable::to_json() const {
  json reward_grid = json::object();
  json cost_grid = json::object();
  for (const auto kind : all_kinds()) {
    json r = json::object();
    json c = json::object();
    for (int level = 1; level <= 3; ++level) {
      r[std::to_string(level)] = reward[kind_index(kind)][level - 1];
      c[std::to_string(level)] = cost[kind_index(kind)][level - 1];
    }
    reward_grid[to_string(kind)] = std::move(r);
    cost_grid[to_string(kind)] = std::move(c);
  }
  return json{{"reward", std::move(reward_grid)},
              {"cost", std::move(cost_grid)},
              {"reward_level_avg", reward_level_avg},
              {"cost_level_avg", cost_level_avg},
              {"reward_overall", reward_overall},
              {"cost_overall", cost_overall}};
}

DropRateTable build_drop_rate_table(const ScoreMatrix& matrix) {
  if (!matrix.complete()) {
    raise(Errc::IncompleteMatrix,
          "every (kind, level) cell and the clean baseline need scores");
  }
  DropRateTable table;
  for (int k = 0; k < 3; ++k) {
    for (int l = 0; l < 3; ++l) {
      table.reward[k][l] = reward_drop_rate(matrix.clean_mean_reward,
                                            matrix.cells[k][l].mean_reward);
      table.cost[k][l] =
          cost_drop_rate(matrix.clean_mean_cost, matrix.cells[k][l].mean_cost);
    }
  }
  double reward_total = 0.0;
  double cost_total = 0.0;
  for (int l = 0; l < 3; ++l) {
    table.reward_level_avg[l] =
        (table.reward[0][l] + table.reward[1][l] + table.reward[2][l]) / 3.0;
    table.cost_level_avg[l] =
        (table.cost[0][l] + table.cost[1][l] + table.cost[2][l]) / 3.0;
    reward_total += table.reward_level_avg[l];
    cost_total += table.cost_level_avg[l];
  }
  table.reward_overall = reward_total / 3.0;
  table.cost_overall = cost_total / 3.0;
  return table;
}

json Histogram::to_json() const {
  return json{{"bin_edges", bin_edges}, {"counts", counts}};
}

Histogram histogram(const std::vector<double>& scores, std::size_t bins,
                    std::optional<std::pair<double, double>> range) {
  if (bins == 0) raise(Errc::InvalidRange, "histogram needs >= 1 bin");
  if (scores.empty()) raise(Errc::EmptyPopulation, "histogram of zero scores");
  for (double v : scores) {
    if (!std::isfinite(v)) {
      raise(Errc::InvalidRange, "histogram input must be finite");
    }
  }

  double lo;
  double hi;
  if (range) {
    lo = range->first;
    hi = range->second;
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      raise(Errc::InvalidRange, "histogram range must be finite with lo <= hi");
    }
  } else {
    const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
    lo = *lo_it;
    hi = *hi_it;
  }
  if (lo == hi) hi = lo + 1.0;  // degenerate span widens to [v, v+1)

  Histogram h;
  h.bin_edges.reserve(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.bin_edges.push_back(lo + (hi - lo) * static_cast<double>(i) /
                                   static_cast<double>(bins));
  }
  h.bin_edges.back() = hi;
  h.counts.assign(bins, 0);

  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : scores) {
    std::size_t idx;
    if (v <= lo) {
      idx = 0;
    } else if (v >= hi) {
      idx = bins - 1;  // the last bin is closed; out-of-range clamps
    } else {
      idx = static_cast<std::size_t>((v - lo) / width);
      if (idx >= bins) idx = bins - 1;
      // Guard against a float landing one bin high near an edge.
      while (idx > 0 && v < h.bin_edges[idx]) --idx;
      while (idx + 1 < bins && v >= h.bin_edges[idx + 1]) ++idx;
    }
    ++h.counts[idx];
  }
  return h;
}

}  // namespace treval
