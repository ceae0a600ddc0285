#include "treval/report.hpp"

#include <charconv>
#include <cstdio>

#include "treval/error.hpp"

namespace treval {

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string score1(double v) { return fixed(v, 1); }
std::string rate2(double v) { return fixed(v, 2); }

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) raise(Errc::ConfigError, "unprintable double");
  return std::string(buf, ptr);
}

}  // namespace

json HistogramPair::to_json() const {
  return json{{"clean", clean.to_json()}, {"attack", attack.to_json()}};
}

std::string histogram_key(const std::string& metric, PerturbationKind kind,
                          int level) {
  return metric + "_" + to_string(kind) + "_" + std::to_string(level);
}

std::string histogram_file_name(const std::string& metric,
                                PerturbationKind kind, int level) {
  return "hist_" + histogram_key(metric, kind, level) + ".csv";
}

json RobustnessReport::to_json() const {
  json hists = json::object();
  for (const auto& [key, pair] : histograms) hists[key] = pair.to_json();
  json j{{"run_id", run_id},
         {"model_id", model_id},
         {"template_style", template_style},
         {"decoding", decoding},
         {"normalization", normalization},
         {"nondeterministic", nondeterministic},
         {"partial", partial},
         {"scores", matrix.to_json()},
         {"bins", bins},
         {"histograms", std::move(hists)}};
  if (drop_rates) j["drop_rates"] = drop_rates->to_json();
  return j;
}

std::string RobustnessReport::to_markdown() const {
  std::string md;
  md += "# Robustness report\n\n";
  md += "- run: `" + run_id + "`\n";
  md += "- model: `" + model_id + "`\n";
  md += "- template: " + template_style + "\n";
  md += "- decoding: `" + decoding.dump() + "`\n";
  md += "- normalization: " + normalization + "\n";
  if (nondeterministic) {
    md += "- caveat: decoding is nondeterministic (temperature > 0); "
          "scores are a single sample\n";
  }
  md += "\n## Mean scores (reward / cost)\n\n";
  md += "Clean baseline: " + score1(matrix.clean_mean_reward) + " / " +
        score1(matrix.clean_mean_cost) + " over " +
        std::to_string(matrix.clean_n) + " answers.\n\n";
  md += "| Perturbation | Level 1 | Level 2 | Level 3 |\n";
  md += "|---|---:|---:|---:|\n";
  for (const auto kind : all_kinds()) {
    md += "| " + std::string(to_string(kind)) + " |";
    for (int level = 1; level <= 3; ++level) {
      const auto& cell = matrix.cells[kind_index(kind)][level - 1];
      if (cell.n == 0) {
        md += " - |";
      } else {
        md += " " + score1(cell.mean_reward) + " / " + score1(cell.mean_cost) +
              " (n=" + std::to_string(cell.n) + ") |";
      }
    }
    md += "\n";
  }

  if (!drop_rates) {
    md += "\nDrop rates omitted: the score matrix is incomplete.\n";
    return md;
  }

  const auto& t = *drop_rates;
  const struct {
    const char* title;
    const std::array<std::array<double, 3>, 3>& grid;
    const std::array<double, 3>& level_avg;
    double overall;
  } sections[2] = {
      {"Reward drop rates (%)", t.reward, t.reward_level_avg, t.reward_overall},
      {"Cost drop rates (%)", t.cost, t.cost_level_avg, t.cost_overall},
  };
  for (const auto& s : sections) {
    md += "\n## " + std::string(s.title) + "\n\n";
    md += "| Perturbation | Level 1 | Level 2 | Level 3 |\n";
    md += "|---|---:|---:|---:|\n";
    for (const auto kind : all_kinds()) {
      md += "| " + std::string(to_string(kind)) + " |";
      for (int level = 1; level <= 3; ++level) {
        md += " " + rate2(s.grid[kind_index(kind)][level - 1]) + " |";
      }
      md += "\n";
    }
    md += "| level average |";
    for (int level = 1; level <= 3; ++level) {
      md += " " + rate2(s.level_avg[level - 1]) + " |";
    }
    md += "\n\nOverall average: " + rate2(s.overall) + "\n";
  }
  return md;
}

std::string histogram_csv(const HistogramPair& pair) {
  if (pair.clean.bin_edges != pair.attack.bin_edges) {
    raise(Errc::InvalidRange, "paired histograms must share bin edges");
  }
  std::string csv = "bin_lo,bin_hi,clean_count,attack_count\n";
  for (std::size_t i = 0; i < pair.clean.counts.size(); ++i) {
    csv += shortest(pair.clean.bin_edges[i]) + "," +
           shortest(pair.clean.bin_edges[i + 1]) + "," +
           std::to_string(pair.clean.counts[i]) + "," +
           std::to_string(pair.attack.counts[i]) + "\n";
  }
  return csv;
}

}  // namespace treval
