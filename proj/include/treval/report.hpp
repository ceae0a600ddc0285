#pragma once

#include <map>
#include <optional>
#include <string>

#include "treval/metrics.hpp"

namespace treval {

struct HistogramPair {
  Histogram clean;
  Histogram attack;

  json to_json() const;
};

// Flattened histogram key and the matching CSV file name.
std::string histogram_key(const std::string& metric, PerturbationKind kind,
                          int level);
std::string histogram_file_name(const std::string& metric,
                                PerturbationKind kind, int level);

struct RobustnessReport {
  std::string run_id;
  std::string model_id;
  std::string template_style;
  json decoding;
  std::string normalization;
  bool nondeterministic = false;  // temperature > 0; surfaced as a caveat
  ScoreMatrix matrix;
  // Incomplete matrix: score tables are emitted, drop rates are not.
  bool partial = false;
  std::optional<DropRateTable> drop_rates;
  std::size_t bins = 10;
  std::map<std::string, HistogramPair> histograms;  // keyed by histogram_key

  json to_json() const;
  // Score matrix, reward drop rates and cost drop rates laid out as
  // perturbation rows x level columns with level-average and average
  // rows. Scores print with one decimal, drop rates with two.
  std::string to_markdown() const;
};

// CSV rows: bin_lo,bin_hi,clean_count,attack_count. Both histograms
// must share edges.
std::string histogram_csv(const HistogramPair& pair);

}  // namespace treval
