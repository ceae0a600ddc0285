#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treval/corpus.hpp"
#include "treval/metrics.hpp"
#include "treval/modelio.hpp"
#include "treval/perturb.hpp"
#include "treval/report.hpp"

namespace treval {

struct RunConfig {
  std::string prompts_path;
  CorpusFormat format = CorpusFormat::Lines;
  std::size_t k = 0;  // 0 selects the whole corpus
  std::string model_id = "mock-llm";
  std::string gen_base;
  std::string reward_base;
  std::string cost_base;
  std::string reward_model = "reward-model";
  std::string cost_model = "cost-model";
  TemplateStyle style = TemplateStyle::Bare;
  Decoding decoding;
  std::uint64_t seed_base = 7;
  std::vector<PerturbationKind> kinds = all_kinds();
  std::vector<int> levels = {1, 2, 3};
  NormalizationMode normalization = NormalizationMode::Identity;
  std::string lexicon_path;
  PerturbConfig perturb;
  std::size_t hist_bins = 10;
  RetryPolicy retry;
  int concurrency = 4;
  std::string out_root = "runs";
  // Bearer token; read from TREVAL_API_KEY, never serialized.
  std::string api_key;

  // Canonical JSON form of everything that defines the run's content
  // (api_key excluded). Equal snapshots give equal run ids.
  json snapshot() const;
  std::string run_id() const;  // 16 hex chars of sha256(snapshot)

  static RunConfig from_snapshot(const json& snapshot);
  // Missing endpoints fall back to TREVAL_GEN_BASE / TREVAL_REWARD_BASE /
  // TREVAL_COST_BASE; the api key comes from TREVAL_API_KEY.
  void apply_env();
};

struct StageStatus {
  bool selected = false;
  bool perturbed = false;
  bool generated = false;
  bool scored = false;
  bool reported = false;
};

// Persisted atomically as manifest.json. Stage flags are monotone:
// resuming never clears one.
struct RunManifest {
  std::string run_id;
  std::string created_at;  // UTC ISO-8601, set once
  json config;             // RunConfig snapshot
  StageStatus stages;

  json to_json() const;
  static RunManifest from_json(const json& j);
};

// Generation cache key:
//   sha256("gen" NUL model_id NUL rendered_prompt NUL decoding.canonical())
// Score cache key:
//   sha256("score" NUL scorer_id NUL prompt NUL answer NUL metric)
// Keys are content-addressed, so editing the corpus invalidates only
// the affected records.
std::string generation_cache_key(const std::string& model_id,
                                 const std::string& rendered_prompt,
                                 const Decoding& decoding);
std::string score_cache_key(const std::string& scorer_id,
                            const std::string& prompt_text,
                            const std::string& answer_text,
                            ScoreMetric metric);

struct RunResult {
  std::string run_dir;
  RunManifest manifest;
  std::size_t prompts = 0;
  std::size_t generations = 0;
  std::size_t scores = 0;  // scalar scores: 2 per scored generation
  std::size_t failures = 0;
  std::size_t generation_cache_hits = 0;
  std::size_t score_cache_hits = 0;  // per generation pair
};

// Select, perturb, generate, score, report. Every stage is idempotent
// and resumes from the on-disk ledgers; per-record failures are
// quarantined to failures.jsonl; a stage with zero successes aborts.
RunResult run(const RunConfig& config);

// Rebuilds report.json / report.md / hist_*.csv for an existing run
// directory. Raises StageIncomplete("stage 'scored' incomplete") until
// scoring has finished. Overrides, when set, replace the run's stored
// normalization / bin count.
RobustnessReport write_report(const std::string& run_dir,
                              std::optional<NormalizationMode> normalization = std::nullopt,
                              std::optional<std::size_t> bins = std::nullopt);

// Clean row plus one row per (kind, level) with changed words marked,
// per-prompt scores and per-prompt drop rates, mirroring the published
// per-prompt record layout.
json case_study(const std::string& run_dir, const std::string& prompt_id);
std::string case_study_markdown(const json& record);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> problems;
};

// Referential scan: every score references a generation, every
// generation references a prompt variant, and the ledger conservation
// equations hold.
VerifyResult verify_run(const std::string& run_dir);

}  // namespace treval
