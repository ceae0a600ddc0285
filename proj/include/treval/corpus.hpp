#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "treval/jsonl.hpp"
#include "treval/perturb.hpp"

namespace treval {

struct Prompt {
  std::string id;  // content hash of the normalized text, 16 hex chars
  std::string text;
  std::string source;
  std::map<std::string, std::string> meta;

  json to_json() const;
  static Prompt from_json(const json& j);
};

// Trimmed, lowercased, internal whitespace runs collapsed to single
// spaces. Identical questions that differ only in case or spacing
// share an id and dedupe.
std::string normalize_for_identity(const std::string& text);
std::string prompt_id_for(const std::string& text);
Prompt make_prompt(const std::string& text, const std::string& source);

enum class CorpusFormat { Lines, QuestionsJsonl, CleanJsonl };
CorpusFormat corpus_format_from_string(const std::string& name);
const char* to_string(CorpusFormat format);

// Lines: one question per line. QuestionsJsonl: one object per line
// with a "question" field. CleanJsonl: serialized Prompt rows.
// Dedup keeps the first occurrence; order is preserved.
std::vector<Prompt> load_prompts(const std::string& path, CorpusFormat format);

struct SelectionReport {
  std::size_t candidate_count = 0;
  std::size_t selected_count = 0;
  std::string ranking_model;
  // Whitespace-token counts of the selected answers.
  std::size_t min_tokens = 0;
  double median_tokens = 0.0;
  std::size_t max_tokens = 0;

  json to_json() const;
};

std::size_t whitespace_token_count(const std::string& text);

// The k prompts with the longest answers (whitespace tokens), ties
// broken by id ascending. Pure function of its arguments.
std::pair<std::vector<Prompt>, SelectionReport> select_open_questions(
    const std::vector<Prompt>& prompts,
    const std::map<std::string, std::string>& answers, std::size_t k,
    const std::string& ranking_model = "none");

struct FailureRecord {
  std::string stage;  // "select" | "perturb" | "generate" | "score"
  std::string prompt_id;
  std::string kind;        // empty when not applicable
  int level = 0;           // 0 when not applicable
  std::string variant_id;  // empty when not applicable
  std::string reason;      // Errc name
  std::string detail;

  json to_json() const;
  static FailureRecord from_json(const json& j);
};

struct AttackCorpusStats {
  std::size_t clean = 0;
  std::size_t attacks = 0;
  std::size_t rejects = 0;
  std::vector<FailureRecord> reject_records;
};

// seed = first 8 big-endian bytes of
// sha256("seed" NUL base NUL prompt_id NUL kind NUL level), with base
// and level in decimal. Pinned so corpora regenerate identically.
std::uint64_t derive_perturbation_seed(std::uint64_t seed_base,
                                       const std::string& prompt_id,
                                       PerturbationKind kind, int level);

// Writes clean.jsonl, attacks.jsonl and a rejects file into out_dir,
// one attack row per (prompt, kind, level) in that nesting order.
// Per-record perturbation errors land in the rejects file instead of
// aborting the batch. Deterministic: re-runs are byte-identical.
AttackCorpusStats emit_attack_corpus(const std::vector<Prompt>& prompts,
                                     const std::vector<PerturbationKind>& kinds,
                                     const std::vector<int>& levels,
                                     std::uint64_t seed_base,
                                     const SynonymLexicon& lexicon,
                                     const PerturbConfig& config,
                                     const std::string& out_dir,
                                     const std::string& rejects_filename = "rejects.jsonl");

}  // namespace treval
