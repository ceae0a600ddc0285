#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "treval/jsonl.hpp"

namespace treval {

enum class PerturbationKind { Misspelling, Swapping, Synonym };

const char* to_string(PerturbationKind kind);
PerturbationKind kind_from_string(const std::string& name);
// Fixed ordering used by tables, reports and ledgers:
// 0 = misspelling, 1 = swapping, 2 = synonym.
int kind_index(PerturbationKind kind);
const std::vector<PerturbationKind>& all_kinds();

// Level 1/2/3 targets 10%/20%/33% of the words. Only from_int can
// construct one, so no other fractions exist.
class PerturbationLevel {
 public:
  static PerturbationLevel from_int(int level);
  int value() const { return level_; }
  int percent() const;
  double fraction() const { return percent() / 100.0; }

 private:
  explicit PerturbationLevel(int level) : level_(level) {}
  int level_;
};

struct WordToken {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the source, [begin, end)
  std::size_t end = 0;
};

enum class EditKind { CharInsert, CharDelete, CharSubstitute, WordSwap, SynonymReplace };

const char* to_string(EditKind kind);
EditKind edit_kind_from_string(const std::string& name);

// One recorded mutation. `original` and `replacement` are whole-token
// texts (before/after), so a recorded edit list can be replayed against
// the clean text without re-running the RNG. For WordSwap, replacement
// is the token arriving at word_index and word_index < partner_index.
struct Edit {
  EditKind kind = EditKind::CharSubstitute;
  std::size_t word_index = 0;
  std::optional<std::size_t> partner_index;
  std::string original;
  std::string replacement;

  json to_json() const;
  static Edit from_json(const json& j);
};

struct PerturbConfig {
  std::size_t min_word_len = 2;  // misspelling eligibility
  std::size_t swap_window = 5;   // max index distance of a swapped pair
  int edits_per_word = 1;        // >1 allows several character edits per word
};

struct PerturbedPrompt {
  std::string prompt_id;
  PerturbationKind kind = PerturbationKind::Misspelling;
  int level = 1;
  std::uint64_t seed = 0;
  std::string text;
  std::vector<Edit> edits;
  // Synonym targets left unfilled because the lexicon ran dry.
  int shortfall = 0;

  json to_json() const;
  static PerturbedPrompt from_json(const json& j);
};

class SynonymLexicon {
 public:
  SynonymLexicon() = default;

  // File format: `word<TAB>syn1,syn2,...` per line, `#` starts a
  // comment line. Keys and synonyms are stored lowercase. Repeated
  // words merge their lists (first occurrence order, no duplicates).
  static SynonymLexicon load(const std::string& path);

  // Rejects an entry whose only synonym is the word itself.
  void add(const std::string& word, const std::vector<std::string>& synonyms);

  // `word` must already be lowercase. Null when absent.
  const std::vector<std::string>* find(const std::string& word) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

// Maximal runs of non-whitespace bytes (ASCII whitespace; multi-byte
// UTF-8 sequences never contain ASCII bytes, so this is UTF-8 safe).
std::vector<WordToken> tokenize(const std::string& text);

// max(1, round_half_up(fraction * word_count)) for word_count >= 1,
// 0 for an empty sentence. Computed in exact integer arithmetic:
// (2 * percent * n + 100) / 200.
std::size_t target_count(std::size_t word_count, PerturbationLevel level);

// One character edit per selected word (insert/delete/substitute,
// lowercase a-z), leaving each touched word at Levenshtein distance
// exactly 1 from its clean form. Words shorter than min_word_len are
// ineligible. Draw order: selection first, then per-word draws in
// ascending word order.
PerturbedPrompt misspell(const std::string& text, PerturbationLevel level,
                         std::uint64_t seed, const PerturbConfig& config = {});

// floor(target_count / 2), minimum 1, disjoint pair swaps with index
// distance <= swap_window; each pair drawn uniformly among the
// remaining candidates. Token multiset is preserved.
PerturbedPrompt swap_words(const std::string& text, PerturbationLevel level,
                           std::uint64_t seed, const PerturbConfig& config = {});

// Replaces up to target_count words that have lexicon entries with a
// uniformly drawn synonym. Trailing ASCII punctuation is stripped for
// the lookup and re-attached afterwards; replacements are lowercase.
// A target shortfall (lexicon ran dry) is recorded, zero hits is an
// error so the caller never scores a clean prompt as an attack.
PerturbedPrompt synonym(const std::string& text, PerturbationLevel level,
                        std::uint64_t seed, const SynonymLexicon& lexicon,
                        const PerturbConfig& config = {});

PerturbedPrompt perturb(const std::string& text, PerturbationKind kind,
                        PerturbationLevel level, std::uint64_t seed,
                        const SynonymLexicon& lexicon,
                        const PerturbConfig& config = {});

// Applies a recorded edit list to the clean text and returns the
// perturbed text. Verifies each edit's `original` against the current
// token and raises Error(ConfigError) on mismatch.
std::string replay_edits(const std::string& clean_text,
                         const std::vector<Edit>& edits);

// Same replay, but every edited word is wrapped in **...** so case
// studies can show what changed.
std::string mark_changed_words(const std::string& clean_text,
                               const std::vector<Edit>& edits);

}  // namespace treval
