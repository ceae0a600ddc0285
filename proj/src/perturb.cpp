#include "treval/perturb.hpp"

#include <algorithm>
#include <fstream>

#include "treval/error.hpp"
#include "treval/rng.hpp"
#include "treval/strings.hpp"

namespace treval {

namespace {

constexpr char kAlphabetFirst = 'a';
constexpr int kAlphabetSize = 26;

bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
         (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

void validate_config(const PerturbConfig& config) {
  if (config.min_word_len == 0) {
    raise(Errc::ConfigError, "min_word_len must be >= 1");
  }
  if (config.swap_window == 0) {
    raise(Errc::ConfigError, "swap_window must be >= 1");
  }
  if (config.edits_per_word < 1) {
    raise(Errc::ConfigError, "edits_per_word must be >= 1");
  }
}

// Splices edited word texts back over the original spans, so all
// inter-token whitespace survives byte-for-byte.
std::string rebuild(const std::string& text, const std::vector<WordToken>& tokens,
                    const std::vector<std::string>& words) {
  std::string out;
  out.reserve(text.size() + 8);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.append(text, cursor, tokens[i].begin - cursor);
    out.append(words[i]);
    cursor = tokens[i].end;
  }
  out.append(text, cursor, text.size() - cursor);
  return out;
}

std::vector<std::size_t> sorted_sample(Rng& rng, std::size_t n, std::size_t k) {
  auto picked = rng.sample(n, k);
  std::sort(picked.begin(), picked.end());
  return picked;
}

char draw_letter(Rng& rng) {
  return static_cast<char>(kAlphabetFirst + rng.index(kAlphabetSize));
}

// Uniform over the alphabet minus `avoid` when avoid is a lowercase
// letter; otherwise any letter already differs.
char draw_letter_avoiding(Rng& rng, char avoid) {
  if (avoid < 'a' || avoid > 'z') return draw_letter(rng);
  char c = static_cast<char>(kAlphabetFirst + rng.index(kAlphabetSize - 1));
  if (c >= avoid) ++c;
  return c;
}

struct CharEditOutcome {
  EditKind kind;
  std::string word;
};

CharEditOutcome apply_char_edit(Rng& rng, const std::string& word) {
  // Draw order is pinned: edit kind, then position, then letter.
  int pick = static_cast<int>(rng.index(3));
  if (pick == 1 && word.size() == 1) {
    // Deleting the only character would erase the word; re-roll as
    // insert or substitute.
    pick = rng.index(2) == 0 ? 0 : 2;
  }
  std::string out = word;
  switch (pick) {
    case 0: {
      std::size_t pos = rng.index(word.size() + 1);
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos),
                 draw_letter(rng));
      return {EditKind::CharInsert, out};
    }
    case 1: {
      std::size_t pos = rng.index(word.size());
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(pos));
      return {EditKind::CharDelete, out};
    }
    default: {
      std::size_t pos = rng.index(word.size());
      out[pos] = draw_letter_avoiding(rng, out[pos]);
      return {EditKind::CharSubstitute, out};
    }
  }
}

}  // namespace

const char* to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Misspelling: return "misspelling";
    case PerturbationKind::Swapping: return "swapping";
    case PerturbationKind::Synonym: return "synonym";
  }
  return "misspelling";
}

PerturbationKind kind_from_string(const std::string& name) {
  if (name == "misspelling") return PerturbationKind::Misspelling;
  if (name == "swapping") return PerturbationKind::Swapping;
  if (name == "synonym") return PerturbationKind::Synonym;
  raise(Errc::ConfigError, "unknown perturbation kind: " + name);
}

int kind_index(PerturbationKind kind) { return static_cast<int>(kind); }

const std::vector<PerturbationKind>& all_kinds() {
  static const std::vector<PerturbationKind> kinds = {
      PerturbationKind::Misspelling, PerturbationKind::Swapping,
      PerturbationKind::Synonym};
  return kinds;
}

PerturbationLevel PerturbationLevel::from_int(int level) {
  if (level < 1 || level > 3) {
    raise(Errc::ConfigError,
          "perturbation level must be 1, 2 or 3, got " + std::to_string(level));
  }
  return PerturbationLevel(level);
}

int PerturbationLevel::percent() const {
  switch (level_) {
    case 1: return 10;
    case 2: return 20;
    default: return 33;
  }
}

const char* to_string(EditKind kind) {
  switch (kind) {
    case EditKind::CharInsert: return "char_insert";
    case EditKind::CharDelete: return "char_delete";
    case EditKind::CharSubstitute: return "char_substitute";
    case EditKind::WordSwap: return "word_swap";
    case EditKind::SynonymReplace: return "synonym_replace";
  }
  return "char_substitute";
}

EditKind edit_kind_from_string(const std::string& name) {
  if (name == "char_insert") return EditKind::CharInsert;
  if (name == "char_delete") return EditKind::CharDelete;
  if (name == "char_substitute") return EditKind::CharSubstitute;
  if (name == "word_swap") return EditKind::WordSwap;
  if (name == "synonym_replace") return EditKind::SynonymReplace;
  raise(Errc::ConfigError, "unknown edit kind: " + name);
}

json Edit::to_json() const {
  json j{{"kind", to_string(kind)},
         {"word_index", word_index},
         {"original", original},
         {"replacement", replacement}};
  if (partner_index) j["partner_index"] = *partner_index;
  return j;
}

Edit Edit::from_json(const json& j) {
  Edit e;
  e.kind = edit_kind_from_string(j.at("kind").get<std::string>());
  e.word_index = j.at("word_index").get<std::size_t>();
  if (j.contains("partner_index")) {
    e.partner_index = j["partner_index"].get<std::size_t>();
  }
  e.original = j.at("original").get<std::string>();
  e.replacement = j.at("replacement").get<std::string>();
  return e;
}

json PerturbedPrompt::to_json() const {
  json rows = json::array();
  for (const auto& e : edits) rows.push_back(e.to_json());
  json j{{"prompt_id", prompt_id}, {"kind", to_string(kind)},
         {"level", level},         {"seed", seed},
         {"text", text},           {"edits", std::move(rows)}};
  if (shortfall > 0) j["shortfall"] = shortfall;
  return j;
}

PerturbedPrompt PerturbedPrompt::from_json(const json& j) {
  PerturbedPrompt p;
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.kind = kind_from_string(j.at("kind").get<std::string>());
  p.level = j.at("level").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.text = j.at("text").get<std::string>();
  for (const auto& row : j.at("edits")) p.edits.push_back(Edit::from_json(row));
  p.shortfall = j.value("shortfall", 0);
  return p;
}

SynonymLexicon SynonymLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoError, "cannot open lexicon " + path);
  SynonymLexicon lexicon;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = trim_ascii(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      raise(Errc::ParseError, path + ":" + std::to_string(line_no) +
                                  ": expected `word<TAB>syn1,syn2,...` (line=" +
                                  std::to_string(line_no) + ")");
    }
    const std::string word = to_lower_ascii(trim_ascii(line.substr(0, tab)));
    std::vector<std::string> synonyms;
    for (const auto& part : split(line.substr(tab + 1), ',')) {
      std::string synonym = to_lower_ascii(trim_ascii(part));
      if (!synonym.empty()) synonyms.push_back(std::move(synonym));
    }
    if (word.empty() || synonyms.empty()) {
      raise(Errc::ParseError, path + ":" + std::to_string(line_no) +
                                  ": empty word or synonym list (line=" +
                                  std::to_string(line_no) + ")");
    }
    if (synonyms.size() == 1 && synonyms[0] == word) {
      raise(Errc::ParseError, path + ":" + std::to_string(line_no) +
                                  ": word maps only to itself (line=" +
                                  std::to_string(line_no) + ")");
    }
    lexicon.add(word, synonyms);
  }
  return lexicon;
}

void SynonymLexicon::add(const std::string& word,
                         const std::vector<std::string>& synonyms) {
  const std::string key = to_lower_ascii(word);
  if (key.empty()) raise(Errc::ConfigError, "empty lexicon word");
  auto& list = entries_[key];
  for (const auto& raw : synonyms) {
    std::string synonym = to_lower_ascii(raw);
    if (synonym.empty()) continue;
    if (std::find(list.begin(), list.end(), synonym) == list.end()) {
      list.push_back(std::move(synonym));
    }
  }
  if (list.empty() || (list.size() == 1 && list[0] == key)) {
    entries_.erase(key);
    raise(Errc::ConfigError, "word maps only to itself: " + key);
  }
}

const std::vector<std::string>* SynonymLexicon::find(
    const std::string& word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<WordToken> tokenize(const std::string& text) {
  std::vector<WordToken> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_ascii_space(text[i])) ++i;
    if (i >= n) break;
    const std::size_t begin = i;
    while (i < n && !is_ascii_space(text[i])) ++i;
    tokens.push_back({text.substr(begin, i - begin), begin, i});
  }
  return tokens;
}

std::size_t target_count(std::size_t word_count, PerturbationLevel level) {
  if (word_count == 0) return 0;
  // round_half_up(percent/100 * n) without floating point.
  const std::size_t rounded =
      (2 * static_cast<std::size_t>(level.percent()) * word_count + 100) / 200;
  return std::max<std::size_t>(1, rounded);
}

PerturbedPrompt misspell(const std::string& text, PerturbationLevel level,
                         std::uint64_t seed, const PerturbConfig& config) {
  validate_config(config);
  const auto tokens = tokenize(text);
  if (tokens.empty()) raise(Errc::NoEligibleWords, "empty prompt");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].text.size() >= config.min_word_len) eligible.push_back(i);
  }
  if (eligible.empty()) {
    raise(Errc::NoEligibleWords,
          "no token of length >= " + std::to_string(config.min_word_len));
  }

  const std::size_t wanted = target_count(tokens.size(), level);
  const std::size_t n_pick = std::min(wanted, eligible.size());

  Rng rng(seed);
  auto picked = sorted_sample(rng, eligible.size(), n_pick);

  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);

  PerturbedPrompt result;
  result.kind = PerturbationKind::Misspelling;
  result.level = level.value();
  result.seed = seed;
  for (std::size_t p : picked) {
    const std::size_t idx = eligible[p];
    for (int round = 0; round < config.edits_per_word; ++round) {
      const std::string before = words[idx];
      auto outcome = apply_char_edit(rng, before);
      words[idx] = outcome.word;
      result.edits.push_back(
          Edit{outcome.kind, idx, std::nullopt, before, outcome.word});
    }
  }
  result.text = rebuild(text, tokens, words);
  return result;
}

PerturbedPrompt swap_words(const std::string& text, PerturbationLevel level,
                           std::uint64_t seed, const PerturbConfig& config) {
  validate_config(config);
  const auto tokens = tokenize(text);
  if (tokens.size() < 2) {
    raise(Errc::TooShort, "swap needs >= 2 tokens, got " +
                              std::to_string(tokens.size()));
  }

  const std::size_t pairs_wanted =
      std::max<std::size_t>(1, target_count(tokens.size(), level) / 2);

  Rng rng(seed);
  std::vector<bool> used(tokens.size(), false);

  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);

  PerturbedPrompt result;
  result.kind = PerturbationKind::Swapping;
  result.level = level.value();
  result.seed = seed;

  for (std::size_t made = 0; made < pairs_wanted; ++made) {
    // Uniform over the disjoint in-window pairs that remain.
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      if (used[i]) continue;
      const std::size_t last = std::min(tokens.size() - 1, i + config.swap_window);
      for (std::size_t j = i + 1; j <= last; ++j) {
        if (!used[j]) candidates.emplace_back(i, j);
      }
    }
    if (candidates.empty()) break;
    const auto [i, j] = candidates[rng.index(candidates.size())];
    used[i] = used[j] = true;
    result.edits.push_back(
        Edit{EditKind::WordSwap, i, j, words[i], words[j]});
    std::swap(words[i], words[j]);
  }

  result.text = rebuild(text, tokens, words);
  return result;
}

PerturbedPrompt synonym(const std::string& text, PerturbationLevel level,
                        std::uint64_t seed, const SynonymLexicon& lexicon,
                        const PerturbConfig& config) {
  validate_config(config);
  const auto tokens = tokenize(text);
  if (tokens.empty()) raise(Errc::NoLexiconHits, "empty prompt");

  struct Candidate {
    std::size_t index;
    std::size_t core_len;  // token length minus the trailing punctuation
    const std::vector<std::string>* synonyms;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i].text;
    std::size_t core_len = t.size();
    while (core_len > 0 && is_ascii_punct(t[core_len - 1])) --core_len;
    if (core_len == 0) continue;
    const auto* synonyms = lexicon.find(to_lower_ascii(t.substr(0, core_len)));
    if (synonyms != nullptr) candidates.push_back({i, core_len, synonyms});
  }
  if (candidates.empty()) {
    raise(Errc::NoLexiconHits, "no token has a lexicon entry");
  }

  const std::size_t wanted = target_count(tokens.size(), level);
  const std::size_t n_pick = std::min(wanted, candidates.size());

  Rng rng(seed);
  auto picked = sorted_sample(rng, candidates.size(), n_pick);

  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);

  PerturbedPrompt result;
  result.kind = PerturbationKind::Synonym;
  result.level = level.value();
  result.seed = seed;
  result.shortfall = static_cast<int>(wanted - n_pick);
  for (std::size_t p : picked) {
    const auto& cand = candidates[p];
    const std::string& original = words[cand.index];
    const std::string& choice =
        (*cand.synonyms)[rng.index(cand.synonyms->size())];
    std::string replacement = choice + original.substr(cand.core_len);
    result.edits.push_back(Edit{EditKind::SynonymReplace, cand.index,
                                std::nullopt, original,
                                std::move(replacement)});
    words[cand.index] = result.edits.back().replacement;
  }

  result.text = rebuild(text, tokens, words);
  return result;
}

PerturbedPrompt perturb(const std::string& text, PerturbationKind kind,
                        PerturbationLevel level, std::uint64_t seed,
                        const SynonymLexicon& lexicon,
                        const PerturbConfig& config) {
  switch (kind) {
    case PerturbationKind::Misspelling:
      return misspell(text, level, seed, config);
    case PerturbationKind::Swapping:
      return swap_words(text, level, seed, config);
    case PerturbationKind::Synonym:
      return synonym(text, level, seed, lexicon, config);
  }
  raise(Errc::ConfigError, "unreachable perturbation kind");
}

namespace {

void apply_edit_list(std::vector<std::string>& words,
                     const std::vector<Edit>& edits,
                     std::vector<bool>& changed) {
  for (const auto& e : edits) {
    if (e.word_index >= words.size()) {
      raise(Errc::ConfigError, "edit word_index out of range: " +
                                   std::to_string(e.word_index));
    }
    if (e.kind == EditKind::WordSwap) {
      if (!e.partner_index || *e.partner_index >= words.size() ||
          *e.partner_index <= e.word_index) {
        raise(Errc::ConfigError, "invalid swap partner");
      }
      if (words[e.word_index] != e.original ||
          words[*e.partner_index] != e.replacement) {
        raise(Errc::ConfigError, "swap does not match clean tokens");
      }
      std::swap(words[e.word_index], words[*e.partner_index]);
      changed[e.word_index] = true;
      changed[*e.partner_index] = true;
    } else {
      if (words[e.word_index] != e.original) {
        raise(Errc::ConfigError, "edit original does not match token " +
                                     std::to_string(e.word_index));
      }
      words[e.word_index] = e.replacement;
      changed[e.word_index] = true;
    }
  }
}

}  // namespace

std::string replay_edits(const std::string& clean_text,
                         const std::vector<Edit>& edits) {
  const auto tokens = tokenize(clean_text);
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);
  std::vector<bool> changed(words.size(), false);
  apply_edit_list(words, edits, changed);
  return rebuild(clean_text, tokens, words);
}

std::string mark_changed_words(const std::string& clean_text,
                               const std::vector<Edit>& edits) {
  const auto tokens = tokenize(clean_text);
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);
  std::vector<bool> changed(words.size(), false);
  apply_edit_list(words, edits, changed);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (changed[i]) words[i] = "**" + words[i] + "**";
  }
  return rebuild(clean_text, tokens, words);
}

}  // namespace treval
