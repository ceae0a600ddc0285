#include "treval/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "treval/error.hpp"
#include "treval/hash.hpp"
#include "treval/strings.hpp"

namespace treval {

json Prompt::to_json() const {
  json j{{"id", id}, {"text", text}, {"source", source}};
  if (!meta.empty()) j["meta"] = meta;
  return j;
}

Prompt Prompt::from_json(const json& j) {
  Prompt p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.source = j.value("source", "");
  if (j.contains("meta")) {
    p.meta = j["meta"].get<std::map<std::string, std::string>>();
  }
  return p;
}

std::string normalize_for_identity(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

std::string prompt_id_for(const std::string& text) {
  return tagged_digest("prompt", {normalize_for_identity(text)}).substr(0, 16);
}

Prompt make_prompt(const std::string& text, const std::string& source) {
  Prompt p;
  p.id = prompt_id_for(text);
  p.text = text;
  p.source = source;
  return p;
}

CorpusFormat corpus_format_from_string(const std::string& name) {
  if (name == "lines") return CorpusFormat::Lines;
  if (name == "questions_jsonl") return CorpusFormat::QuestionsJsonl;
  if (name == "clean_jsonl") return CorpusFormat::CleanJsonl;
  raise(Errc::ConfigError, "unknown corpus format: " + name);
}

const char* to_string(CorpusFormat format) {
  switch (format) {
    case CorpusFormat::Lines: return "lines";
    case CorpusFormat::QuestionsJsonl: return "questions_jsonl";
    case CorpusFormat::CleanJsonl: return "clean_jsonl";
  }
  return "lines";
}

std::vector<Prompt> load_prompts(const std::string& path, CorpusFormat format) {
  std::vector<Prompt> prompts;
  std::set<std::string> seen;
  auto push = [&](Prompt p) {
    if (seen.insert(p.id).second) prompts.push_back(std::move(p));
  };

  switch (format) {
    case CorpusFormat::Lines: {
      const std::string body = read_text_file(path);
      std::size_t begin = 0;
      while (begin <= body.size()) {
        std::size_t end = body.find('\n', begin);
        if (end == std::string::npos) end = body.size();
        std::string line = body.substr(begin, end - begin);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim_ascii(line).empty()) push(make_prompt(line, path));
        if (end == body.size()) break;
        begin = end + 1;
      }
      break;
    }
    case CorpusFormat::QuestionsJsonl: {
      for_each_jsonl(path, [&](const json& row, int line_no) {
        if (!row.contains("question") || !row["question"].is_string()) {
          raise(Errc::ParseError,
                path + ":" + std::to_string(line_no) +
                    ": missing string field \"question\" (line=" +
                    std::to_string(line_no) + ")");
        }
        push(make_prompt(row["question"].get<std::string>(), path));
      });
      break;
    }
    case CorpusFormat::CleanJsonl: {
      for_each_jsonl(path, [&](const json& row, int) {
        push(Prompt::from_json(row));
      });
      break;
    }
  }

  if (prompts.empty()) raise(Errc::EmptyCorpus, "no prompts in " + path);
  return prompts;
}

json SelectionReport::to_json() const {
  return json{{"candidate_count", candidate_count},
              {"selected_count", selected_count},
              {"ranking_model", ranking_model},
              {"min_tokens", min_tokens},
              {"median_tokens", median_tokens},
              {"max_tokens", max_tokens}};
}

std::size_t whitespace_token_count(const std::string& text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_ascii_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

std::pair<std::vector<Prompt>, SelectionReport> select_open_questions(
    const std::vector<Prompt>& prompts,
    const std::map<std::string, std::string>& answers, std::size_t k,
    const std::string& ranking_model) {
  if (prompts.empty()) raise(Errc::EmptyCorpus, "no candidate prompts");
  if (k == 0 || k > prompts.size()) {
    raise(Errc::KTooLarge, "k=" + std::to_string(k) + " with " +
                               std::to_string(prompts.size()) + " candidates");
  }

  struct Ranked {
    const Prompt* prompt;
    std::size_t tokens;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(prompts.size());
  for (const auto& p : prompts) {
    auto it = answers.find(p.id);
    if (it == answers.end()) {
      raise(Errc::MissingAnswer, "no ranking answer for prompt " + p.id);
    }
    ranked.push_back({&p, whitespace_token_count(it->second)});
  }

  // Longest answer first; ties broken by id ascending so the result
  // is a pure function of the inputs.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) {
                     if (a.tokens != b.tokens) return a.tokens > b.tokens;
                     return a.prompt->id < b.prompt->id;
                   });
  ranked.resize(k);

  std::vector<std::size_t> lengths;
  lengths.reserve(k);
  std::vector<Prompt> selected;
  selected.reserve(k);
  for (const auto& r : ranked) {
    selected.push_back(*r.prompt);
    lengths.push_back(r.tokens);
  }

  std::sort(lengths.begin(), lengths.end());
  SelectionReport report;
  report.candidate_count = prompts.size();
  report.selected_count = k;
  report.ranking_model = ranking_model;
  report.min_tokens = lengths.front();
  report.max_tokens = lengths.back();
  report.median_tokens =
      k % 2 == 1 ? static_cast<double>(lengths[k / 2])
                 : (static_cast<double>(lengths[k / 2 - 1]) +
                    static_cast<double>(lengths[k / 2])) /
                       2.0;
  return {std::move(selected), report};
}

json FailureRecord::to_json() const {
  json j{{"stage", stage}, {"prompt_id", prompt_id}, {"reason", reason},
         {"detail", detail}};
  if (!kind.empty()) j["kind"] = kind;
  if (level != 0) j["level"] = level;
  if (!variant_id.empty()) j["variant_id"] = variant_id;
  return j;
}

FailureRecord FailureRecord::from_json(const json& j) {
  FailureRecord r;
  r.stage = j.at("stage").get<std::string>();
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.kind = j.value("kind", "");
  r.level = j.value("level", 0);
  r.variant_id = j.value("variant_id", "");
  r.reason = j.at("reason").get<std::string>();
  r.detail = j.value("detail", "");
  return r;
}

std::uint64_t derive_perturbation_seed(std::uint64_t seed_base,
                                       const std::string& prompt_id,
                                       PerturbationKind kind, int level) {
  return tagged_digest_u64(
      "seed", {std::to_string(seed_base), prompt_id, to_string(kind),
               std::to_string(level)});
}

AttackCorpusStats emit_attack_corpus(const std::vector<Prompt>& prompts,
                                     const std::vector<PerturbationKind>& kinds,
                                     const std::vector<int>& levels,
                                     std::uint64_t seed_base,
                                     const SynonymLexicon& lexicon,
                                     const PerturbConfig& config,
                                     const std::string& out_dir,
                                     const std::string& rejects_filename) {
  if (prompts.empty()) raise(Errc::EmptyCorpus, "no prompts to perturb");
  std::filesystem::create_directories(out_dir);

  std::vector<json> clean_rows;
  std::vector<json> attack_rows;
  AttackCorpusStats stats;

  for (const auto& prompt : prompts) {
    clean_rows.push_back(prompt.to_json());
    ++stats.clean;
    for (const auto kind : kinds) {
      for (const int level : levels) {
        const std::uint64_t seed =
            derive_perturbation_seed(seed_base, prompt.id, kind, level);
        try {
          PerturbedPrompt variant =
              perturb(prompt.text, kind, PerturbationLevel::from_int(level),
                      seed, lexicon, config);
          variant.prompt_id = prompt.id;
          attack_rows.push_back(variant.to_json());
          ++stats.attacks;
        } catch (const Error& e) {
          FailureRecord record;
          record.stage = "perturb";
          record.prompt_id = prompt.id;
          record.kind = to_string(kind);
          record.level = level;
          record.reason = errc_name(e.code());
          record.detail = e.what();
          stats.reject_records.push_back(std::move(record));
          ++stats.rejects;
        }
      }
    }
  }

  const auto dir = std::filesystem::path(out_dir);
  write_jsonl((dir / "clean.jsonl").string(), clean_rows);
  write_jsonl((dir / "attacks.jsonl").string(), attack_rows);
  std::vector<json> reject_rows;
  for (const auto& r : stats.reject_records) reject_rows.push_back(r.to_json());
  write_jsonl((dir / rejects_filename).string(), reject_rows);
  return stats;
}

}  // namespace treval
