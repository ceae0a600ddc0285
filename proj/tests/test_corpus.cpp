#include <doctest.h>

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "treval/corpus.hpp"
#include "treval/error.hpp"
#include "treval/jsonl.hpp"

using namespace treval;
using treval::testing::TempDir;

namespace {

void write_lines(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

Prompt prompt_with_id(const std::string& id, const std::string& text) {
  Prompt p;
  p.id = id;
  p.text = text;
  return p;
}

}  // namespace

TEST_CASE("normalize_for_identity trims, lowercases and collapses spaces") {
  CHECK(normalize_for_identity("  What   IS\tthis? ") == "what is this?");
  CHECK(normalize_for_identity("plain") == "plain");
  CHECK(normalize_for_identity("") == "");
  CHECK(normalize_for_identity(" \t\n ") == "");
  // Multi-byte UTF-8 passes through untouched.
  CHECK(normalize_for_identity("Caf\xc3\xa9  time") == "caf\xc3\xa9 time");
}

TEST_CASE("prompt ids are 16 hex chars of the normalized-text digest") {
  const std::string veronica = "What is the meaning of Veronica in English?";
  CHECK(prompt_id_for(veronica) == "3b656e534ff07e8c");
  CHECK(prompt_id_for("what  is the MEANING of veronica in english?") ==
        "3b656e534ff07e8c");
  CHECK(prompt_id_for("a different question") != prompt_id_for(veronica));
  CHECK(prompt_id_for("x").size() == 16);

  const Prompt p = make_prompt(veronica, "unit");
  CHECK(p.id == "3b656e534ff07e8c");
  CHECK(p.text == veronica);
  CHECK(p.source == "unit");
}

TEST_CASE("prompt JSON round-trips and omits empty meta") {
  Prompt p = make_prompt("hello there", "src.txt");
  json j = p.to_json();
  CHECK_FALSE(j.contains("meta"));
  p.meta["topic"] = "greeting";
  j = p.to_json();
  const Prompt back = Prompt::from_json(j);
  CHECK(back.id == p.id);
  CHECK(back.text == p.text);
  CHECK(back.source == p.source);
  CHECK(back.meta.at("topic") == "greeting");
}

TEST_CASE("load_prompts lines format: CRLF, blanks, dedupe by identity") {
  TempDir dir;
  const std::string path = dir.file("qs.txt");
  write_lines(path,
              "What is X?\r\n"
              "\n"
              "   \n"
              "what  is x?\n"           // same identity as line one
              "Another question here\n");
  const auto prompts = load_prompts(path, CorpusFormat::Lines);
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[0].text == "What is X?");  // first occurrence wins
  CHECK(prompts[1].text == "Another question here");
  CHECK(prompts[0].source == path);

  write_lines(dir.file("blank.txt"), "\n  \n");
  CHECK_THROWS_AS(load_prompts(dir.file("blank.txt"), CorpusFormat::Lines),
                  Error);
}

TEST_CASE("load_prompts questions_jsonl format") {
  TempDir dir;
  const std::string path = dir.file("qs.jsonl");
  write_lines(path,
              "{\"question\": \"First question?\"}\n"
              "{\"question\": \"Second question?\", \"extra\": 1}\n"
              "{\"question\": \"first   QUESTION?\"}\n");
  const auto prompts = load_prompts(path, CorpusFormat::QuestionsJsonl);
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[0].text == "First question?");
  CHECK(prompts[1].text == "Second question?");

  write_lines(dir.file("bad.jsonl"), "{\"q\": \"no question field\"}\n");
  try {
    load_prompts(dir.file("bad.jsonl"), CorpusFormat::QuestionsJsonl);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
    CHECK(std::string(e.what()).find("line=1") != std::string::npos);
  }
}

TEST_CASE("load_prompts clean_jsonl format round-trips prompts") {
  TempDir dir;
  const std::string path = dir.file("clean.jsonl");
  const Prompt original = make_prompt("Persisted question?", "elsewhere");
  write_jsonl(path, {original.to_json()});
  const auto prompts = load_prompts(path, CorpusFormat::CleanJsonl);
  REQUIRE(prompts.size() == 1);
  CHECK(prompts[0].id == original.id);
  CHECK(prompts[0].text == original.text);
  CHECK(prompts[0].source == "elsewhere");
}

TEST_CASE("corpus format names round-trip") {
  for (CorpusFormat format : {CorpusFormat::Lines, CorpusFormat::QuestionsJsonl,
                              CorpusFormat::CleanJsonl}) {
    CHECK(corpus_format_from_string(to_string(format)) == format);
  }
  CHECK_THROWS_AS(corpus_format_from_string("csv"), Error);
}

TEST_CASE("whitespace_token_count") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("   ") == 0);
  CHECK(whitespace_token_count("one") == 1);
  CHECK(whitespace_token_count(" a  b\tc\n") == 3);
}

TEST_CASE("select_open_questions ranks by answer length, ties by id") {
  const auto a = prompt_with_id("aaa", "prompt a");
  const auto b = prompt_with_id("bbb", "prompt b");
  const auto c = prompt_with_id("ccc", "prompt c");
  const auto d = prompt_with_id("ddd", "prompt d");
  std::map<std::string, std::string> answers = {
      {"aaa", "one two"},                    // 2 tokens
      {"bbb", "one two three four five"},    // 5 tokens
      {"ccc", "1 2 3 4 5 6 7 8 9"},          // 9 tokens
      {"ddd", "alpha beta gamma delta eps"}, // 5 tokens, ties with bbb
  };

  auto [selected, report] = select_open_questions({a, b, c, d}, answers, 3, "ranker");
  REQUIRE(selected.size() == 3);
  CHECK(selected[0].id == "ccc");
  CHECK(selected[1].id == "bbb");  // 5-token tie resolved by id
  CHECK(selected[2].id == "ddd");
  CHECK(report.candidate_count == 4);
  CHECK(report.selected_count == 3);
  CHECK(report.ranking_model == "ranker");
  CHECK(report.min_tokens == 5);
  CHECK(report.max_tokens == 9);
  CHECK(report.median_tokens == doctest::Approx(5.0));

  // Even k: median is the mean of the two middle lengths.
  auto [two, report2] = select_open_questions({a, b, c, d}, answers, 2, "ranker");
  CHECK(two[0].id == "ccc");
  CHECK(report2.median_tokens == doctest::Approx(7.0));

  const json j = report.to_json();
  CHECK(j["candidate_count"] == 4);
  CHECK(j["ranking_model"] == "ranker");
}

TEST_CASE("select_open_questions error cases") {
  const auto a = prompt_with_id("aaa", "prompt a");
  std::map<std::string, std::string> answers = {{"aaa", "one"}};

  try {
    select_open_questions({a}, {}, 1);
    FAIL("expected MissingAnswer");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingAnswer);
  }
  try {
    select_open_questions({a}, answers, 2);
    FAIL("expected KTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::KTooLarge);
  }
  CHECK_THROWS_AS(select_open_questions({a}, answers, 0), Error);
  CHECK_THROWS_AS(select_open_questions({}, answers, 1), Error);
}

TEST_CASE("failure records omit inapplicable fields") {
  FailureRecord r;
  r.stage = "perturb";
  r.prompt_id = "abc";
  r.reason = "TooShort";
  json j = r.to_json();
  CHECK_FALSE(j.contains("kind"));
  CHECK_FALSE(j.contains("level"));
  CHECK_FALSE(j.contains("variant_id"));

  r.kind = "swapping";
  r.level = 2;
  r.variant_id = "swapping:2";
  r.detail = "swap needs >= 2 tokens";
  j = r.to_json();
  const auto back = FailureRecord::from_json(j);
  CHECK(back.stage == "perturb");
  CHECK(back.kind == "swapping");
  CHECK(back.level == 2);
  CHECK(back.variant_id == "swapping:2");
  CHECK(back.reason == "TooShort");
  CHECK(back.detail == "swap needs >= 2 tokens");
}

TEST_CASE("perturbation seeds derive from base, prompt, kind and level") {
  CHECK(derive_perturbation_seed(7, "p01", PerturbationKind::Misspelling, 2) ==
        11295500007927368921ULL);
  // Any input change re-routes the seed.
  const auto base = derive_perturbation_seed(7, "p01", PerturbationKind::Misspelling, 2);
  CHECK(derive_perturbation_seed(8, "p01", PerturbationKind::Misspelling, 2) != base);
  CHECK(derive_perturbation_seed(7, "p02", PerturbationKind::Misspelling, 2) != base);
  CHECK(derive_perturbation_seed(7, "p01", PerturbationKind::Swapping, 2) != base);
  CHECK(derive_perturbation_seed(7, "p01", PerturbationKind::Misspelling, 3) != base);
}

TEST_CASE("emit_attack_corpus writes one attack per prompt-kind-level") {
  TempDir dir;
  const auto lexicon = testing::synthetic_lexicon();
  const std::vector<Prompt> prompts = {
      make_prompt("the fast brown fox jumps over a lazy dog", "unit"),
      make_prompt("a large happy model answers every question", "unit"),
  };
  const auto stats = emit_attack_corpus(prompts, all_kinds(), {1, 2, 3}, 7,
                                        lexicon, {}, dir.str());
  CHECK(stats.clean == 2);
  CHECK(stats.attacks == 18);
  CHECK(stats.rejects == 0);

  const auto clean_rows = read_jsonl(dir.file("clean.jsonl"));
  const auto attack_rows = read_jsonl(dir.file("attacks.jsonl"));
  const auto reject_rows = read_jsonl(dir.file("rejects.jsonl"));
  CHECK(clean_rows.size() == 2);
  CHECK(attack_rows.size() == 18);
  CHECK(reject_rows.empty());

  // Nesting order: prompt-major, then kind, then level.
  CHECK(attack_rows[0]["prompt_id"] == prompts[0].id);
  CHECK(attack_rows[0]["kind"] == "misspelling");
  CHECK(attack_rows[0]["level"] == 1);
  CHECK(attack_rows[5]["kind"] == "swapping");
  CHECK(attack_rows[5]["level"] == 3);
  CHECK(attack_rows[9]["prompt_id"] == prompts[1].id);

  // Attack rows parse back and replay against their clean prompt.
  const auto first = PerturbedPrompt::from_json(attack_rows[0]);
  CHECK(replay_edits(prompts[0].text, first.edits) == first.text);
  CHECK(first.seed ==
        derive_perturbation_seed(7, prompts[0].id, PerturbationKind::Misspelling, 1));
}

TEST_CASE("emit_attack_corpus is byte-identical across runs") {
  TempDir dir_a;
  TempDir dir_b;
  const auto lexicon = testing::synthetic_lexicon();
  const std::vector<Prompt> prompts = {
      make_prompt("one fast question about a small happy sample", "unit"),
  };
  emit_attack_corpus(prompts, all_kinds(), {1, 2, 3}, 42, lexicon, {}, dir_a.str());
  emit_attack_corpus(prompts, all_kinds(), {1, 2, 3}, 42, lexicon, {}, dir_b.str());
  CHECK(read_text_file(dir_a.file("clean.jsonl")) ==
        read_text_file(dir_b.file("clean.jsonl")));
  CHECK(read_text_file(dir_a.file("attacks.jsonl")) ==
        read_text_file(dir_b.file("attacks.jsonl")));

  // A different seed base produces different attacks.
  TempDir dir_c;
  emit_attack_corpus(prompts, all_kinds(), {1, 2, 3}, 43, lexicon, {}, dir_c.str());
  CHECK(read_text_file(dir_a.file("attacks.jsonl")) !=
        read_text_file(dir_c.file("attacks.jsonl")));
}

TEST_CASE("emit_attack_corpus quarantines per-record failures") {
  TempDir dir;
  const auto lexicon = testing::synthetic_lexicon();
  const std::vector<Prompt> prompts = {
      make_prompt("the fast brown fox jumps over a lazy dog", "unit"),
      make_prompt("hi", "unit"),  // 1 token: swap and synonym must fail
  };
  const auto stats = emit_attack_corpus(prompts, all_kinds(), {1, 2, 3}, 7,
                                        lexicon, {}, dir.str(), "skipped.jsonl");
  CHECK(stats.clean == 2);
  CHECK(stats.attacks == 12);  // 9 for the long prompt + misspelling x3 for "hi"
  CHECK(stats.rejects == 6);
  REQUIRE(stats.reject_records.size() == 6);
  CHECK(stats.reject_records[0].stage == "perturb");
  CHECK(stats.reject_records[0].prompt_id == prompts[1].id);
  CHECK(stats.reject_records[0].kind == "swapping");
  CHECK(stats.reject_records[0].reason == "TooShort");
  CHECK(stats.reject_records[3].kind == "synonym");
  CHECK(stats.reject_records[3].reason == "NoLexiconHits");

  CHECK(read_jsonl(dir.file("skipped.jsonl")).size() == 6);
  CHECK_FALSE(file_exists(dir.file("rejects.jsonl")));
}
