// treval: word-level robustness evaluation for LLM endpoints.
//
// Subcommands cover the full pipeline (run) plus each stage standalone
// (select, perturb, generate, score, report, case, hist) and local mock
// endpoints (mock-serve). Every subcommand accepts --config FILE with
// TOML-style `key = value` lines mirroring its flags; flags win.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "treval/corpus.hpp"
#include "treval/error.hpp"
#include "treval/jsonl.hpp"
#include "treval/metrics.hpp"
#include "treval/mock_endpoints.hpp"
#include "treval/modelio.hpp"
#include "treval/perturb.hpp"
#include "treval/pipeline.hpp"
#include "treval/report.hpp"
#include "treval/strings.hpp"

namespace {

using treval::Errc;
using treval::json;

// 0 = success, 1 = validation/precondition error, 2 = runtime failure
// (endpoints, I/O) with partial artifacts left in place.
int exit_code_for(Errc code) {
  switch (code) {
    case Errc::Transport:
    case Errc::MalformedResponse:
    case Errc::NonFiniteScore:
    case Errc::IoError:
      return 2;
    default:
      return 1;
  }
}

std::vector<treval::PerturbationKind> parse_kinds(const std::string& csv) {
  std::vector<treval::PerturbationKind> kinds;
  if (csv == "all" || csv.empty()) return treval::all_kinds();
  for (const auto& name : treval::split(csv, ',')) {
    kinds.push_back(treval::kind_from_string(treval::trim_ascii(name)));
  }
  return kinds;
}

std::vector<int> parse_levels(const std::string& csv) {
  std::vector<int> levels;
  if (csv == "all" || csv.empty()) return {1, 2, 3};
  for (const auto& part : treval::split(csv, ',')) {
    levels.push_back(std::stoi(treval::trim_ascii(part)));
  }
  return levels;
}

std::atomic<bool> g_interrupted{false};

void on_interrupt(int) { g_interrupted = true; }

// ---- select -----------------------------------------------------------

struct SelectArgs {
  std::string in;
  std::string format = "lines";
  std::size_t k = 0;
  std::string answers;
  std::string ranking_model = "provided";
  std::string out = "clean.jsonl";
  std::string report = "selection_report.json";
};

int cmd_select(const SelectArgs& args) {
  const auto prompts =
      treval::load_prompts(args.in, treval::corpus_format_from_string(args.format));
  std::vector<treval::Prompt> selected;
  treval::SelectionReport report;
  if (args.k == 0 || args.k == prompts.size()) {
    selected = prompts;
    report.candidate_count = prompts.size();
    report.selected_count = prompts.size();
    report.ranking_model = "none";
  } else {
    if (args.answers.empty()) {
      treval::raise(Errc::ConfigError,
                    "--answers FILE is required when k selects a subset "
                    "(rows: {\"prompt_id\", \"answer\"})");
    }
    std::map<std::string, std::string> answers;
    for (const auto& row : treval::read_jsonl(args.answers)) {
      answers[row.at("prompt_id").get<std::string>()] =
          row.at("answer").get<std::string>();
    }
    auto [chosen, sel_report] = treval::select_open_questions(
        prompts, answers, args.k, args.ranking_model);
    selected = std::move(chosen);
    report = sel_report;
  }

  std::vector<json> rows;
  for (const auto& p : selected) rows.push_back(p.to_json());
  treval::write_jsonl(args.out, rows);
  treval::write_file_atomic(args.report, report.to_json().dump(2) + "\n");
  std::cout << "selected " << selected.size() << " of " << prompts.size()
            << " prompts -> " << args.out << "\n";
  return 0;
}

// ---- perturb ----------------------------------------------------------

struct PerturbArgs {
  std::string in;
  std::string format = "clean_jsonl";
  std::string kind = "all";
  int level = 0;  // 0 = all levels
  std::uint64_t seed = 7;
  std::string lexicon;
  std::string out_dir = "attack_out";
  treval::PerturbConfig config;
};

int cmd_perturb(const PerturbArgs& args) {
  const auto prompts =
      treval::load_prompts(args.in, treval::corpus_format_from_string(args.format));
  const auto kinds = parse_kinds(args.kind);
  std::vector<int> levels;
  if (args.level == 0) {
    levels = {1, 2, 3};
  } else {
    treval::PerturbationLevel::from_int(args.level);
    levels = {args.level};
  }
  treval::SynonymLexicon lexicon;
  if (!args.lexicon.empty()) {
    lexicon = treval::SynonymLexicon::load(args.lexicon);
  }
  const auto stats = treval::emit_attack_corpus(
      prompts, kinds, levels, args.seed, lexicon, args.config, args.out_dir);
  std::cout << "clean " << stats.clean << "\nattacks " << stats.attacks
            << "\nrejects " << stats.rejects << "\nout " << args.out_dir
            << "\n";
  return 0;
}

// ---- generate / score (single-shot debugging) --------------------------

struct GenerateArgs {
  std::string prompt;
  std::string model = "mock-llm";
  std::string base;
  std::string tmpl = "bare";
  treval::Decoding decoding;
};

int cmd_generate(GenerateArgs args) {
  if (args.base.empty()) args.base = treval::env_or("TREVAL_GEN_BASE", "");
  if (args.base.empty()) {
    treval::raise(Errc::ConfigError, "--gen_base or TREVAL_GEN_BASE required");
  }
  const treval::EndpointClient client(args.base, {},
                                      treval::env_or("TREVAL_API_KEY", ""));
  const std::string rendered = treval::render_prompt(
      args.prompt, treval::template_style_from_string(args.tmpl));
  const auto result = client.generate(args.model, rendered, args.decoding);
  std::cout << json{{"answer", result.answer},
                    {"latency_ms", result.latency_ms},
                    {"retries", result.retries}}
                   .dump(2)
            << "\n";
  return 0;
}

struct ScoreArgs {
  std::string prompt;
  std::string answer;
  std::string model = "reward-model";
  std::string base;
  std::string metric = "reward";
};

int cmd_score(ScoreArgs args) {
  const bool is_reward = args.metric == "reward";
  if (!is_reward && args.metric != "cost") {
    treval::raise(Errc::ConfigError, "--metric must be reward or cost");
  }
  if (args.base.empty()) {
    args.base = treval::env_or(
        is_reward ? "TREVAL_REWARD_BASE" : "TREVAL_COST_BASE", "");
  }
  if (args.base.empty()) {
    treval::raise(Errc::ConfigError,
                  "--base or TREVAL_REWARD_BASE/TREVAL_COST_BASE required");
  }
  const treval::EndpointClient client(args.base, {},
                                      treval::env_or("TREVAL_API_KEY", ""));
  const double value = client.score(
      args.model, args.prompt, args.answer,
      is_reward ? treval::ScoreMetric::Reward : treval::ScoreMetric::Cost);
  std::cout << json{{"metric", args.metric}, {"score", value}}.dump() << "\n";
  return 0;
}

// ---- run ----------------------------------------------------------------

struct RunArgs {
  treval::RunConfig config;
  std::string format = "lines";
  std::string tmpl = "bare";
  std::string kinds = "all";
  std::string levels = "all";
  std::string normalization = "identity";
  std::int64_t decode_seed = -1;
};

int cmd_run(RunArgs args) {
  args.config.format = treval::corpus_format_from_string(args.format);
  args.config.style = treval::template_style_from_string(args.tmpl);
  args.config.kinds = parse_kinds(args.kinds);
  args.config.levels = parse_levels(args.levels);
  args.config.normalization =
      treval::normalization_from_string(args.normalization);
  if (args.decode_seed >= 0) {
    args.config.decoding.seed = static_cast<std::uint64_t>(args.decode_seed);
  }
  args.config.apply_env();

  const treval::RunResult result = treval::run(args.config);
  std::cout << "run " << result.manifest.run_id << "\n"
            << "dir " << result.run_dir << "\n"
            << "prompts " << result.prompts << "\n"
            << "generations " << result.generations << "\n"
            << "scores " << result.scores << "\n"
            << "failures " << result.failures << "\n"
            << "generation_cache_hits " << result.generation_cache_hits << "\n"
            << "score_cache_hits " << result.score_cache_hits << "\n";
  return 0;
}

// ---- report / case / hist ----------------------------------------------

struct ReportArgs {
  std::string run_dir;
  std::string normalization;
  std::size_t bins = 0;
};

int cmd_report(const ReportArgs& args) {
  std::optional<treval::NormalizationMode> mode;
  if (!args.normalization.empty()) {
    mode = treval::normalization_from_string(args.normalization);
  }
  std::optional<std::size_t> bins;
  if (args.bins > 0) bins = args.bins;
  const auto report = treval::write_report(args.run_dir, mode, bins);
  std::cout << "report " << (std::filesystem::path(args.run_dir) / "report.md").string()
            << "\n";
  if (report.partial) {
    std::cout << "partial: some cells have no scores; drop rates omitted\n";
  }
  return 0;
}

struct CaseArgs {
  std::string run_dir;
  std::string prompt_id;
  std::string text;
  bool as_json = false;
};

int cmd_case(const CaseArgs& args) {
  std::string id = args.prompt_id;
  if (id.empty() && !args.text.empty()) id = treval::prompt_id_for(args.text);
  if (id.empty()) {
    treval::raise(Errc::ConfigError, "pass --prompt_id or --text");
  }
  const json record = treval::case_study(args.run_dir, id);
  if (args.as_json) {
    std::cout << record.dump(2) << "\n";
  } else {
    std::cout << treval::case_study_markdown(record);
  }
  return 0;
}

struct HistArgs {
  std::string run_dir;
  std::string metric = "reward";
  std::string kind = "misspelling";
  int level = 1;
};

int cmd_hist(const HistArgs& args) {
  if (args.metric != "reward" && args.metric != "cost") {
    treval::raise(Errc::ConfigError, "--metric must be reward or cost");
  }
  const auto kind = treval::kind_from_string(args.kind);
  treval::PerturbationLevel::from_int(args.level);
  const auto path = std::filesystem::path(args.run_dir) /
                    treval::histogram_file_name(args.metric, kind, args.level);
  if (!treval::file_exists(path.string())) {
    treval::raise(Errc::ConfigError,
                  "no histogram at " + path.string() +
                      " (is the run reported, and the cell populated?)");
  }
  std::cout << treval::read_text_file(path.string());
  return 0;
}

// ---- mock-serve ----------------------------------------------------------

struct MockServeArgs {
  int gen_port = 18080;
  int reward_port = 18081;
  int cost_port = 18082;
  std::string gen_mode = "echo";
  std::string scorer_mode = "length";
  std::string references;  // file with one reference text per line
  int fail_first = 0;
};

int cmd_mock_serve(const MockServeArgs& args) {
  treval::MockGeneratorOptions gen_options;
  gen_options.mode = args.gen_mode;
  gen_options.fail_first = args.fail_first;

  treval::MockScorerOptions scorer_options;
  scorer_options.mode = args.scorer_mode;
  if (!args.references.empty()) {
    const std::string body = treval::read_text_file(args.references);
    for (const auto& line : treval::split(body, '\n')) {
      const std::string trimmed = treval::trim_ascii(line);
      if (!trimmed.empty()) scorer_options.references.push_back(trimmed);
    }
  }

  const auto generator = treval::start_mock_generator(gen_options, args.gen_port);
  const auto reward = treval::start_mock_scorer(scorer_options, args.reward_port);
  const auto cost = treval::start_mock_scorer(scorer_options, args.cost_port);

  std::cout << "gen_base " << generator->base_url() << "\n"
            << "reward_base " << reward->base_url() << "\n"
            << "cost_base " << cost->base_url() << "\n"
            << "serving; Ctrl-C stops\n"
            << std::flush;

  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  std::cout << "stopped after " << generator->request_count() << " generations, "
            << reward->request_count() + cost->request_count() << " scores\n";
  return 0;
}

// ---- config files ---------------------------------------------------------

// Flag name of a --key or --key=value token, with '-' normalized to '_'
// so both spellings of an aliased option compare equal. Empty for
// anything that is not a long flag.
std::string flag_name(const std::string& token) {
  if (token.size() < 3 || token.rfind("--", 0) != 0) return "";
  const auto eq = token.find('=');
  std::string name =
      token.substr(2, eq == std::string::npos ? eq : eq - 2);
  std::replace(name.begin(), name.end(), '-', '_');
  return name;
}

std::string unquote(const std::string& value) {
  if (value.size() >= 2) {
    const char quote = value.front();
    if ((quote == '"' || quote == '\'') && value.back() == quote) {
      return value.substr(1, value.size() - 2);
    }
  }
  return value;
}

// `key = value` lines; '#' and ';' start comment lines. Values may be
// quoted to keep surrounding whitespace; quotes are stripped verbatim,
// no escape processing.
std::vector<std::pair<std::string, std::string>> read_config_entries(
    const std::string& path) {
  if (!treval::file_exists(path)) {
    treval::raise(Errc::ConfigError, "cannot read config file " + path);
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& raw : treval::split(treval::read_text_file(path), '\n')) {
    const std::string line = treval::trim_ascii(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      treval::raise(Errc::ConfigError, "bad config line in " + path + ": " +
                                           line + " (expected key = value)");
    }
    entries.emplace_back(treval::trim_ascii(line.substr(0, eq)),
                         unquote(treval::trim_ascii(line.substr(eq + 1))));
  }
  return entries;
}

// CLI11 reads a config file attached to a subcommand but never applies
// its values (config processing only runs for the top-level command),
// so --config FILE is expanded into --key=value tokens ahead of
// parsing. Keys already present as flags are skipped; that is what
// makes explicit flags win.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::size_t config_at = args.size();
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) {
        treval::raise(Errc::ConfigError, "--config requires a file path");
      }
      config_at = i;
      path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_at = i;
      path = args[i].substr(std::string("--config=").size());
      break;
    }
  }
  if (config_at == args.size()) return args;

  std::set<std::string> given;
  for (const auto& token : args) {
    const std::string name = flag_name(token);
    if (!name.empty()) given.insert(name);
  }

  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config_entries(path)) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '-', '_');
    if (given.count(name) > 0) continue;
    injected.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(config_at),
              injected.begin(), injected.end());
  return args;
}

// The tokens the file expands to belong to whichever subcommand the
// --config flag follows, so each subcommand declares the flag itself.
void add_config_option(CLI::App* cmd) {
  static std::string sink;
  cmd->add_option("--config", sink,
                  "file with key = value lines mirroring these flags; "
                  "explicit flags win");
}

void add_perturb_knobs(CLI::App* cmd, treval::PerturbConfig* config) {
  cmd->add_option("--min_word_len,--min-word-len", config->min_word_len,
                  "shortest word eligible for misspelling");
  cmd->add_option("--swap_window,--swap-window", config->swap_window,
                  "max index distance of a swapped pair");
  cmd->add_option("--edits_per_word,--edits-per-word", config->edits_per_word,
                  "character edits per misspelled word");
}

void add_decoding_flags(CLI::App* cmd, treval::Decoding* decoding) {
  cmd->add_option("--max_new_tokens,--max-new-tokens", decoding->max_new_tokens,
                  "generation token budget");
  cmd->add_option("--temperature", decoding->temperature, "sampling temperature");
  cmd->add_option("--top_p,--top-p", decoding->top_p, "nucleus sampling mass");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"word-level robustness evaluation for LLM endpoints"};
  app.require_subcommand(1);

  SelectArgs select_args;
  auto* select = app.add_subcommand("select", "pick open questions from a corpus");
  add_config_option(select);
  select->add_option("--in", select_args.in, "corpus file")->required();
  select->add_option("--format", select_args.format,
                     "lines|questions_jsonl|clean_jsonl");
  select->add_option("--k", select_args.k, "number of prompts (0 = all)");
  select->add_option("--answers", select_args.answers,
                     "jsonl with {prompt_id, answer} rows for ranking");
  select->add_option("--ranking_model,--ranking-model", select_args.ranking_model,
                     "label recorded for the answer source");
  select->add_option("--out", select_args.out, "output prompts file");
  select->add_option("--report", select_args.report, "selection report file");

  PerturbArgs perturb_args;
  auto* perturb = app.add_subcommand("perturb", "emit an attack corpus");
  add_config_option(perturb);
  perturb->add_option("--in", perturb_args.in, "prompts file")->required();
  perturb->add_option("--format", perturb_args.format,
                      "lines|questions_jsonl|clean_jsonl");
  perturb->add_option("--kind", perturb_args.kind,
                      "misspelling|swapping|synonym|all");
  perturb->add_option("--level", perturb_args.level, "1|2|3 (0 = all)");
  perturb->add_option("--seed,--seed_base,--seed-base", perturb_args.seed,
                      "seed base for deterministic attacks");
  perturb->add_option("--lexicon", perturb_args.lexicon, "synonym lexicon tsv");
  perturb->add_option("--out_dir,--out-dir", perturb_args.out_dir,
                      "output directory");
  add_perturb_knobs(perturb, &perturb_args.config);

  GenerateArgs generate_args;
  auto* generate = app.add_subcommand("generate", "one completion, for debugging");
  add_config_option(generate);
  generate->add_option("--prompt", generate_args.prompt, "question text")->required();
  generate->add_option("--model", generate_args.model, "generation model id");
  generate->add_option("--gen_base,--gen-base", generate_args.base,
                       "generation endpoint base url");
  generate->add_option("--template", generate_args.tmpl, "conversation|bare");
  add_decoding_flags(generate, &generate_args.decoding);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "one score, for debugging");
  add_config_option(score);
  score->add_option("--prompt", score_args.prompt, "question text")->required();
  score->add_option("--answer", score_args.answer, "answer text")->required();
  score->add_option("--model", score_args.model, "scorer model id");
  score->add_option("--base", score_args.base, "scorer endpoint base url");
  score->add_option("--metric", score_args.metric, "reward|cost");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "full evaluation pipeline");
  add_config_option(run);
  run->add_option("--prompts,--in", run_args.config.prompts_path, "corpus file")
      ->required();
  run->add_option("--format", run_args.format,
                  "lines|questions_jsonl|clean_jsonl");
  run->add_option("--k", run_args.config.k, "prompts to select (0 = all)");
  run->add_option("--model", run_args.config.model_id, "generation model id");
  run->add_option("--gen_base,--gen-base", run_args.config.gen_base,
                  "generation endpoint");
  run->add_option("--reward_base,--reward-base", run_args.config.reward_base,
                  "reward scorer endpoint");
  run->add_option("--cost_base,--cost-base", run_args.config.cost_base,
                  "cost scorer endpoint");
  run->add_option("--reward_model,--reward-model", run_args.config.reward_model,
                  "reward scorer model id");
  run->add_option("--cost_model,--cost-model", run_args.config.cost_model,
                  "cost scorer model id");
  run->add_option("--template", run_args.tmpl, "conversation|bare");
  add_decoding_flags(run, &run_args.config.decoding);
  run->add_option("--decode_seed,--decode-seed", run_args.decode_seed,
                  "decoding seed passed through verbatim (-1 = unset)");
  run->add_option("--seed_base,--seed-base", run_args.config.seed_base,
                  "seed base for deterministic attacks");
  run->add_option("--kinds", run_args.kinds, "comma list or 'all'");
  run->add_option("--levels", run_args.levels, "comma list or 'all'");
  run->add_option("--normalization", run_args.normalization,
                  "identity|minmax_0_100");
  run->add_option("--lexicon", run_args.config.lexicon_path,
                  "synonym lexicon tsv");
  add_perturb_knobs(run, &run_args.config.perturb);
  run->add_option("--hist_bins,--hist-bins", run_args.config.hist_bins,
                  "histogram bin count");
  run->add_option("--concurrency", run_args.config.concurrency,
                  "worker threads per endpoint");
  run->add_option("--out_root,--out-root", run_args.config.out_root,
                  "parent directory for run dirs");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "rebuild report artifacts");
  add_config_option(report);
  report->add_option("--run", report_args.run_dir, "run directory")->required();
  report->add_option("--normalization", report_args.normalization,
                     "identity|minmax_0_100 (default: the run's setting)");
  report->add_option("--bins", report_args.bins,
                     "histogram bin count override (0 = run's setting)");

  CaseArgs case_args;
  auto* case_cmd = app.add_subcommand("case", "per-prompt clean vs attack record");
  add_config_option(case_cmd);
  case_cmd->add_option("--run", case_args.run_dir, "run directory")->required();
  case_cmd->add_option("--prompt_id,--prompt-id", case_args.prompt_id,
                       "prompt id (16 hex)");
  case_cmd->add_option("--text", case_args.text,
                       "clean prompt text (id is derived)");
  case_cmd->add_flag("--json", case_args.as_json, "emit JSON instead of markdown");

  HistArgs hist_args;
  auto* hist = app.add_subcommand("hist", "print one histogram CSV");
  add_config_option(hist);
  hist->add_option("--run", hist_args.run_dir, "run directory")->required();
  hist->add_option("--metric", hist_args.metric, "reward|cost");
  hist->add_option("--kind", hist_args.kind, "misspelling|swapping|synonym");
  hist->add_option("--level", hist_args.level, "1|2|3");

  MockServeArgs mock_args;
  auto* mock = app.add_subcommand("mock-serve", "local generator + scorer endpoints");
  add_config_option(mock);
  mock->add_option("--gen_port,--gen-port", mock_args.gen_port, "generator port");
  mock->add_option("--reward_port,--reward-port", mock_args.reward_port,
                   "reward scorer port");
  mock->add_option("--cost_port,--cost-port", mock_args.cost_port,
                   "cost scorer port");
  mock->add_option("--gen_mode,--gen-mode", mock_args.gen_mode, "echo|reverse");
  mock->add_option("--scorer_mode,--scorer-mode", mock_args.scorer_mode,
                   "length|edit-similarity|table");
  mock->add_option("--references", mock_args.references,
                   "reference texts (one per line) for edit-similarity");
  mock->add_option("--fail_first,--fail-first", mock_args.fail_first,
                   "respond HTTP 500 to this many requests first");

  std::vector<std::string> args;
  try {
    args = expand_config_args(argc, argv);
  } catch (const treval::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  // CLI11's vector overload consumes tokens back to front.
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (select->parsed()) return cmd_select(select_args);
    if (perturb->parsed()) return cmd_perturb(perturb_args);
    if (generate->parsed()) return cmd_generate(generate_args);
    if (score->parsed()) return cmd_score(score_args);
    if (run->parsed()) return cmd_run(run_args);
    if (report->parsed()) return cmd_report(report_args);
    if (case_cmd->parsed()) return cmd_case(case_args);
    if (hist->parsed()) return cmd_hist(hist_args);
    if (mock->parsed()) return cmd_mock_serve(mock_args);
  } catch (const treval::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
