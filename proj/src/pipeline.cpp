#include "treval/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "treval/error.hpp"
#include "treval/hash.hpp"
#include "treval/jsonl.hpp"

namespace treval {

namespace {

namespace fs = std::filesystem;

std::string now_utc_iso() {
  const std::time_t now = std::time(nullptr);
  std::tm parts{};
  gmtime_r(&now, &parts);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buf;
}

std::string variant_id_for(PerturbationKind kind, int level) {
  return std::string(to_string(kind)) + ":" + std::to_string(level);
}

// One generation/scoring slot: the clean prompt or one attack variant.
struct VariantRef {
  std::string prompt_id;
  std::string variant_id;  // "clean" or "<kind>:<level>"
  std::string kind;        // empty for clean
  int level = 0;           // 0 for clean
  std::string text;
};

struct GenerationRow {
  std::string key;
  VariantRef ref;
  std::string rendered;
  std::string answer;
  int latency_ms = 0;
  int retries = 0;

  json to_json() const {
    json j{{"key", key},
           {"prompt_id", ref.prompt_id},
           {"variant_id", ref.variant_id},
           {"text", ref.text},
           {"rendered", rendered},
           {"answer", answer},
           {"latency_ms", latency_ms},
           {"retries", retries}};
    if (!ref.kind.empty()) {
      j["kind"] = ref.kind;
      j["level"] = ref.level;
    }
    return j;
  }
};

struct ScoreRow {
  std::string prompt_id;
  std::string variant_id;
  std::string kind;
  int level = 0;
  std::string gen_key;
  std::string reward_key;
  std::string cost_key;
  double reward = 0.0;
  double cost = 0.0;

  json to_json() const {
    json j{{"prompt_id", prompt_id}, {"variant_id", variant_id},
           {"gen_key", gen_key},     {"reward_key", reward_key},
           {"cost_key", cost_key},   {"reward", reward},
           {"cost", cost}};
    if (!kind.empty()) {
      j["kind"] = kind;
      j["level"] = level;
    }
    return j;
  }

  static ScoreRow from_json(const json& j) {
    ScoreRow r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.variant_id = j.at("variant_id").get<std::string>();
    r.kind = j.value("kind", "");
    r.level = j.value("level", 0);
    r.gen_key = j.value("gen_key", "");
    r.reward_key = j.value("reward_key", "");
    r.cost_key = j.value("cost_key", "");
    r.reward = j.at("reward").get<double>();
    r.cost = j.at("cost").get<double>();
    return r;
  }
};

void save_manifest(const std::string& run_dir, const RunManifest& manifest) {
  write_file_atomic((fs::path(run_dir) / "manifest.json").string(),
                    manifest.to_json().dump(2) + "\n");
}

RunManifest load_manifest(const std::string& run_dir) {
  const std::string path = (fs::path(run_dir) / "manifest.json").string();
  if (!file_exists(path)) {
    raise(Errc::IoError, "no manifest.json in " + run_dir);
  }
  const json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) raise(Errc::ParseError, path + ": invalid JSON");
  return RunManifest::from_json(j);
}

// Failure records for `stage` are replaced wholesale; other stages'
// records are preserved in place. Keeps re-runs byte-identical.
void rewrite_stage_failures(const std::string& run_dir,
                            const std::string& stage,
                            const std::vector<FailureRecord>& records) {
  const std::string path = (fs::path(run_dir) / "failures.jsonl").string();
  std::vector<json> rows;
  if (file_exists(path)) {
    for (const auto& row : read_jsonl(path)) {
      if (row.value("stage", "") != stage) rows.push_back(row);
    }
  }
  for (const auto& r : records) rows.push_back(r.to_json());
  write_jsonl(path, rows);
  std::error_code ec;
  fs::remove(fs::path(run_dir) / "failures.jsonl.partial", ec);
}

void append_partial(std::mutex& m, const std::string& path, const json& row) {
  std::lock_guard<std::mutex> lock(m);
  append_jsonl(path, row);
}

// Runs fn(0..n-1) on `workers` threads. fn must not throw; stage code
// converts per-record errors into failure records instead.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int count = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) {
    threads.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace

json RunConfig::snapshot() const {
  json kind_names = json::array();
  for (const auto kind : kinds) kind_names.push_back(to_string(kind));
  return json{{"prompts_path", prompts_path},
              {"format", treval::to_string(format)},
              {"k", k},
              {"model_id", model_id},
              {"gen_base", gen_base},
              {"reward_base", reward_base},
              {"cost_base", cost_base},
              {"reward_model", reward_model},
              {"cost_model", cost_model},
              {"template", treval::to_string(style)},
              {"decoding", decoding.to_json()},
              {"seed_base", seed_base},
              {"kinds", std::move(kind_names)},
              {"levels", levels},
              {"normalization", treval::to_string(normalization)},
              {"lexicon_path", lexicon_path},
              {"perturb",
               json{{"min_word_len", perturb.min_word_len},
                    {"swap_window", perturb.swap_window},
                    {"edits_per_word", perturb.edits_per_word}}},
              {"hist_bins", hist_bins}};
}

std::string RunConfig::run_id() const {
  return sha256_hex(snapshot().dump()).substr(0, 16);
}

RunConfig RunConfig::from_snapshot(const json& snapshot) {
  RunConfig c;
  c.prompts_path = snapshot.value("prompts_path", "");
  c.format = corpus_format_from_string(snapshot.value("format", "lines"));
  c.k = snapshot.value("k", std::size_t{0});
  c.model_id = snapshot.value("model_id", "mock-llm");
  c.gen_base = snapshot.value("gen_base", "");
  c.reward_base = snapshot.value("reward_base", "");
  c.cost_base = snapshot.value("cost_base", "");
  c.reward_model = snapshot.value("reward_model", "reward-model");
  c.cost_model = snapshot.value("cost_model", "cost-model");
  c.style = template_style_from_string(snapshot.value("template", "bare"));
  if (snapshot.contains("decoding")) {
    c.decoding = Decoding::from_json(snapshot["decoding"]);
  }
  c.seed_base = snapshot.value("seed_base", std::uint64_t{7});
  if (snapshot.contains("kinds")) {
    c.kinds.clear();
    for (const auto& name : snapshot["kinds"]) {
      c.kinds.push_back(kind_from_string(name.get<std::string>()));
    }
  }
  if (snapshot.contains("levels")) {
    c.levels = snapshot["levels"].get<std::vector<int>>();
  }
  c.normalization =
      normalization_from_string(snapshot.value("normalization", "identity"));
  c.lexicon_path = snapshot.value("lexicon_path", "");
  if (snapshot.contains("perturb")) {
    const json& p = snapshot["perturb"];
    c.perturb.min_word_len = p.value("min_word_len", std::size_t{2});
    c.perturb.swap_window = p.value("swap_window", std::size_t{5});
    c.perturb.edits_per_word = p.value("edits_per_word", 1);
  }
  c.hist_bins = snapshot.value("hist_bins", std::size_t{10});
  return c;
}

void RunConfig::apply_env() {
  if (gen_base.empty()) gen_base = env_or("TREVAL_GEN_BASE", "");
  if (reward_base.empty()) reward_base = env_or("TREVAL_REWARD_BASE", "");
  if (cost_base.empty()) cost_base = env_or("TREVAL_COST_BASE", "");
  if (api_key.empty()) api_key = env_or("TREVAL_API_KEY", "");
}

json RunManifest::to_json() const {
  return json{{"run_id", run_id},
              {"created_at", created_at},
              {"config", config},
              {"stages",
               json{{"selected", stages.selected},
                    {"perturbed", stages.perturbed},
                    {"generated", stages.generated},
                    {"scored", stages.scored},
                    {"reported", stages.reported}}}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.created_at = j.at("created_at").get<std::string>();
  m.config = j.at("config");
  const json& s = j.at("stages");
  m.stages.selected = s.value("selected", false);
  m.stages.perturbed = s.value("perturbed", false);
  m.stages.generated = s.value("generated", false);
  m.stages.scored = s.value("scored", false);
  m.stages.reported = s.value("reported", false);
  return m;
}

std::string generation_cache_key(const std::string& model_id,
                                 const std::string& rendered_prompt,
                                 const Decoding& decoding) {
  return tagged_digest("gen", {model_id, rendered_prompt, decoding.canonical()});
}

std::string score_cache_key(const std::string& scorer_id,
                            const std::string& prompt_text,
                            const std::string& answer_text,
                            ScoreMetric metric) {
  return tagged_digest("score",
                       {scorer_id, prompt_text, answer_text, to_string(metric)});
}

namespace {

void validate_run_config(const RunConfig& config) {
  if (config.prompts_path.empty()) {
    raise(Errc::ConfigError, "prompts_path is required");
  }
  if (config.gen_base.empty() || config.reward_base.empty() ||
      config.cost_base.empty()) {
    raise(Errc::ConfigError,
          "gen_base, reward_base and cost_base are all required "
          "(flags, config file, or TREVAL_*_BASE)");
  }
  if (config.kinds.empty()) raise(Errc::ConfigError, "kinds must be non-empty");
  if (config.levels.empty()) {
    raise(Errc::ConfigError, "levels must be non-empty");
  }
  std::set<int> seen_levels;
  for (int level : config.levels) {
    PerturbationLevel::from_int(level);
    if (!seen_levels.insert(level).second) {
      raise(Errc::ConfigError, "duplicate level " + std::to_string(level));
    }
  }
  std::set<int> seen_kinds;
  for (const auto kind : config.kinds) {
    if (!seen_kinds.insert(kind_index(kind)).second) {
      raise(Errc::ConfigError,
            std::string("duplicate kind ") + to_string(kind));
    }
  }
  if (config.concurrency < 1) {
    raise(Errc::ConfigError, "concurrency must be >= 1");
  }
  if (config.hist_bins == 0) {
    raise(Errc::ConfigError, "hist_bins must be >= 1");
  }
  if (config.model_id.empty()) raise(Errc::ConfigError, "model_id is required");
}

std::vector<Prompt> read_clean(const std::string& run_dir) {
  std::vector<Prompt> prompts;
  for (const auto& row :
       read_jsonl((fs::path(run_dir) / "clean.jsonl").string())) {
    prompts.push_back(Prompt::from_json(row));
  }
  return prompts;
}

std::map<std::pair<std::string, std::string>, PerturbedPrompt> read_attacks(
    const std::string& run_dir) {
  std::map<std::pair<std::string, std::string>, PerturbedPrompt> attacks;
  const std::string path = (fs::path(run_dir) / "attacks.jsonl").string();
  if (!file_exists(path)) return attacks;
  for (const auto& row : read_jsonl(path)) {
    PerturbedPrompt p = PerturbedPrompt::from_json(row);
    attacks[{p.prompt_id, variant_id_for(p.kind, p.level)}] = std::move(p);
  }
  return attacks;
}

// ---- select ---------------------------------------------------------

struct SelectOutcome {
  std::vector<Prompt> selected;
  std::size_t ranking_cache_hits = 0;
};

SelectOutcome stage_select(const RunConfig& config, const std::string& run_dir,
                           RunManifest& manifest) {
  SelectOutcome outcome;
  const std::string clean_path = (fs::path(run_dir) / "clean.jsonl").string();
  if (manifest.stages.selected) {
    outcome.selected = read_clean(run_dir);
    return outcome;
  }

  const auto candidates = load_prompts(config.prompts_path, config.format);
  SelectionReport report;
  std::vector<FailureRecord> failures;

  if (config.k == 0 || config.k == candidates.size()) {
    // Whole corpus: no ranking pass, no model involved.
    outcome.selected = candidates;
    report.candidate_count = candidates.size();
    report.selected_count = candidates.size();
    report.ranking_model = "none";
  } else {
    // Rank candidates by the length of an answer drawn from the model
    // under evaluation; answers are cached like any other generation.
    const std::string ranking_path =
        (fs::path(run_dir) / "ranking_answers.jsonl").string();
    const std::string partial_path = ranking_path + ".partial";
    std::map<std::string, json> cache;
    for (const std::string& path : {ranking_path, partial_path}) {
      if (!file_exists(path)) continue;
      for (const auto& row : read_jsonl(path)) {
        cache[row.at("key").get<std::string>()] = row;
      }
    }

    const EndpointClient client(config.gen_base, config.retry, config.api_key);
    std::vector<GenerationRow> rows(candidates.size());
    std::vector<bool> ok(candidates.size(), false);
    std::vector<FailureRecord> slot_failures(candidates.size());
    std::vector<bool> failed(candidates.size(), false);
    std::mutex io_mutex;
    std::mutex cache_mutex;
    std::atomic<std::size_t> hits{0};

    parallel_for(candidates.size(), config.concurrency, [&](std::size_t i) {
      const Prompt& prompt = candidates[i];
      GenerationRow row;
      row.ref = {prompt.id, "clean", "", 0, prompt.text};
      row.rendered = render_prompt(prompt.text, config.style);
      row.key =
          generation_cache_key(config.model_id, row.rendered, config.decoding);
      {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find(row.key);
        if (it != cache.end()) {
          row.answer = it->second.at("answer").get<std::string>();
          row.latency_ms = it->second.value("latency_ms", 0);
          row.retries = it->second.value("retries", 0);
          rows[i] = std::move(row);
          ok[i] = true;
          ++hits;
          return;
        }
      }
      try {
        const GenerationResult result =
            client.generate(config.model_id, row.rendered, config.decoding);
        row.answer = result.answer;
        row.latency_ms = result.latency_ms;
        row.retries = result.retries;
        append_partial(io_mutex, partial_path, row.to_json());
        {
          std::lock_guard<std::mutex> lock(cache_mutex);
          cache[row.key] = row.to_json();
        }
        rows[i] = std::move(row);
        ok[i] = true;
      } catch (const Error& e) {
        FailureRecord record;
        record.stage = "select";
        record.prompt_id = prompt.id;
        record.reason = errc_name(e.code());
        record.detail = e.what();
        slot_failures[i] = std::move(record);
        failed[i] = true;
      }
    });

    outcome.ranking_cache_hits = hits.load();
    std::vector<json> ledger_rows;
    std::vector<Prompt> answered;
    std::map<std::string, std::string> answers;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (failed[i]) {
        failures.push_back(std::move(slot_failures[i]));
        continue;
      }
      if (!ok[i]) continue;
      ledger_rows.push_back(rows[i].to_json());
      answered.push_back(candidates[i]);
      answers[candidates[i].id] = rows[i].answer;
    }
    write_jsonl(ranking_path, ledger_rows);
    std::error_code ec;
    fs::remove(partial_path, ec);

    if (answered.size() < config.k) {
      rewrite_stage_failures(run_dir, "select", failures);
      raise(Errc::KTooLarge,
            "k=" + std::to_string(config.k) + " but only " +
                std::to_string(answered.size()) + " candidates have answers");
    }
    auto [selected, sel_report] =
        select_open_questions(answered, answers, config.k, config.model_id);
    outcome.selected = std::move(selected);
    report = sel_report;
  }

  std::vector<json> clean_rows;
  for (const auto& p : outcome.selected) clean_rows.push_back(p.to_json());
  write_jsonl(clean_path, clean_rows);
  write_file_atomic((fs::path(run_dir) / "selection_report.json").string(),
                    report.to_json().dump(2) + "\n");
  rewrite_stage_failures(run_dir, "select", failures);
  manifest.stages.selected = true;
  save_manifest(run_dir, manifest);
  return outcome;
}

// ---- perturb --------------------------------------------------------

void stage_perturb(const RunConfig& config, const std::string& run_dir,
                   const std::vector<Prompt>& prompts, RunManifest& manifest) {
  if (manifest.stages.perturbed) return;

  SynonymLexicon lexicon;
  if (!config.lexicon_path.empty()) {
    lexicon = SynonymLexicon::load(config.lexicon_path);
  }

  std::vector<json> attack_rows;
  std::vector<FailureRecord> failures;
  for (const auto& prompt : prompts) {
    for (const auto kind : config.kinds) {
      for (const int level : config.levels) {
        const std::uint64_t seed =
            derive_perturbation_seed(config.seed_base, prompt.id, kind, level);
        try {
          PerturbedPrompt variant =
              perturb(prompt.text, kind, PerturbationLevel::from_int(level),
                      seed, lexicon, config.perturb);
          variant.prompt_id = prompt.id;
          attack_rows.push_back(variant.to_json());
        } catch (const Error& e) {
          FailureRecord record;
          record.stage = "perturb";
          record.prompt_id = prompt.id;
          record.kind = to_string(kind);
          record.level = level;
          record.variant_id = variant_id_for(kind, level);
          record.reason = errc_name(e.code());
          record.detail = e.what();
          failures.push_back(std::move(record));
        }
      }
    }
  }

  rewrite_stage_failures(run_dir, "perturb", failures);
  if (attack_rows.empty()) {
    raise(Errc::StageIncomplete,
          "stage 'perturbed' produced zero attack variants");
  }
  write_jsonl((fs::path(run_dir) / "attacks.jsonl").string(), attack_rows);
  manifest.stages.perturbed = true;
  save_manifest(run_dir, manifest);
}

// Canonical variant order: prompt-major; clean first, then kinds and
// levels in config order. Every ledger is rewritten in this order.
std::vector<VariantRef> build_variants(
    const RunConfig& config, const std::vector<Prompt>& prompts,
    const std::map<std::pair<std::string, std::string>, PerturbedPrompt>&
        attacks) {
  std::vector<VariantRef> variants;
  for (const auto& prompt : prompts) {
    variants.push_back({prompt.id, "clean", "", 0, prompt.text});
    for (const auto kind : config.kinds) {
      for (const int level : config.levels) {
        auto it = attacks.find({prompt.id, variant_id_for(kind, level)});
        if (it == attacks.end()) continue;  // quarantined at perturb time
        variants.push_back({prompt.id, variant_id_for(kind, level),
                            to_string(kind), level, it->second.text});
      }
    }
  }
  return variants;
}

// ---- generate -------------------------------------------------------

struct GenerateOutcome {
  std::vector<GenerationRow> rows;
  std::size_t cache_hits = 0;
};

GenerateOutcome stage_generate(const RunConfig& config,
                               const std::string& run_dir,
                               const std::vector<VariantRef>& variants,
                               RunManifest& manifest) {
  GenerateOutcome outcome;
  const std::string ledger_path =
      (fs::path(run_dir) / "generations.jsonl").string();
  const std::string partial_path = ledger_path + ".partial";

  if (manifest.stages.generated) {
    for (const auto& row : read_jsonl(ledger_path)) {
      GenerationRow r;
      r.key = row.at("key").get<std::string>();
      r.ref = {row.at("prompt_id").get<std::string>(),
               row.at("variant_id").get<std::string>(), row.value("kind", ""),
               row.value("level", 0), row.at("text").get<std::string>()};
      r.rendered = row.at("rendered").get<std::string>();
      r.answer = row.at("answer").get<std::string>();
      r.latency_ms = row.value("latency_ms", 0);
      r.retries = row.value("retries", 0);
      outcome.rows.push_back(std::move(r));
    }
    outcome.cache_hits = outcome.rows.size();
    return outcome;
  }

  struct CachedAnswer {
    std::string answer;
    int latency_ms = 0;
    int retries = 0;
  };
  std::map<std::string, CachedAnswer> cache;
  const std::string ranking_path =
      (fs::path(run_dir) / "ranking_answers.jsonl").string();
  for (const std::string& path : {ledger_path, partial_path, ranking_path}) {
    if (!file_exists(path)) continue;
    for (const auto& row : read_jsonl(path)) {
      cache[row.at("key").get<std::string>()] = {
          row.at("answer").get<std::string>(), row.value("latency_ms", 0),
          row.value("retries", 0)};
    }
  }

  const EndpointClient client(config.gen_base, config.retry, config.api_key);
  std::vector<GenerationRow> rows(variants.size());
  std::vector<bool> ok(variants.size(), false);
  std::vector<FailureRecord> slot_failures(variants.size());
  std::vector<bool> failed(variants.size(), false);
  std::mutex io_mutex;
  std::mutex cache_mutex;
  std::atomic<std::size_t> hits{0};

  parallel_for(variants.size(), config.concurrency, [&](std::size_t i) {
    const VariantRef& ref = variants[i];
    GenerationRow row;
    row.ref = ref;
    row.rendered = render_prompt(ref.text, config.style);
    row.key =
        generation_cache_key(config.model_id, row.rendered, config.decoding);
    {
      std::lock_guard<std::mutex> lock(cache_mutex);
      auto it = cache.find(row.key);
      if (it != cache.end()) {
        row.answer = it->second.answer;
        row.latency_ms = it->second.latency_ms;
        row.retries = it->second.retries;
        rows[i] = std::move(row);
        ok[i] = true;
        ++hits;
        return;
      }
    }
    try {
      const GenerationResult result =
          client.generate(config.model_id, row.rendered, config.decoding);
      row.answer = result.answer;
      row.latency_ms = result.latency_ms;
      row.retries = result.retries;
      append_partial(io_mutex, partial_path, row.to_json());
      {
        std::lock_guard<std::mutex> lock(cache_mutex);
        cache[row.key] = {row.answer, row.latency_ms, row.retries};
      }
      rows[i] = std::move(row);
      ok[i] = true;
    } catch (const Error& e) {
      FailureRecord record;
      record.stage = "generate";
      record.prompt_id = ref.prompt_id;
      record.kind = ref.kind;
      record.level = ref.level;
      record.variant_id = ref.variant_id;
      record.reason = errc_name(e.code());
      record.detail = e.what();
      slot_failures[i] = std::move(record);
      failed[i] = true;
    }
  });

  std::vector<FailureRecord> failures;
  std::vector<json> ledger_rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (failed[i]) {
      failures.push_back(std::move(slot_failures[i]));
      continue;
    }
    if (!ok[i]) continue;
    ledger_rows.push_back(rows[i].to_json());
    outcome.rows.push_back(std::move(rows[i]));
  }
  outcome.cache_hits = hits.load();

  rewrite_stage_failures(run_dir, "generate", failures);
  if (outcome.rows.empty()) {
    raise(Errc::StageIncomplete, "stage 'generated' produced zero answers");
  }
  write_jsonl(ledger_path, ledger_rows);
  std::error_code ec;
  fs::remove(partial_path, ec);
  manifest.stages.generated = true;
  save_manifest(run_dir, manifest);
  return outcome;
}

// ---- score ----------------------------------------------------------

struct ScoreOutcome {
  std::vector<ScoreRow> rows;
  std::size_t cache_hits = 0;  // generations whose both scalars were cached
};

ScoreOutcome stage_score(const RunConfig& config, const std::string& run_dir,
                         const std::vector<GenerationRow>& generations,
                         RunManifest& manifest) {
  ScoreOutcome outcome;
  const std::string ledger_path = (fs::path(run_dir) / "scores.jsonl").string();
  const std::string partial_path = ledger_path + ".partial";

  if (manifest.stages.scored) {
    for (const auto& row : read_jsonl(ledger_path)) {
      outcome.rows.push_back(ScoreRow::from_json(row));
    }
    outcome.cache_hits = outcome.rows.size();
    return outcome;
  }

  std::map<std::string, double> scalar_cache;
  for (const std::string& path : {ledger_path, partial_path}) {
    if (!file_exists(path)) continue;
    for (const auto& row : read_jsonl(path)) {
      const ScoreRow r = ScoreRow::from_json(row);
      if (!r.reward_key.empty()) scalar_cache[r.reward_key] = r.reward;
      if (!r.cost_key.empty()) scalar_cache[r.cost_key] = r.cost;
    }
  }

  const EndpointClient reward_client(config.reward_base, config.retry,
                                     config.api_key);
  const EndpointClient cost_client(config.cost_base, config.retry,
                                   config.api_key);

  std::vector<ScoreRow> rows(generations.size());
  std::vector<bool> ok(generations.size(), false);
  // Up to two failure records per generation, one per lost scalar.
  std::vector<std::vector<FailureRecord>> slot_failures(generations.size());
  std::mutex io_mutex;
  std::mutex cache_mutex;
  std::atomic<std::size_t> hits{0};

  auto scalar = [&](const EndpointClient& client, const std::string& model,
                    const GenerationRow& gen, ScoreMetric metric,
                    const std::string& key, bool* cached) {
    {
      std::lock_guard<std::mutex> lock(cache_mutex);
      auto it = scalar_cache.find(key);
      if (it != scalar_cache.end()) {
        *cached = true;
        return it->second;
      }
    }
    *cached = false;
    const double value =
        client.score(model, gen.ref.text, gen.answer, metric);
    std::lock_guard<std::mutex> lock(cache_mutex);
    scalar_cache[key] = value;
    return value;
  };

  parallel_for(generations.size(), config.concurrency, [&](std::size_t i) {
    const GenerationRow& gen = generations[i];
    ScoreRow row;
    row.prompt_id = gen.ref.prompt_id;
    row.variant_id = gen.ref.variant_id;
    row.kind = gen.ref.kind;
    row.level = gen.ref.level;
    row.gen_key = gen.key;
    row.reward_key = score_cache_key(config.reward_model, gen.ref.text,
                                     gen.answer, ScoreMetric::Reward);
    row.cost_key = score_cache_key(config.cost_model, gen.ref.text, gen.answer,
                                   ScoreMetric::Cost);

    auto fail = [&](ScoreMetric metric, Errc code, const std::string& detail) {
      FailureRecord record;
      record.stage = "score";
      record.prompt_id = gen.ref.prompt_id;
      record.kind = gen.ref.kind;
      record.level = gen.ref.level;
      record.variant_id = gen.ref.variant_id;
      record.reason = errc_name(code);
      record.detail = std::string(to_string(metric)) + ": " + detail;
      slot_failures[i].push_back(std::move(record));
    };

    bool reward_cached = false;
    bool cost_cached = false;
    bool reward_ok = false;
    bool cost_ok = false;
    try {
      row.reward = scalar(reward_client, config.reward_model, gen,
                          ScoreMetric::Reward, row.reward_key, &reward_cached);
      reward_ok = true;
    } catch (const Error& e) {
      fail(ScoreMetric::Reward, e.code(), e.what());
    }
    try {
      row.cost = scalar(cost_client, config.cost_model, gen, ScoreMetric::Cost,
                        row.cost_key, &cost_cached);
      cost_ok = true;
    } catch (const Error& e) {
      fail(ScoreMetric::Cost, e.code(), e.what());
    }

    if (reward_ok && cost_ok) {
      if (reward_cached && cost_cached) ++hits;
      append_partial(io_mutex, partial_path, row.to_json());
      rows[i] = std::move(row);
      ok[i] = true;
      return;
    }
    // The pair is quarantined whole; a scalar that succeeded while its
    // partner failed is recorded too, so score counts stay conserved.
    if (reward_ok) {
      fail(ScoreMetric::Reward, Errc::PartialScores,
           "discarded: the cost request for this answer failed");
    }
    if (cost_ok) {
      fail(ScoreMetric::Cost, Errc::PartialScores,
           "discarded: the reward request for this answer failed");
    }
  });

  std::vector<FailureRecord> failures;
  std::vector<json> ledger_rows;
  for (std::size_t i = 0; i < generations.size(); ++i) {
    for (auto& record : slot_failures[i]) failures.push_back(std::move(record));
    if (!ok[i]) continue;
    ledger_rows.push_back(rows[i].to_json());
    outcome.rows.push_back(std::move(rows[i]));
  }
  outcome.cache_hits = hits.load();

  rewrite_stage_failures(run_dir, "score", failures);
  if (outcome.rows.empty()) {
    raise(Errc::StageIncomplete, "stage 'scored' produced zero score pairs");
  }
  write_jsonl(ledger_path, ledger_rows);
  std::error_code ec;
  fs::remove(partial_path, ec);
  manifest.stages.scored = true;
  save_manifest(run_dir, manifest);
  return outcome;
}

std::size_t count_failures(const std::string& run_dir) {
  const std::string path = (fs::path(run_dir) / "failures.jsonl").string();
  if (!file_exists(path)) return 0;
  return read_jsonl(path).size();
}

}  // namespace

RunResult run(const RunConfig& config) {
  validate_run_config(config);
  const std::string id = config.run_id();
  const fs::path run_dir = fs::path(config.out_root) / id;
  fs::create_directories(run_dir);

  RunManifest manifest;
  const std::string manifest_path = (run_dir / "manifest.json").string();
  if (file_exists(manifest_path)) {
    manifest = load_manifest(run_dir.string());
    if (manifest.run_id != id) {
      raise(Errc::ConfigError, "manifest in " + run_dir.string() +
                                   " belongs to run " + manifest.run_id +
                                   ", expected " + id);
    }
  } else {
    manifest.run_id = id;
    manifest.created_at = now_utc_iso();
    manifest.config = config.snapshot();
    save_manifest(run_dir.string(), manifest);
  }

  RunResult result;
  result.run_dir = run_dir.string();

  const SelectOutcome selected = stage_select(config, result.run_dir, manifest);
  result.prompts = selected.selected.size();

  stage_perturb(config, result.run_dir, selected.selected, manifest);
  const auto attacks = read_attacks(result.run_dir);
  const auto variants = build_variants(config, selected.selected, attacks);

  const GenerateOutcome generated =
      stage_generate(config, result.run_dir, variants, manifest);
  result.generations = generated.rows.size();
  result.generation_cache_hits =
      generated.cache_hits + selected.ranking_cache_hits;

  const ScoreOutcome scored =
      stage_score(config, result.run_dir, generated.rows, manifest);
  result.scores = 2 * scored.rows.size();
  result.score_cache_hits = scored.cache_hits;

  write_report(result.run_dir);
  manifest = load_manifest(result.run_dir);
  result.manifest = manifest;
  result.failures = count_failures(result.run_dir);
  return result;
}

RobustnessReport write_report(const std::string& run_dir,
                              std::optional<NormalizationMode> normalization,
                              std::optional<std::size_t> bins) {
  RunManifest manifest = load_manifest(run_dir);
  if (!manifest.stages.scored) {
    raise(Errc::StageIncomplete, "stage 'scored' incomplete");
  }
  const RunConfig config = RunConfig::from_snapshot(manifest.config);
  const NormalizationMode mode = normalization.value_or(config.normalization);
  const std::size_t bin_count = bins.value_or(config.hist_bins);
  if (bin_count == 0) raise(Errc::ConfigError, "hist_bins must be >= 1");

  std::vector<ScoreRow> rows;
  for (const auto& row :
       read_jsonl((fs::path(run_dir) / "scores.jsonl").string())) {
    rows.push_back(ScoreRow::from_json(row));
  }
  if (rows.empty()) {
    raise(Errc::EmptyPopulation, "scores.jsonl holds no rows");
  }

  // Normalization pools the whole run per metric, so clean and attack
  // values land on one shared scale.
  std::vector<double> reward_pool;
  std::vector<double> cost_pool;
  reward_pool.reserve(rows.size());
  cost_pool.reserve(rows.size());
  for (const auto& row : rows) {
    reward_pool.push_back(row.reward);
    cost_pool.push_back(row.cost);
  }
  const std::vector<double> reward_norm = normalize(reward_pool, mode);
  const std::vector<double> cost_norm = normalize(cost_pool, mode);

  std::vector<double> clean_reward;
  std::vector<double> clean_cost;
  std::array<std::array<std::vector<double>, 3>, 3> cell_reward;
  std::array<std::array<std::vector<double>, 3>, 3> cell_cost;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ScoreRow& row = rows[i];
    if (row.variant_id == "clean") {
      clean_reward.push_back(reward_norm[i]);
      clean_cost.push_back(cost_norm[i]);
      continue;
    }
    const int k = kind_index(kind_from_string(row.kind));
    if (row.level < 1 || row.level > 3) {
      raise(Errc::ParseError,
            "score row has level " + std::to_string(row.level));
    }
    cell_reward[k][row.level - 1].push_back(reward_norm[i]);
    cell_cost[k][row.level - 1].push_back(cost_norm[i]);
  }

  RobustnessReport report;
  report.run_id = manifest.run_id;
  report.model_id = config.model_id;
  report.template_style = to_string(config.style);
  report.decoding = config.decoding.to_json();
  report.normalization = to_string(mode);
  report.nondeterministic = config.decoding.temperature > 0.0;
  report.bins = bin_count;

  if (!clean_reward.empty()) {
    report.matrix.clean_mean_reward = mean(clean_reward);
    report.matrix.clean_mean_cost = mean(clean_cost);
    report.matrix.clean_n = clean_reward.size();
  }
  for (int k = 0; k < 3; ++k) {
    for (int l = 0; l < 3; ++l) {
      auto& cell = report.matrix.cells[k][l];
      cell.n = cell_reward[k][l].size();
      if (cell.n > 0) {
        cell.mean_reward = mean(cell_reward[k][l]);
        cell.mean_cost = mean(cell_cost[k][l]);
      }
    }
  }
  report.partial = !report.matrix.complete();
  if (!report.partial) {
    report.drop_rates = build_drop_rate_table(report.matrix);
  }

  const auto pool_range = [](const std::vector<double>& values) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return std::make_pair(*lo, *hi);
  };
  const auto reward_range = pool_range(reward_norm);
  const auto cost_range = pool_range(cost_norm);

  for (const auto kind : all_kinds()) {
    for (int level = 1; level <= 3; ++level) {
      const int k = kind_index(kind);
      if (cell_reward[k][level - 1].empty() || clean_reward.empty()) continue;
      HistogramPair reward_pair{
          histogram(clean_reward, bin_count, reward_range),
          histogram(cell_reward[k][level - 1], bin_count, reward_range)};
      HistogramPair cost_pair{
          histogram(clean_cost, bin_count, cost_range),
          histogram(cell_cost[k][level - 1], bin_count, cost_range)};
      report.histograms[histogram_key("reward", kind, level)] = reward_pair;
      report.histograms[histogram_key("cost", kind, level)] = cost_pair;
      write_file_atomic(
          (fs::path(run_dir) / histogram_file_name("reward", kind, level))
              .string(),
          histogram_csv(reward_pair));
      write_file_atomic(
          (fs::path(run_dir) / histogram_file_name("cost", kind, level))
              .string(),
          histogram_csv(cost_pair));
    }
  }

  write_file_atomic((fs::path(run_dir) / "report.json").string(),
                    report.to_json().dump(2) + "\n");
  write_file_atomic((fs::path(run_dir) / "report.md").string(),
                    report.to_markdown());
  manifest.stages.reported = true;
  save_manifest(run_dir, manifest);
  return report;
}

json case_study(const std::string& run_dir, const std::string& prompt_id) {
  const RunManifest manifest = load_manifest(run_dir);
  if (!manifest.stages.scored) {
    raise(Errc::PartialScores, "stage 'scored' incomplete");
  }
  const RunConfig config = RunConfig::from_snapshot(manifest.config);

  const Prompt* clean = nullptr;
  const auto prompts = read_clean(run_dir);
  for (const auto& p : prompts) {
    if (p.id == prompt_id) {
      clean = &p;
      break;
    }
  }
  if (clean == nullptr) {
    raise(Errc::UnknownPrompt, "prompt " + prompt_id + " is not in this run");
  }

  const auto attacks = read_attacks(run_dir);
  std::map<std::string, std::string> answers;
  for (const auto& row :
       read_jsonl((fs::path(run_dir) / "generations.jsonl").string())) {
    if (row.at("prompt_id").get<std::string>() != prompt_id) continue;
    answers[row.at("variant_id").get<std::string>()] =
        row.at("answer").get<std::string>();
  }
  std::map<std::string, std::pair<double, double>> scores;
  for (const auto& row :
       read_jsonl((fs::path(run_dir) / "scores.jsonl").string())) {
    if (row.at("prompt_id").get<std::string>() != prompt_id) continue;
    scores[row.at("variant_id").get<std::string>()] = {
        row.at("reward").get<double>(), row.at("cost").get<double>()};
  }

  auto clean_score = scores.find("clean");
  if (clean_score == scores.end() || answers.find("clean") == answers.end()) {
    raise(Errc::PartialScores, "prompt " + prompt_id + " has no clean score");
  }
  const double clean_reward = clean_score->second.first;
  const double clean_cost = clean_score->second.second;

  json record{{"prompt_id", prompt_id},
              {"clean", json{{"text", clean->text},
                             {"answer", answers.at("clean")},
                             {"reward", clean_reward},
                             {"cost", clean_cost}}},
              {"variants", json::array()}};

  for (const auto kind : config.kinds) {
    for (const int level : config.levels) {
      const std::string variant_id = variant_id_for(kind, level);
      auto attack = attacks.find({prompt_id, variant_id});
      auto score = scores.find(variant_id);
      auto answer = answers.find(variant_id);
      if (attack == attacks.end() || score == scores.end() ||
          answer == answers.end()) {
        raise(Errc::PartialScores,
              "prompt " + prompt_id + " variant " + variant_id +
                  " is not fully scored");
      }
      json v{{"kind", to_string(kind)},
             {"level", level},
             {"variant_id", variant_id},
             {"text", attack->second.text},
             {"marked_text", mark_changed_words(clean->text,
                                                attack->second.edits)},
             {"answer", answer->second},
             {"reward", score->second.first},
             {"cost", score->second.second},
             {"reward_drop",
              reward_drop_rate(clean_reward, score->second.first)},
             {"cost_drop", cost_drop_rate(clean_cost, score->second.second)}};
      if (attack->second.shortfall > 0) {
        v["shortfall"] = attack->second.shortfall;
      }
      record["variants"].push_back(std::move(v));
    }
  }
  return record;
}

std::string case_study_markdown(const json& record) {
  char buf[64];
  auto fmt = [&buf](double v, int decimals) {
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::string(buf);
  };
  const json& clean = record.at("clean");
  std::string md = "# Case study `" +
                   record.at("prompt_id").get<std::string>() + "`\n\n";
  md += "## clean\n\n";
  md += "Prompt: " + clean.at("text").get<std::string>() + "\n\n";
  md += "Answer: " + clean.at("answer").get<std::string>() + "\n\n";
  md += "Reward: " + fmt(clean.at("reward").get<double>(), 1) +
        "  Cost: " + fmt(clean.at("cost").get<double>(), 1) + "\n";
  for (const auto& v : record.at("variants")) {
    md += "\n## " + v.at("kind").get<std::string>() + " level " +
          std::to_string(v.at("level").get<int>()) + "\n\n";
    md += "Prompt: " + v.at("marked_text").get<std::string>() + "\n\n";
    md += "Answer: " + v.at("answer").get<std::string>() + "\n\n";
    md += "Reward: " + fmt(v.at("reward").get<double>(), 1) + " (DR " +
          fmt(v.at("reward_drop").get<double>(), 2) + "%)  Cost: " +
          fmt(v.at("cost").get<double>(), 1) + " (DR " +
          fmt(v.at("cost_drop").get<double>(), 2) + "%)\n";
  }
  return md;
}

VerifyResult verify_run(const std::string& run_dir) {
  VerifyResult result;
  auto problem = [&result](const std::string& message) {
    result.ok = false;
    result.problems.push_back(message);
  };

  RunManifest manifest;
  try {
    manifest = load_manifest(run_dir);
  } catch (const Error& e) {
    problem(e.what());
    return result;
  }
  RunConfig config;
  try {
    config = RunConfig::from_snapshot(manifest.config);
    if (config.run_id() != manifest.run_id) {
      problem("manifest run_id " + manifest.run_id +
              " does not match its config snapshot (" + config.run_id() + ")");
    }
  } catch (const Error& e) {
    problem(std::string("config snapshot, ") + e.what());
    return result;
  }

  std::set<std::string> prompt_ids;
  if (manifest.stages.selected) {
    for (const auto& p : read_clean(run_dir)) prompt_ids.insert(p.id);
  }

  const auto attacks = read_attacks(run_dir);
  for (const auto& [key, attack] : attacks) {
    if (!prompt_ids.count(key.first)) {
      problem("attack row " + key.first + "/" + key.second +
              " references an unknown prompt");
    }
  }

  std::map<std::string, std::size_t> failures_by_stage;
  const std::string failures_path =
      (fs::path(run_dir) / "failures.jsonl").string();
  if (file_exists(failures_path)) {
    for (const auto& row : read_jsonl(failures_path)) {
      ++failures_by_stage[row.value("stage", "")];
    }
  }

  std::set<std::pair<std::string, std::string>> generation_ids;
  std::size_t generation_count = 0;
  const std::string generations_path =
      (fs::path(run_dir) / "generations.jsonl").string();
  if (manifest.stages.generated && file_exists(generations_path)) {
    for (const auto& row : read_jsonl(generations_path)) {
      ++generation_count;
      const std::string pid = row.at("prompt_id").get<std::string>();
      const std::string vid = row.at("variant_id").get<std::string>();
      if (!generation_ids.insert({pid, vid}).second) {
        problem("duplicate generation row " + pid + "/" + vid);
      }
      if (!prompt_ids.count(pid)) {
        problem("generation row " + pid + "/" + vid +
                " references an unknown prompt");
      }
      if (vid != "clean" && !attacks.count({pid, vid})) {
        problem("generation row " + pid + "/" + vid +
                " references an unknown attack variant");
      }
      const std::string expect_key = generation_cache_key(
          config.model_id, row.at("rendered").get<std::string>(),
          config.decoding);
      if (row.at("key").get<std::string>() != expect_key) {
        problem("generation row " + pid + "/" + vid + " has a stale cache key");
      }
    }
    const std::size_t expected =
        prompt_ids.size() * (1 + config.kinds.size() * config.levels.size()) -
        failures_by_stage["perturb"] - failures_by_stage["generate"];
    if (generation_count != expected) {
      problem("generation ledger holds " + std::to_string(generation_count) +
              " rows, conservation expects " + std::to_string(expected));
    }
  }

  const std::string scores_path = (fs::path(run_dir) / "scores.jsonl").string();
  if (manifest.stages.scored && file_exists(scores_path)) {
    std::set<std::pair<std::string, std::string>> score_ids;
    std::size_t score_rows = 0;
    for (const auto& row : read_jsonl(scores_path)) {
      ++score_rows;
      const ScoreRow r = ScoreRow::from_json(row);
      if (!score_ids.insert({r.prompt_id, r.variant_id}).second) {
        problem("duplicate score row " + r.prompt_id + "/" + r.variant_id);
      }
      if (!generation_ids.count({r.prompt_id, r.variant_id})) {
        problem("score row " + r.prompt_id + "/" + r.variant_id +
                " references no generation");
      }
      if (!std::isfinite(r.reward) || !std::isfinite(r.cost)) {
        problem("score row " + r.prompt_id + "/" + r.variant_id +
                " holds a non-finite score");
      }
    }
    const std::size_t expected_scalars =
        2 * generation_count - failures_by_stage["score"];
    if (2 * score_rows != expected_scalars) {
      problem("score ledger holds " + std::to_string(2 * score_rows) +
              " scalar scores, conservation expects " +
              std::to_string(expected_scalars));
    }
  }

  return result;
}

}  // namespace treval
