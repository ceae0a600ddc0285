// Acceptance gate for the robustness-evaluation harness. Each criterion
// prints exactly one [PASS]/[FAIL] line (details indented below a
// failure) and the process exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/property_suite.hpp"
#include "support/reference_tables.hpp"
#include "support/temp_dir.hpp"
#include "treval/jsonl.hpp"
#include "treval/metrics.hpp"
#include "treval/mock_endpoints.hpp"
#include "treval/modelio.hpp"
#include "treval/pipeline.hpp"
#include "treval/report.hpp"

using namespace treval;
using treval::testing::TempDir;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string note;                  // appended to the status line
  std::vector<std::string> details;  // printed under a failure
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---- criterion 1: drop-rate tables from published mean scores ----------

Outcome table_regression() {
  Outcome outcome;
  const auto start = Clock::now();
  constexpr double tol = 0.05;
  std::size_t entries = 0;
  std::size_t mismatches = 0;

  for (const auto& fixture : reference::model_fixtures()) {
    ScoreMatrix matrix;
    matrix.clean_mean_reward = fixture.means.clean_reward;
    matrix.clean_mean_cost = fixture.means.clean_cost;
    matrix.clean_n = 200;
    for (int k = 0; k < 3; ++k) {
      for (int l = 0; l < 3; ++l) {
        matrix.cells[k][l] = {fixture.means.reward[k][l],
                              fixture.means.cost[k][l], 200};
      }
    }
    const DropRateTable table = build_drop_rate_table(matrix);

    auto check = [&](const std::string& where, double computed,
                     double published) {
      ++entries;
      if (std::abs(computed - published) <= tol) return;
      ++mismatches;
      outcome.details.push_back(fmt("%s %s: computed %.4f, published %.2f",
                                    fixture.means.model, where.c_str(),
                                    computed, published));
    };

    for (const auto kind : all_kinds()) {
      const int k = kind_index(kind);
      for (int l = 0; l < 3; ++l) {
        const std::string cell =
            std::string(to_string(kind)) + ":" + std::to_string(l + 1);
        check("reward " + cell, table.reward[k][l],
              fixture.published.reward[k][l]);
        check("cost " + cell, table.cost[k][l], fixture.published.cost[k][l]);
      }
    }
    for (int l = 0; l < 3; ++l) {
      check(fmt("reward level-avg %d", l + 1), table.reward_level_avg[l],
            fixture.published.reward_level_avg[l]);
      check(fmt("cost level-avg %d", l + 1), table.cost_level_avg[l],
            fixture.published.cost_level_avg[l]);
    }
    check("reward overall", table.reward_overall,
          fixture.published.reward_overall);
    check("cost overall", table.cost_overall, fixture.published.cost_overall);
  }

  const double elapsed = seconds_since(start);
  outcome.pass = mismatches == 0 && elapsed < 1.0;
  outcome.note = fmt("%zu of %zu entries within +/-0.05, %.3fs", entries - mismatches,
                     entries, elapsed);
  return outcome;
}

// ---- criterion 2: per-prompt case-study triples -------------------------

Outcome case_regression() {
  Outcome outcome;
  const auto start = Clock::now();
  constexpr double tol = 0.01;
  std::size_t entries = 0;
  std::size_t mismatches = 0;

  for (const auto& fixture : reference::case_fixtures()) {
    int row_number = 0;
    for (const auto& row : fixture.rows) {
      ++row_number;
      const double computed_reward =
          reward_drop_rate(fixture.clean_reward, row.reward);
      const double computed_cost = cost_drop_rate(fixture.clean_cost, row.cost);
      ++entries;
      if (std::abs(computed_reward - row.reward_drop) > tol) {
        ++mismatches;
        outcome.details.push_back(
            fmt("%s row %d reward: %.1f -> %.1f gives %.4f, published %.2f",
                fixture.name, row_number, fixture.clean_reward, row.reward,
                computed_reward, row.reward_drop));
      }
      ++entries;
      if (std::abs(computed_cost - row.cost_drop) > tol) {
        ++mismatches;
        outcome.details.push_back(
            fmt("%s row %d cost: %.1f -> %.1f gives %.4f, published %.2f",
                fixture.name, row_number, fixture.clean_cost, row.cost,
                computed_cost, row.cost_drop));
      }
    }
  }

  const double elapsed = seconds_since(start);
  outcome.pass = mismatches == 0 && elapsed < 1.0;
  outcome.note = fmt("%zu of %zu drop rates within +/-0.01, %.3fs",
                     entries - mismatches, entries, elapsed);
  return outcome;
}

// ---- criterion 3: perturbation property suite ---------------------------

Outcome property_suite() {
  Outcome outcome;
  const auto start = Clock::now();
  const testing::PropertySuiteResult result =
      testing::run_perturbation_property_suite(1000);
  const double elapsed = seconds_since(start);
  outcome.pass = result.ok() && elapsed < 30.0;
  outcome.note = fmt("%zu perturbations, %zu violations, %.1fs",
                     result.perturbations, result.violation_count, elapsed);
  outcome.details = result.violations;
  if (elapsed >= 30.0) outcome.details.push_back("time budget of 30s exceeded");
  return outcome;
}

// ---- criterion 4: drop-rate rescale invariance --------------------------

Outcome rescale_invariance() {
  Outcome outcome;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> clean_dist(1e-3, 1e3);
  std::uniform_real_distribution<double> attack_dist(-1e3, 1e3);
  std::uniform_real_distribution<double> scale_dist(1e-6, 1e6);
  std::size_t violations = 0;

  for (int i = 0; i < 10000; ++i) {
    const double clean = clean_dist(rng);
    const double attack = attack_dist(rng);
    const double k = scale_dist(rng);
    const double reward_base = reward_drop_rate(clean, attack);
    const double reward_scaled = reward_drop_rate(k * clean, k * attack);
    const double cost_base = cost_drop_rate(clean, attack);
    const double cost_scaled = cost_drop_rate(k * clean, k * attack);
    const double reward_err = std::abs(reward_scaled - reward_base) /
                              std::max(1.0, std::abs(reward_base));
    const double cost_err =
        std::abs(cost_scaled - cost_base) / std::max(1.0, std::abs(cost_base));
    if (reward_err > 1e-9 || cost_err > 1e-9) {
      ++violations;
      if (outcome.details.size() < 10) {
        outcome.details.push_back(
            fmt("clean=%.6g attack=%.6g k=%.6g reward_err=%.3g cost_err=%.3g",
                clean, attack, k, reward_err, cost_err));
      }
    }
  }
  outcome.pass = violations == 0;
  outcome.note = fmt("10000 scale pairs, %zu beyond 1e-9 relative", violations);
  return outcome;
}

// ---- criterion 5: end-to-end smoke over the CLI --------------------------

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::map<std::string, std::string> dir_bytes(const std::string& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    files[entry.path().filename().string()] =
        read_text_file(entry.path().string());
  }
  return files;
}

Outcome smoke_run() {
  Outcome outcome;
  const auto start = Clock::now();
  TempDir dir;
  const auto generator = start_mock_generator(MockGeneratorOptions{});
  const auto scorer = start_mock_scorer(MockScorerOptions{});

  const std::string out_root = dir.file("runs");
  const std::string stdout_path = dir.file("stdout.txt");
  const std::string command =
      std::string("\"") + TREVAL_BIN + "\" run --in " + TREVAL_DATA_DIR +
      "/smoke_questions.txt --gen_base " + generator->base_url() +
      " --reward_base " + scorer->base_url() + " --cost_base " +
      scorer->base_url() + " --lexicon " + TREVAL_DATA_DIR +
      "/lexicon.tsv --out_root " + out_root + " >" + stdout_path + " 2>&1";

  auto fail = [&outcome](const std::string& detail) {
    outcome.pass = false;
    outcome.details.push_back(detail);
  };

  if (run_command(command) != 0) {
    fail("treval run exited nonzero; output:");
    outcome.details.push_back(read_text_file(stdout_path));
    outcome.note = "aborted";
    return outcome;
  }

  const std::string out = read_text_file(stdout_path);
  std::string run_dir;
  const auto dir_pos = out.find("dir ");
  if (dir_pos != std::string::npos) {
    const auto end = out.find('\n', dir_pos);
    run_dir = out.substr(dir_pos + 4, end - dir_pos - 4);
  }
  if (run_dir.empty() || !file_exists(run_dir + "/report.json")) {
    fail("could not locate the run directory in the CLI output");
    outcome.note = "aborted";
    return outcome;
  }

  const std::size_t generations = read_jsonl(run_dir + "/generations.jsonl").size();
  const std::size_t score_rows = read_jsonl(run_dir + "/scores.jsonl").size();
  if (generations != 100) {
    fail(fmt("expected 100 generations, found %zu", generations));
  }
  if (2 * score_rows != 200) {
    fail(fmt("expected 200 scores, found %zu", 2 * score_rows));
  }
  if (file_exists(run_dir + "/failures.jsonl") &&
      !read_jsonl(run_dir + "/failures.jsonl").empty()) {
    fail("the smoke run quarantined records");
  }

  // Schema: every contract field is present with the right shape.
  const json report = json::parse(read_text_file(run_dir + "/report.json"),
                                  nullptr, false);
  if (report.is_discarded()) {
    fail("report.json is not valid JSON");
  } else {
    for (const char* key :
         {"run_id", "model_id", "template_style", "decoding", "normalization",
          "nondeterministic", "partial", "scores", "bins", "histograms",
          "drop_rates"}) {
      if (!report.contains(key)) fail(fmt("report.json lacks \"%s\"", key));
    }
    if (report.value("partial", true)) fail("smoke report is partial");
    if (report.contains("scores")) {
      const json& scores = report["scores"];
      if (!scores.contains("clean") || !scores.contains("cells") ||
          scores["cells"].size() != 3) {
        fail("report.json scores matrix is malformed");
      } else if (scores["clean"].value("n", 0) != 10) {
        fail("clean population is not the 10 smoke prompts");
      }
    }
    if (report.contains("drop_rates") &&
        (!report["drop_rates"].contains("reward") ||
         !report["drop_rates"].contains("cost") ||
         !report["drop_rates"].contains("reward_overall"))) {
      fail("report.json drop_rates table is malformed");
    }

    // Shared bin edges: within every pair, and across each metric.
    if (report.contains("histograms")) {
      const json& hists = report["histograms"];
      if (hists.size() != 18) {
        fail(fmt("expected 18 histograms, found %zu", hists.size()));
      }
      std::map<std::string, json> metric_edges;
      for (const auto& item : hists.items()) {
        const json& pair = item.value();
        if (pair.at("clean").at("bin_edges") !=
            pair.at("attack").at("bin_edges")) {
          fail(fmt("histogram %s: clean and attack edges differ",
                   item.key().c_str()));
        }
        const std::string metric =
            item.key().substr(0, item.key().find('_'));
        auto [it, inserted] =
            metric_edges.emplace(metric, pair.at("clean").at("bin_edges"));
        if (!inserted && it->second != pair.at("clean").at("bin_edges")) {
          fail(fmt("histogram %s: edges differ from the %s pool",
                   item.key().c_str(), metric.c_str()));
        }
      }
    }
  }

  // A resumed re-run leaves every artifact byte-identical.
  const auto before = dir_bytes(run_dir);
  const long long gen_requests = generator->request_count();
  const long long score_requests = scorer->request_count();
  if (run_command(command) != 0) {
    fail("the resumed run exited nonzero");
  } else {
    if (generator->request_count() != gen_requests ||
        scorer->request_count() != score_requests) {
      fail("the resumed run issued new endpoint requests");
    }
    const auto after = dir_bytes(run_dir);
    if (after.size() != before.size()) {
      fail("the resumed run changed the artifact set");
    }
    for (const auto& [name, bytes] : before) {
      if (!after.count(name) || after.at(name) != bytes) {
        fail(name + " changed on resume");
      }
    }
  }

  const double elapsed = seconds_since(start);
  if (elapsed >= 10.0) fail(fmt("time budget of 10s exceeded: %.1fs", elapsed));
  outcome.note = fmt(
      "%zu generations, %zu scores, 18 shared-edge histograms, resume "
      "byte-identical, %.1fs",
      generations, 2 * score_rows, elapsed);
  return outcome;
}

// ---- criterion 6: template goldens ---------------------------------------

Outcome template_goldens() {
  Outcome outcome;
  const struct {
    TemplateStyle style;
    const char* prompt;
    const char* expected;
  } cases[] = {
      {TemplateStyle::Conversation, "PROMPTS",
       "BEGINNING OF CONVERSATION:  USER: PROMPTS ASSISTANT:"},
      {TemplateStyle::Conversation,
       "what does it mean to cross over the rainbow bridge",
       "BEGINNING OF CONVERSATION:  USER: what does it mean to cross over "
       "the rainbow bridge ASSISTANT:"},
      {TemplateStyle::Bare, "What is the meaning of Veronica in English?",
       "What is the meaning of Veronica in English?"},
      {TemplateStyle::Bare, "what does it mean to cross over the rainbow bridge",
       "what does it mean to cross over the rainbow bridge?"},
  };
  std::size_t checked = 0;
  for (const auto& c : cases) {
    ++checked;
    const std::string rendered = render_prompt(c.prompt, c.style);
    if (rendered != c.expected) {
      outcome.pass = false;
      outcome.details.push_back(fmt("%s template of \"%s\" rendered \"%s\"",
                                    to_string(c.style), c.prompt,
                                    rendered.c_str()));
    }
  }
  outcome.note = fmt("%zu renderings byte-matched", checked);
  return outcome;
}

// ---- criterion 7: monotone drop under a provably monotone scorer ---------

Outcome monotone_direction() {
  Outcome outcome;
  TempDir dir;
  const auto generator = start_mock_generator(MockGeneratorOptions{});

  MockScorerOptions similarity;
  similarity.mode = "edit-similarity";
  // References extend each clean question, so the clean baseline stays
  // inside (0, 100) and every character edit moves the prompt away.
  {
    const std::string corpus = read_text_file(
        std::string(TREVAL_DATA_DIR) + "/smoke_questions.txt");
    std::string line;
    std::istringstream in(corpus);
    while (std::getline(in, line)) {
      if (!line.empty()) {
        similarity.references.push_back(
            line + " with a reference tail that perturbations never match");
      }
    }
  }
  const auto scorer = start_mock_scorer(similarity);

  RunConfig config;
  config.prompts_path = std::string(TREVAL_DATA_DIR) + "/smoke_questions.txt";
  config.gen_base = generator->base_url();
  config.reward_base = scorer->base_url();
  config.cost_base = scorer->base_url();
  config.lexicon_path = std::string(TREVAL_DATA_DIR) + "/lexicon.tsv";
  config.out_root = dir.file("runs");

  const RunResult result = run(config);
  const RobustnessReport report = write_report(result.run_dir);
  if (!report.drop_rates) {
    outcome.pass = false;
    outcome.note = "no drop rates; the score matrix is incomplete";
    return outcome;
  }
  const int k = kind_index(PerturbationKind::Misspelling);
  const auto& row = report.drop_rates->reward[k];
  outcome.pass = row[0] <= row[1] && row[1] <= row[2];
  outcome.note = fmt("misspelling reward drop rates %.2f <= %.2f <= %.2f",
                     row[0], row[1], row[2]);
  if (!outcome.pass) {
    outcome.details.push_back("the level averages are not monotone");
  }
  return outcome;
}

}  // namespace

int main() {
  const struct {
    int number;
    const char* label;
    Outcome (*fn)();
  } criteria[] = {
      {1, "published drop-rate tables rebuilt from mean scores", table_regression},
      {2, "published case-study drop rates rebuilt from score pairs", case_regression},
      {3, "perturbation property suite", property_suite},
      {4, "drop-rate rescale invariance", rescale_invariance},
      {5, "end-to-end smoke run over the CLI", smoke_run},
      {6, "prompt template goldens", template_goldens},
      {7, "monotone drop rates under the edit-similarity scorer", monotone_direction},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const Outcome outcome = criterion.fn();
    std::printf("[%s] criterion %d: %s (%s)\n", outcome.pass ? "PASS" : "FAIL",
                criterion.number, criterion.label, outcome.note.c_str());
    if (!outcome.pass) {
      ++failures;
      for (const auto& detail : outcome.details) {
        std::printf("       %s\n", detail.c_str());
      }
    }
  }
  if (failures > 0) {
    std::printf("%d of 7 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 7 criteria passed\n");
  return 0;
}
