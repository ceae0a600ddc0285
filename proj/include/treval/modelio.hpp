#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "treval/jsonl.hpp"

namespace treval {

enum class TemplateStyle { Conversation, Bare };

const char* to_string(TemplateStyle style);
TemplateStyle template_style_from_string(const std::string& name);

// conversation: `BEGINNING OF CONVERSATION:  USER: {prompt} ASSISTANT:`
//   (two spaces after the first colon, no trailing space).
// bare: the prompt itself, with `?` appended only when missing.
// Both renderings are byte-exact contracts.
std::string render_prompt(const std::string& prompt_text, TemplateStyle style);

struct Decoding {
  int max_new_tokens = 512;
  double temperature = 0.0;
  double top_p = 1.0;
  std::optional<std::uint64_t> seed;

  // Stable single-line form used inside cache keys; doubles are
  // printed shortest-round-trip.
  std::string canonical() const;
  json to_json() const;
  static Decoding from_json(const json& j);
};

struct RetryPolicy {
  int max_retries = 3;        // total attempts = max_retries + 1
  int initial_backoff_ms = 250;
  double multiplier = 2.0;
  int max_backoff_ms = 5000;

  // Delay before retry number `retry` (0-based):
  // min(initial * multiplier^retry, max).
  int backoff_ms(int retry) const;
};

struct GenerationResult {
  std::string answer;
  int latency_ms = 0;
  int retries = 0;
};

enum class ScoreMetric { Reward, Cost };
const char* to_string(ScoreMetric metric);

// HTTP client for one base URL. Immutable after construction and safe
// for concurrent use (each request opens its own connection).
//
// Wire contracts:
//   POST {base}/v1/completions
//     {"model", "prompt", "max_tokens", "temperature"} -> choices[0].text
//   POST {base}/score
//     {"model", "prompt", "response", "metric"} -> {"score": float}
// An api key, when set, is sent as a bearer token. Transient failures
// (connect errors, 429, 5xx) are retried per RetryPolicy.
class EndpointClient {
 public:
  explicit EndpointClient(std::string base_url, RetryPolicy retry = {},
                          std::string api_key = "");

  GenerationResult generate(const std::string& model_id,
                            const std::string& rendered_prompt,
                            const Decoding& decoding) const;

  double score(const std::string& model_id, const std::string& prompt_text,
               const std::string& answer_text, ScoreMetric which) const;

  const std::string& base_url() const { return base_url_; }

 private:
  json post_json(const std::string& path, const json& body,
                 int* retries_out) const;

  std::string base_url_;
  RetryPolicy retry_;
  std::string api_key_;
};

std::string env_or(const char* name, const std::string& fallback);

}  // namespace treval
