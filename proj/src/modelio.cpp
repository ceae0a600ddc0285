#include "treval/modelio.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "treval/error.hpp"

namespace treval {

namespace {

std::string shortest_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) raise(Errc::ConfigError, "unprintable double");
  return std::string(buf, ptr);
}

// base_url -> (host:port part, path prefix). httplib wants them split.
std::pair<std::string, std::string> split_base(const std::string& base) {
  std::string rest = base;
  std::string scheme = "http://";
  if (rest.rfind("http://", 0) == 0) {
    rest = rest.substr(7);
  } else if (rest.rfind("https://", 0) == 0) {
    scheme = "https://";
    rest = rest.substr(8);
  }
  const std::size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : rest.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {scheme + hostport, prefix};
}

bool transient_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

const char* to_string(TemplateStyle style) {
  return style == TemplateStyle::Conversation ? "conversation" : "bare";
}

TemplateStyle template_style_from_string(const std::string& name) {
  if (name == "conversation") return TemplateStyle::Conversation;
  if (name == "bare") return TemplateStyle::Bare;
  raise(Errc::ConfigError, "unknown template style: " + name);
}

std::string render_prompt(const std::string& prompt_text, TemplateStyle style) {
  if (style == TemplateStyle::Bare) {
    if (!prompt_text.empty() && prompt_text.back() == '?') return prompt_text;
    return prompt_text + "?";
  }
  return "BEGINNING OF CONVERSATION:  USER: " + prompt_text + " ASSISTANT:";
}

std::string Decoding::canonical() const {
  std::string out = "max_new_tokens=" + std::to_string(max_new_tokens) +
                    ",temperature=" + shortest_double(temperature) +
                    ",top_p=" + shortest_double(top_p) + ",seed=";
  out += seed ? std::to_string(*seed) : "none";
  return out;
}

json Decoding::to_json() const {
  json j{{"max_new_tokens", max_new_tokens},
         {"temperature", temperature},
         {"top_p", top_p}};
  if (seed) j["seed"] = *seed;
  return j;
}

Decoding Decoding::from_json(const json& j) {
  Decoding d;
  d.max_new_tokens = j.value("max_new_tokens", 512);
  d.temperature = j.value("temperature", 0.0);
  d.top_p = j.value("top_p", 1.0);
  if (j.contains("seed") && !j["seed"].is_null()) {
    d.seed = j["seed"].get<std::uint64_t>();
  }
  return d;
}

int RetryPolicy::backoff_ms(int retry) const {
  double delay = initial_backoff_ms * std::pow(multiplier, retry);
  if (delay > max_backoff_ms) delay = max_backoff_ms;
  return static_cast<int>(delay);
}

const char* to_string(ScoreMetric metric) {
  return metric == ScoreMetric::Reward ? "reward" : "cost";
}

EndpointClient::EndpointClient(std::string base_url, RetryPolicy retry,
                               std::string api_key)
    : base_url_(std::move(base_url)),
      retry_(retry),
      api_key_(std::move(api_key)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.empty()) raise(Errc::ConfigError, "empty endpoint base url");
}

json EndpointClient::post_json(const std::string& path, const json& body,
                               int* retries_out) const {
  const auto [hostport, prefix] = split_base(base_url_);
  const std::string payload = body.dump();
  std::string last_error;

  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(retry_.backoff_ms(attempt - 1)));
    }
    if (retries_out) *retries_out = attempt;

    httplib::Client client(hostport);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);
    if (!api_key_.empty()) client.set_bearer_token_auth(api_key_);

    auto res = client.Post(prefix + path, payload, "application/json");
    if (!res) {
      last_error = "connect to " + base_url_ + path + " failed (" +
                   httplib::to_string(res.error()) + ")";
      continue;
    }
    if (transient_status(res->status)) {
      last_error = base_url_ + path + " returned HTTP " +
                   std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      raise(Errc::Transport, base_url_ + path + " returned HTTP " +
                                 std::to_string(res->status));
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
      raise(Errc::MalformedResponse,
            base_url_ + path + " returned invalid JSON");
    }
    return parsed;
  }

  raise(Errc::Transport, last_error + " after " +
                             std::to_string(retry_.max_retries + 1) +
                             " attempts");
}

GenerationResult EndpointClient::generate(const std::string& model_id,
                                          const std::string& rendered_prompt,
                                          const Decoding& decoding) const {
  const json body{{"model", model_id},
                  {"prompt", rendered_prompt},
                  {"max_tokens", decoding.max_new_tokens},
                  {"temperature", decoding.temperature}};
  GenerationResult result;
  const auto start = std::chrono::steady_clock::now();
  const json reply = post_json("/v1/completions", body, &result.retries);
  result.latency_ms = static_cast<int>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start)
          .count());

  if (!reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty() || !reply["choices"][0].contains("text") ||
      !reply["choices"][0]["text"].is_string()) {
    raise(Errc::MalformedResponse,
          base_url_ + "/v1/completions: missing choices[0].text");
  }
  result.answer = reply["choices"][0]["text"].get<std::string>();
  return result;
}

double EndpointClient::score(const std::string& model_id,
                             const std::string& prompt_text,
                             const std::string& answer_text,
                             ScoreMetric which) const {
  const json body{{"model", model_id},
                  {"prompt", prompt_text},
                  {"response", answer_text},
                  {"metric", to_string(which)}};
  const json reply = post_json("/score", body, nullptr);
  if (!reply.contains("score")) {
    raise(Errc::MalformedResponse, base_url_ + "/score: missing \"score\"");
  }
  const json& field = reply["score"];
  double value = 0.0;
  if (field.is_number()) {
    value = field.get<double>();
  } else if (field.is_string()) {
    // JSON has no NaN/inf literals; scorers encode them as strings.
    const std::string s = field.get<std::string>();
    char* end = nullptr;
    value = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      raise(Errc::MalformedResponse,
            base_url_ + "/score: non-numeric \"score\" value");
    }
  } else {
    raise(Errc::MalformedResponse,
          base_url_ + "/score: non-numeric \"score\" value");
  }
  if (!std::isfinite(value)) {
    raise(Errc::NonFiniteScore,
          base_url_ + "/score returned a non-finite score");
  }
  return value;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value != nullptr && *value != '\0' ? std::string(value) : fallback;
}

}  // namespace treval
