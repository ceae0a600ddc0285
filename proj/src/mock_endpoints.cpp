#include "treval/mock_endpoints.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <httplib.h>

#include "treval/corpus.hpp"
#include "treval/error.hpp"
#include "treval/jsonl.hpp"

namespace treval {

namespace {

class HttpMockServer : public MockServer {
 public:
  explicit HttpMockServer(int fail_first) : fail_left_(fail_first) {}
  ~HttpMockServer() override { stop(); }

  void start(int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port("127.0.0.1");
    } else {
      if (!server_.bind_to_port("127.0.0.1", port)) port_ = -1;
      else port_ = port;
    }
    if (port_ <= 0) {
      raise(Errc::Transport,
            "cannot bind mock server on 127.0.0.1:" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  int port() const override { return port_; }
  std::string base_url() const override {
    return "http://127.0.0.1:" + std::to_string(port_);
  }
  long long request_count() const override { return count_.load(); }
  void stop() override {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  // True while induced failures remain; each call consumes one.
  bool consume_failure() { return fail_left_.fetch_sub(1) > 0; }
  void count_request() { ++count_; }

  httplib::Server server_;

 private:
  std::atomic<long long> count_{0};
  std::atomic<int> fail_left_;
  int port_ = -1;
  std::thread thread_;
};

void reply_json(httplib::Response& res, const json& body) {
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  reply_json(res, json{{"error", message}});
}

}  // namespace

double length_reward(const std::string& answer) {
  return std::min<double>(100.0,
                          static_cast<double>(whitespace_token_count(answer)));
}

std::size_t byte_levenshtein(const std::string& a, const std::string& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> curr(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, sub});
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

double edit_similarity_reward(const std::string& prompt,
                              const std::vector<std::string>& references) {
  double best = 0.0;
  for (const auto& ref : references) {
    const std::size_t longer = std::max(prompt.size(), ref.size());
    if (longer == 0) return 100.0;
    const double d = static_cast<double>(byte_levenshtein(prompt, ref));
    const double reward =
        100.0 * std::max(0.0, 1.0 - d / static_cast<double>(longer));
    best = std::max(best, reward);
  }
  return best;
}

std::unique_ptr<MockServer> start_mock_generator(
    const MockGeneratorOptions& options, int port) {
  if (options.mode != "echo" && options.mode != "reverse") {
    raise(Errc::ConfigError, "unknown generator mode: " + options.mode);
  }
  auto server = std::make_unique<HttpMockServer>(options.fail_first);
  auto* state = server.get();
  const std::string mode = options.mode;

  server->server_.Post(
      "/v1/completions",
      [state, mode](const httplib::Request& req, httplib::Response& res) {
        state->count_request();
        if (state->consume_failure()) {
          reply_error(res, 500, "induced failure");
          return;
        }
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("prompt") ||
            !body["prompt"].is_string()) {
          reply_error(res, 400, "expected a JSON body with a string prompt");
          return;
        }
        std::string answer = body["prompt"].get<std::string>();
        if (mode == "reverse") std::reverse(answer.begin(), answer.end());
        reply_json(res, json{{"choices", json::array({json{{"text", answer}}})}});
      });

  server->start(port);
  return server;
}

std::unique_ptr<MockServer> start_mock_scorer(const MockScorerOptions& options,
                                              int port) {
  if (options.mode != "length" && options.mode != "edit-similarity" &&
      options.mode != "table") {
    raise(Errc::ConfigError, "unknown scorer mode: " + options.mode);
  }
  auto server = std::make_unique<HttpMockServer>(options.fail_first);
  auto* state = server.get();
  const MockScorerOptions opts = options;

  server->server_.Post(
      "/score", [state, opts](const httplib::Request& req, httplib::Response& res) {
        state->count_request();
        if (state->consume_failure()) {
          reply_error(res, 500, "induced failure");
          return;
        }
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("prompt") ||
            !body.contains("response") || !body.contains("metric")) {
          reply_error(res, 400,
                      "expected prompt, response and metric fields");
          return;
        }
        const std::string metric = body["metric"].get<std::string>();
        if (metric != "reward" && metric != "cost") {
          reply_error(res, 400, "metric must be reward or cost");
          return;
        }
        if (opts.return_nan) {
          reply_json(res, json{{"score", "NaN"}});
          return;
        }
        const std::string prompt = body["prompt"].get<std::string>();
        const std::string answer = body["response"].get<std::string>();

        double reward = 0.0;
        double cost = 0.0;
        if (opts.mode == "length") {
          reward = length_reward(answer);
          cost = 100.0 - reward;
        } else if (opts.mode == "edit-similarity") {
          reward = edit_similarity_reward(prompt, opts.references);
          cost = 100.0 - reward;
        } else {
          auto it = opts.table.find(prompt);
          if (it != opts.table.end()) {
            reward = it->second.first;
            cost = it->second.second;
          }
        }
        reply_json(res, json{{"score", metric == "reward" ? reward : cost}});
      });

  server->start(port);
  return server;
}

}  // namespace treval
