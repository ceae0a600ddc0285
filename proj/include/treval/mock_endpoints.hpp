#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace treval {

// Deterministic in-process endpoints implementing the generation and
// scorer wire contracts, for offline tests and `mock-serve`.

struct MockGeneratorOptions {
  // echo: answer = prompt verbatim. reverse: answer = prompt reversed.
  std::string mode = "echo";
  // Respond HTTP 500 to this many requests before behaving; exercises
  // the retry path.
  int fail_first = 0;
};

struct MockScorerOptions {
  // length: reward = min(100, token_count(answer)), cost = 100 - reward.
  // edit-similarity: reward = 100 * max(0, 1 - d/len) against the
  //   nearest stored reference (byte Levenshtein), cost = 100 - reward;
  //   reward is monotonically non-increasing in prompt corruption.
  // table: exact (reward, cost) per prompt from `table`; unknown
  //   prompts score 0/0.
  std::string mode = "length";
  std::vector<std::string> references;
  std::map<std::string, std::pair<double, double>> table;
  int fail_first = 0;
  bool return_nan = false;  // respond {"score": "NaN"}
};

class MockServer {
 public:
  virtual ~MockServer() = default;
  virtual int port() const = 0;
  virtual std::string base_url() const = 0;
  // Total requests observed, including ones answered with errors.
  virtual long long request_count() const = 0;
  virtual void stop() = 0;
};

// Servers bind 127.0.0.1; port 0 picks a free port. The returned
// object owns the listener thread and stops it on destruction.
std::unique_ptr<MockServer> start_mock_generator(const MockGeneratorOptions& options,
                                                 int port = 0);
std::unique_ptr<MockServer> start_mock_scorer(const MockScorerOptions& options,
                                              int port = 0);

// The scoring rules, exposed so tests can state expected values.
double length_reward(const std::string& answer);
double edit_similarity_reward(const std::string& prompt,
                              const std::vector<std::string>& references);
std::size_t byte_levenshtein(const std::string& a, const std::string& b);

}  // namespace treval
