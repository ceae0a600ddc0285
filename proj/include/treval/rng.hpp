#pragma once

#include <cstdint>
#include <vector>

namespace treval {

// splitmix64. The exact output sequence is part of the file-format
// contract: attack corpora regenerate byte-identically across builds
// and platforms. Do not change the algorithm; the reference sequence
// is frozen in the tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  // Unbiased draw in [0, n). n must be > 0. Uses Lemire's
  // multiply-shift with rejection, so the mapping from raw draws to
  // bounded values is also pinned.
  std::uint64_t bounded(std::uint64_t n);

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(bounded(n)); }

  // First k entries of a Fisher-Yates shuffle of [0, n): k distinct
  // indices, uniform without replacement. k must be <= n.
  std::vector<std::size_t> sample(std::size_t n, std::size_t k);

 private:
  std::uint64_t state_;
};

}  // namespace treval
