#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace treval {

// Lowercase hex SHA-256. Content identities (prompt ids, cache keys,
// run ids) all derive from this; collisions are treated as impossible.
std::string sha256_hex(std::string_view data);

// Digest of `tag` and `parts` joined with single NUL bytes:
//   tag \0 part1 \0 part2 ... \0 partN
// The tag separates key domains so distinct record types can never
// alias. Layout is a persistence contract; see the test vectors.
std::string tagged_digest(std::string_view tag,
                          const std::vector<std::string_view>& parts);

// First 8 bytes of tagged_digest, big-endian. Used to derive RNG seeds.
std::uint64_t tagged_digest_u64(std::string_view tag,
                                const std::vector<std::string_view>& parts);

}  // namespace treval
