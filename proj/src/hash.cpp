#include "treval/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstddef>

#include "treval/error.hpp"

namespace treval {

namespace {

std::array<unsigned char, 32> sha256_raw(std::string_view data) {
  std::array<unsigned char, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != digest.size()) {
    raise(Errc::IoError, "sha256 digest failed");
  }
  return digest;
}

std::string to_hex(const std::array<unsigned char, 32>& digest) {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::string join_tagged(std::string_view tag,
                        const std::vector<std::string_view>& parts) {
  std::size_t total = tag.size();
  for (const auto& p : parts) total += 1 + p.size();
  std::string message;
  message.reserve(total);
  message.append(tag);
  for (const auto& p : parts) {
    message.push_back('\0');
    message.append(p);
  }
  return message;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  return to_hex(sha256_raw(data));
}

std::string tagged_digest(std::string_view tag,
                          const std::vector<std::string_view>& parts) {
  return sha256_hex(join_tagged(tag, parts));
}

std::uint64_t tagged_digest_u64(std::string_view tag,
                                const std::vector<std::string_view>& parts) {
  auto digest = sha256_raw(join_tagged(tag, parts));
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value = (value << 8) | digest[static_cast<std::size_t>(i)];
  }
  return value;
}

}  // namespace treval
