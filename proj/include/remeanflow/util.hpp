#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rmf {

// Project-wide error type. All invariant violations and I/O failures throw
// this; the CLI turns it into a one-line diagnostic and a nonzero exit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// FNV-1a, used for content digests in manifests and for deriving seed
// streams. Not cryptographic.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

std::string hex64(std::uint64_t v);

// Digest of a file's bytes, as a 16-char hex string.
std::string file_digest(const std::string& path);

}  // namespace rmf
