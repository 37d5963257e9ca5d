#pragma once

#include <cstdint>
#include <span>

namespace rmf {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-reproducible across standard libraries and platforms.
//
// Streams: derive(id) returns an independent generator keyed by the original
// seed and the stream id, not by the current state, so derivation order does
// not matter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng derive(std::uint64_t stream_id) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller. Always consumes exactly two uniforms
  // (no cached spare), so the draw count per call is fixed.
  double normal();
  double normal(double mean, double stddev);

  // Index into `weights` (need not be normalized).
  std::size_t categorical(std::span<const double> weights);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace rmf
