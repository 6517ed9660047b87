#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace unifloral {

// Deterministic random stream.
//
// The engine is std::mt19937_64 seeded through std::seed_seq with the four
// 32-bit halves of (seed, stream); both are fully specified by the standard,
// so streams are reproducible across platforms. Distributions are implemented
// here rather than through <random> distributions, whose algorithms are
// implementation-defined:
//   uniform()   = (next_u64() >> 11) * 2^-53
//   index(n)    = rejection sampling of next_u64() below the largest multiple of n
//   normal()    = Box-Muller on (1 - uniform(), uniform()), cosine branch only
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);
  double normal();

  // Child stream derived from this stream's next output.
  Rng split(std::uint64_t stream);

  std::string state() const;
  void set_state(const std::string& s);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer, used to derive seeds from (seed, index) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace unifloral
