#pragma once

#include <bit>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rowsim {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad key, violated invariant).
struct ConfigError : Error {
  using Error::Error;
};

/// Timestamps handed to a stateful component went backwards.
struct OrderingError : Error {
  using Error::Error;
};

/// An operation was called on a component in the wrong mode.
struct MisuseError : Error {
  using Error::Error;
};

/// Malformed input file or record.
struct ParseError : Error {
  using Error::Error;
};

/// Time in nanoseconds. Signed so that interval arithmetic stays safe.
using Nanos = std::int64_t;

/// SplitMix64: tiny, fast, reproducible across platforms. All seeded
/// randomness in the simulator goes through this so that identical
/// (config, seed) pairs replay identically on any build.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform value in [0, bound). bound = 0 returns 0.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) return 0;
    // Rejection sampling keeps the distribution exact and the stream
    // consumption deterministic for a fixed bound sequence.
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % bound;
  }

  double next_unit() {  // [0, 1)
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

/// Stateless 64-bit mix of several coordinates; used for seeded
/// per-cell predicates where a full generator would be overkill.
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = a * 0x9e3779b97f4a7c15ull;
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= c + 0x94d049bb133111ebull + (h << 6) + (h >> 2);
  h *= 0x94d049bb133111ebull;
  h ^= d + 0x2545f4914f6cdd1dull + (h << 6) + (h >> 2);
  h ^= h >> 29;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 32;
  return h;
}

inline bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

/// XOR-reduces `addr` against one mask per output bit: output bit i is
/// the parity of (addr & masks[i]).
inline std::uint32_t xor_reduce(std::uint64_t addr,
                                const std::vector<std::uint64_t>& masks) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    v |= static_cast<std::uint32_t>(std::popcount(addr & masks[i]) & 1) << i;
  }
  return v;
}

inline unsigned log2_exact(std::uint64_t v) {
  unsigned n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

/// FNV-1a over a byte string; used for config digests.
inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace rowsim
