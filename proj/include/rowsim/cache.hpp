#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rowsim/util.hpp"

namespace rowsim::cache {

/// Sliced, set-associative last-level cache with CAT way restriction.
/// CAT is modeled as uniformly reducing the effective associativity of
/// every set to `cat_ways`.
struct CacheConfig {
  std::uint32_t slices = 2;
  std::uint32_t sets_per_slice = 1024;
  std::uint32_t ways = 16;
  std::uint32_t cat_ways = 1;  ///< ways available to the simulated workload
  std::uint32_t line_size = 64;
  /// Slice hash: one physical-address bit mask per slice-index bit.
  std::vector<std::uint64_t> slice_hash = {(1ull << 6) | (1ull << 12) | (1ull << 17) |
                                           (1ull << 21) | (1ull << 25) | (1ull << 29)};

  void validate() const {
    if (cat_ways < 1 || cat_ways > ways) {
      throw ConfigError("cache.cat_ways: must be within [1, ways]");
    }
    if (!is_power_of_two(sets_per_slice)) {
      throw ConfigError("cache.sets_per_slice: must be a power of two");
    }
    if (!is_power_of_two(line_size)) {
      throw ConfigError("cache.line_size: must be a power of two");
    }
    if (!is_power_of_two(slices)) {
      throw ConfigError("cache.slices: must be a power of two");
    }
    if (slices > 1 && slice_hash.size() != log2_exact(slices)) {
      throw ConfigError("cache.slice_hash: needs log2(slices) bit masks");
    }
  }
};

inline std::uint32_t slice_of(std::uint64_t addr, const CacheConfig& cfg) {
  if (cfg.slices <= 1) return 0;
  return xor_reduce(addr, cfg.slice_hash);
}

/// Address ranges that bypass the cache entirely (DMA buffers and the
/// like). Half-open [start, end) byte ranges, pairwise disjoint.
struct UncachedRegions {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;

  void validate() const {
    auto sorted = ranges;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i].second <= sorted[i].first) {
        throw ConfigError("uncached region: end must be greater than start");
      }
      if (i > 0 && sorted[i].first < sorted[i - 1].second) {
        throw ConfigError("uncached regions: ranges must be disjoint");
      }
    }
  }

  bool contains(std::uint64_t addr) const {
    for (const auto& [start, end] : ranges) {
      if (addr >= start && addr < end) return true;
    }
    return false;
  }
};

struct AccessResult {
  bool hit = false;
  std::optional<std::uint64_t> evicted;  ///< line index forced out, if any
};

/// LRU cache state: per (slice, set), resident line indices ordered
/// most- to least-recently used, never more than cat_ways of them.
class Cache {
 public:
  explicit Cache(const CacheConfig& cfg, UncachedRegions uncached = {})
      : cfg_(cfg), uncached_(std::move(uncached)),
        sets_(std::size_t(cfg.slices) * cfg.sets_per_slice) {
    cfg_.validate();
    uncached_.validate();
  }

  const CacheConfig& config() const { return cfg_; }
  const UncachedRegions& uncached() const { return uncached_; }

  bool is_uncached(std::uint64_t addr) const { return uncached_.contains(addr); }

  /// Looks up the line holding `addr`; on a miss the line is inserted at
  /// MRU, evicting the LRU line of a full set. Uncached addresses always
  /// miss and are never inserted.
  AccessResult access(std::uint64_t addr) {
    if (is_uncached(addr)) return {false, std::nullopt};
    const std::uint64_t line = addr / cfg_.line_size;
    auto& set = set_for(line);
    auto it = std::find(set.begin(), set.end(), line);
    if (it != set.end()) {
      std::rotate(set.begin(), it, it + 1);
      return {true, std::nullopt};
    }
    AccessResult result{false, std::nullopt};
    if (set.size() >= cfg_.cat_ways) {
      result.evicted = set.back();
      set.pop_back();
    }
    set.insert(set.begin(), line);
    return result;
  }

  /// Invalidates the line holding `addr` if resident.
  void flush(std::uint64_t addr) {
    const std::uint64_t line = addr / cfg_.line_size;
    auto& set = set_for(line);
    auto it = std::find(set.begin(), set.end(), line);
    if (it != set.end()) set.erase(it);
  }

  bool resident(std::uint64_t addr) const {
    if (is_uncached(addr)) return false;
    const std::uint64_t line = addr / cfg_.line_size;
    const auto& set = set_for(line);
    return std::find(set.begin(), set.end(), line) != set.end();
  }

  std::uint32_t set_index(std::uint64_t line) const {
    return static_cast<std::uint32_t>(line % cfg_.sets_per_slice);
  }

  /// Deterministic snapshot of residency, for state comparison.
  const std::vector<std::vector<std::uint64_t>>& sets() const { return sets_; }

 private:
  std::vector<std::uint64_t>& set_for(std::uint64_t line) {
    const std::uint32_t slice = slice_of(line * cfg_.line_size, cfg_);
    return sets_[std::size_t(slice) * cfg_.sets_per_slice + set_index(line)];
  }
  const std::vector<std::uint64_t>& set_for(std::uint64_t line) const {
    const std::uint32_t slice = slice_of(line * cfg_.line_size, cfg_);
    return sets_[std::size_t(slice) * cfg_.sets_per_slice + set_index(line)];
  }

  CacheConfig cfg_;
  UncachedRegions uncached_;
  std::vector<std::vector<std::uint64_t>> sets_;
};

}  // namespace rowsim::cache
