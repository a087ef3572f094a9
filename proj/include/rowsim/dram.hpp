#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "rowsim/util.hpp"

namespace rowsim::dram {

/// DRAM organization: channels > DIMMs > ranks > bank groups > banks,
/// each bank an array of rows. Row size defaults to 8 KB.
struct DramGeometry {
  std::uint32_t channels = 1;
  std::uint32_t dimms_per_channel = 1;
  std::uint32_t ranks_per_dimm = 1;
  std::uint32_t bank_groups = 4;
  std::uint32_t banks_per_group = 4;
  std::uint32_t rows_per_bank = 32768;
  std::uint32_t row_size_bytes = 8192;

  std::uint64_t total_banks() const {
    return std::uint64_t(channels) * dimms_per_channel * ranks_per_dimm *
           bank_groups * banks_per_group;
  }

  std::uint64_t cells_per_row() const { return std::uint64_t(row_size_bytes) * 8; }

  void validate() const {
    if (channels < 1 || dimms_per_channel < 1 || ranks_per_dimm < 1 ||
        bank_groups < 1 || banks_per_group < 1 || rows_per_bank < 1) {
      throw ConfigError("geometry: all counts must be >= 1");
    }
    if (!is_power_of_two(row_size_bytes)) {
      throw ConfigError("geometry.row_size_bytes: must be a power of two");
    }
  }
};

/// Decomposed physical address.
struct DramLocation {
  std::uint32_t channel = 0;
  std::uint32_t dimm = 0;
  std::uint32_t rank = 0;
  std::uint32_t bank_group = 0;
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  std::uint32_t column = 0;

  bool operator==(const DramLocation&) const = default;
};

/// Flat bank index across the whole geometry, row-major over
/// (channel, dimm, rank, bank_group, bank).
inline std::uint32_t global_bank(const DramGeometry& g, const DramLocation& loc) {
  return ((((loc.channel * g.dimms_per_channel + loc.dimm) * g.ranks_per_dimm +
            loc.rank) *
               g.bank_groups +
           loc.bank_group) *
              g.banks_per_group +
          loc.bank);
}

inline DramLocation bank_coords(const DramGeometry& g, std::uint32_t gbank) {
  DramLocation loc;
  loc.bank = gbank % g.banks_per_group;
  gbank /= g.banks_per_group;
  loc.bank_group = gbank % g.bank_groups;
  gbank /= g.bank_groups;
  loc.rank = gbank % g.ranks_per_dimm;
  gbank /= g.ranks_per_dimm;
  loc.dimm = gbank % g.dimms_per_channel;
  loc.channel = gbank / g.dimms_per_channel;
  return loc;
}

/// Physical-address-to-DRAM mapping. Every output bit of every
/// coordinate is the XOR reduction of a set of physical address bits,
/// stored here as a 64-bit mask per output bit.
struct AddressMapping {
  unsigned physical_bits = 32;
  std::vector<std::uint64_t> channel;
  std::vector<std::uint64_t> dimm;
  std::vector<std::uint64_t> rank;
  std::vector<std::uint64_t> bank_group;
  std::vector<std::uint64_t> bank;
  std::vector<std::uint64_t> row;
  std::vector<std::uint64_t> column;

  static std::uint64_t mask_from_bits(const std::vector<unsigned>& bits) {
    std::uint64_t m = 0;
    for (unsigned b : bits) {
      if (b >= 64) throw ConfigError("mapping: bit index out of range");
      m |= 1ull << b;
    }
    return m;
  }

  static std::vector<unsigned> bits_from_mask(std::uint64_t mask) {
    std::vector<unsigned> bits;
    for (unsigned b = 0; b < 64; ++b)
      if (mask & (1ull << b)) bits.push_back(b);
    return bits;
  }

  /// Checks that decoded coordinates always fit the geometry and that
  /// column bits stay out of every other coordinate, so that addresses
  /// differing only in column bits share a (bank, row).
  void validate(const DramGeometry& g) const {
    auto check = [&](const std::vector<std::uint64_t>& masks, std::uint64_t bound,
                     const char* name) {
      if ((masks.size() >= 64) || (1ull << masks.size()) > std::max<std::uint64_t>(bound, 1)) {
        throw ConfigError(std::string("mapping.") + name +
                          ": more output bits than the geometry allows");
      }
      for (std::uint64_t m : masks) {
        if (physical_bits < 64 && (m >> physical_bits) != 0) {
          throw ConfigError(std::string("mapping.") + name +
                            ": bit index beyond physical address width");
        }
      }
    };
    check(channel, g.channels, "channel");
    check(dimm, g.dimms_per_channel, "dimm");
    check(rank, g.ranks_per_dimm, "rank");
    check(bank_group, g.bank_groups, "bank_group");
    check(bank, g.banks_per_group, "bank");
    check(row, g.rows_per_bank, "row");
    check(column, g.row_size_bytes, "column");

    std::uint64_t column_union = 0;
    for (std::uint64_t m : column) column_union |= m;
    std::uint64_t other_union = 0;
    for (const auto* coord : {&channel, &dimm, &rank, &bank_group, &bank, &row})
      for (std::uint64_t m : *coord) other_union |= m;
    if (column_union & other_union) {
      throw ConfigError("mapping.column: column bits may not feed other coordinates");
    }
  }
};

/// XOR-reduces a physical address into its DRAM coordinates.
inline DramLocation map_address(std::uint64_t addr, const AddressMapping& m,
                                const DramGeometry& /*geom*/) {
  if (m.physical_bits < 64 && (addr >> m.physical_bits) != 0) {
    throw ConfigError("map_address: address exceeds physical address width");
  }
  DramLocation loc;
  loc.channel = xor_reduce(addr, m.channel);
  loc.dimm = xor_reduce(addr, m.dimm);
  loc.rank = xor_reduce(addr, m.rank);
  loc.bank_group = xor_reduce(addr, m.bank_group);
  loc.bank = xor_reduce(addr, m.bank);
  loc.row = xor_reduce(addr, m.row);
  loc.column = xor_reduce(addr, m.column);
  return loc;
}

/// Builds a documented DDR4-like mapping for the given geometry:
/// column bits at the bottom, then one bit per bank/rank/dimm/channel
/// index XOR-paired with a row bit, then the row bits on top.
inline AddressMapping synthetic_mapping(const DramGeometry& g) {
  g.validate();
  auto need_pow2 = [](std::uint64_t v, const char* name) {
    if (!is_power_of_two(v)) {
      throw ConfigError(std::string("synthetic mapping requires power-of-two ") + name);
    }
    return log2_exact(v);
  };
  const unsigned col_bits = need_pow2(g.row_size_bytes, "row_size_bytes");
  const unsigned bg_bits = need_pow2(g.bank_groups, "bank_groups");
  const unsigned ba_bits = need_pow2(g.banks_per_group, "banks_per_group");
  const unsigned rk_bits = need_pow2(g.ranks_per_dimm, "ranks_per_dimm");
  const unsigned di_bits = need_pow2(g.dimms_per_channel, "dimms_per_channel");
  const unsigned ch_bits = need_pow2(g.channels, "channels");
  const unsigned row_bits = need_pow2(g.rows_per_bank, "rows_per_bank");
  const unsigned idx_bits = bg_bits + ba_bits + rk_bits + di_bits + ch_bits;

  AddressMapping m;
  m.physical_bits = col_bits + idx_bits + row_bits;
  const unsigned row_base = col_bits + idx_bits;

  for (unsigned i = 0; i < col_bits; ++i) m.column.push_back(1ull << i);
  for (unsigned i = 0; i < row_bits; ++i) m.row.push_back(1ull << (row_base + i));

  unsigned next = col_bits;
  auto alloc = [&](std::vector<std::uint64_t>& coord, unsigned nbits) {
    for (unsigned i = 0; i < nbits; ++i) {
      std::uint64_t mask = 1ull << next;
      // XOR partner among the low row bits, as reverse-engineered DDR4
      // functions pair bank-index bits with row bits.
      const unsigned partner_off = (next - col_bits) + 1;
      if (row_bits > 0 && partner_off < row_bits) mask |= 1ull << (row_base + partner_off);
      coord.push_back(mask);
      ++next;
    }
  };
  alloc(m.bank_group, bg_bits);
  alloc(m.bank, ba_bits);
  alloc(m.rank, rk_bits);
  alloc(m.dimm, di_bits);
  alloc(m.channel, ch_bits);
  m.validate(g);
  return m;
}

/// Searches the column-0 address space for an address decoding to the
/// requested (global bank, row). Works for any mapping; returns nullopt
/// when the pair is unreachable.
inline std::optional<std::uint64_t> find_address(const AddressMapping& m,
                                                 const DramGeometry& g,
                                                 std::uint32_t gbank,
                                                 std::uint32_t target_row) {
  unsigned col_bits = 0;
  std::uint64_t col_union = 0;
  for (std::uint64_t mask : m.column) col_union |= mask;
  col_bits = static_cast<unsigned>(std::popcount(col_union));
  const unsigned high_bits = m.physical_bits - col_bits;
  const std::uint64_t limit = high_bits >= 63 ? ~0ull : (1ull << high_bits);
  // Column bits are disjoint from the rest, so stepping through the
  // non-column space covers every (bank, row) exactly once.
  for (std::uint64_t i = 0; i < limit; ++i) {
    std::uint64_t addr = 0;
    std::uint64_t rest = i;
    for (unsigned b = 0; b < m.physical_bits; ++b) {
      if (col_union & (1ull << b)) continue;
      addr |= (rest & 1) << b;
      rest >>= 1;
    }
    DramLocation loc = map_address(addr, m, g);
    if (loc.row == target_row && global_bank(g, loc) == gbank) return addr;
  }
  return std::nullopt;
}

/// Target Row Refresh settings. `max_activation_count` is the MAC:
/// rows activated strictly more often than this within one refresh
/// window get their neighbourhood refreshed.
struct TrrConfig {
  bool enabled = false;
  std::uint64_t max_activation_count = 50000;
  std::uint32_t refresh_radius = 1;
  bool double_refresh = false;  ///< pTRR fallback: halves the refresh window

  void validate() const {
    if (max_activation_count < 1) throw ConfigError("trr.max_activation_count: must be >= 1");
    if (refresh_radius < 1) throw ConfigError("trr.refresh_radius: must be >= 1");
  }
};

/// Per-(bank, row) activation counts inside the current refresh window.
/// Counts reset exactly at window boundaries.
class ActivationLedger {
 public:
  static constexpr Nanos kDefaultWindow = 64'000'000;  // 64 ms

  explicit ActivationLedger(const DramGeometry& g, Nanos window_length = kDefaultWindow)
      : geom_(g),
        window_length_(window_length),
        rows_(g.rows_per_bank),
        counts_(g.total_banks() * g.rows_per_bank, 0) {
    if (window_length_ <= 0) throw ConfigError("ledger: window_length must be positive");
  }

  const DramGeometry& geometry() const { return geom_; }
  Nanos window_length() const { return window_length_; }
  std::int64_t window_id() const { return window_id_; }
  std::uint64_t activations_this_window() const { return activations_; }

  std::int64_t window_of(Nanos time) const { return time / window_length_; }

  /// Records one row activation at `time`. Rolls the window over (and
  /// resets all counts) when `time` falls into a later window.
  void record_activation(const DramLocation& loc, Nanos time) {
    if (time < last_time_) throw OrderingError("record_activation: time went backwards");
    last_time_ = time;
    const std::int64_t wid = window_of(time);
    if (wid > window_id_) start_window(wid);
    const std::size_t idx =
        std::size_t(global_bank(geom_, loc)) * rows_ + loc.row;
    if (counts_[idx] == 0) touched_.push_back(idx);
    ++counts_[idx];
    ++activations_;
  }

  /// Clears all counts and begins window `wid`.
  void start_window(std::int64_t wid) {
    for (std::size_t idx : touched_) counts_[idx] = 0;
    touched_.clear();
    activations_ = 0;
    window_id_ = wid;
  }

  std::uint64_t count(std::uint32_t gbank, std::uint32_t row) const {
    return counts_[std::size_t(gbank) * rows_ + row];
  }

  std::uint64_t max_count() const {
    std::uint64_t m = 0;
    for (std::size_t idx : touched_) m = std::max<std::uint64_t>(m, counts_[idx]);
    return m;
  }

  /// Touched (bank, row, count) triples in deterministic order.
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> active_rows() const {
    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> out;
    out.reserve(touched_.size());
    std::vector<std::size_t> sorted = touched_;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t idx : sorted) {
      out.emplace_back(static_cast<std::uint32_t>(idx / rows_),
                       static_cast<std::uint32_t>(idx % rows_), counts_[idx]);
    }
    return out;
  }

 private:
  DramGeometry geom_;
  Nanos window_length_;
  std::size_t rows_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::size_t> touched_;
  std::uint64_t activations_ = 0;
  std::int64_t window_id_ = 0;
  Nanos last_time_ = 0;
};

/// Rows refreshed by TRR in this window, with refresh multiplicity.
using RefreshSet = std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t>;

/// Applies the MAC rule at window close: every row activated strictly
/// more than `max_activation_count` times gets its neighbours within
/// `refresh_radius` refreshed (the row itself is being accessed, not
/// refreshed).
inline RefreshSet apply_trr(const ActivationLedger& ledger, const TrrConfig& trr) {
  RefreshSet refreshed;
  if (!trr.enabled) return refreshed;
  const std::uint32_t rows = ledger.geometry().rows_per_bank;
  for (const auto& [bank, row, count] : ledger.active_rows()) {
    if (count <= trr.max_activation_count) continue;
    for (std::uint32_t d = 1; d <= trr.refresh_radius; ++d) {
      if (row >= d) ++refreshed[{bank, row - d}];
      if (row + d < rows) ++refreshed[{bank, row + d}];
    }
  }
  return refreshed;
}

/// Distance-aware flip threshold model with a seeded per-cell
/// susceptibility predicate.
struct FlipModel {
  /// Activation count at/above which a victim at this row distance flips.
  std::map<std::uint32_t, std::uint64_t> threshold_by_distance = {{1, 139000},
                                                                  {2, 556000}};
  double susceptibility = 0.0;  ///< fraction of cells flagged susceptible
  std::uint64_t seed = 0;
  bool deterministic_mode = false;

  void validate() const {
    if (threshold_by_distance.empty()) {
      throw ConfigError("flip_model.thresholds: must not be empty");
    }
    std::uint64_t prev = 0;
    for (const auto& [d, thr] : threshold_by_distance) {
      if (d < 1) throw ConfigError("flip_model.thresholds: distance must be >= 1");
      if (thr < prev) {
        throw ConfigError("flip_model.thresholds: must be non-decreasing in distance");
      }
      prev = thr;
    }
    if (susceptibility < 0.0 || susceptibility > 1.0) {
      throw ConfigError("flip_model.susceptibility: must be within [0, 1]");
    }
  }

  bool cell_susceptible(std::uint32_t bank, std::uint32_t row, std::uint64_t cell) const {
    if (susceptibility <= 0.0) return false;
    if (susceptibility >= 1.0) return true;
    const auto threshold =
        static_cast<std::uint64_t>(susceptibility * 18446744073709551615.0);
    return hash_mix(seed, bank, row, cell) <= threshold;
  }

  std::optional<std::uint64_t> first_susceptible_cell(std::uint32_t bank,
                                                      std::uint32_t row,
                                                      std::uint64_t cells) const {
    if (susceptibility <= 0.0) return std::nullopt;
    if (susceptibility >= 1.0) return 0;
    for (std::uint64_t c = 0; c < cells; ++c) {
      if (cell_susceptible(bank, row, c)) return c;
    }
    return std::nullopt;
  }
};

struct FlipRecord {
  std::uint32_t bank = 0;  ///< global bank index
  std::uint32_t row = 0;
  std::uint64_t cell = 0;
  std::uint32_t distance = 0;  ///< smallest distance whose threshold was met

  bool operator==(const FlipRecord&) const = default;
};

/// Evaluates the ledger at window close. A victim row flips iff it was
/// not refreshed by TRR, some distance d has summed aggressor
/// activations >= threshold(d), and (deterministic mode or the row
/// holds a susceptible cell).
inline std::vector<FlipRecord> evaluate_flips(const ActivationLedger& ledger,
                                              const FlipModel& model,
                                              const TrrConfig& trr) {
  const RefreshSet refreshed = apply_trr(ledger, trr);
  const std::uint32_t rows = ledger.geometry().rows_per_bank;
  const std::uint64_t cells = ledger.geometry().cells_per_row();

  // victim -> distance -> summed aggressor activations
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::map<std::uint32_t, std::uint64_t>>
      pressure;
  for (const auto& [bank, row, count] : ledger.active_rows()) {
    for (const auto& [dist, thr] : model.threshold_by_distance) {
      (void)thr;
      if (row >= dist) pressure[{bank, row - dist}][dist] += count;
      if (row + dist < rows) pressure[{bank, row + dist}][dist] += count;
    }
  }

  std::vector<FlipRecord> flips;
  for (const auto& [victim, by_distance] : pressure) {
    if (refreshed.count(victim)) continue;
    std::optional<std::uint32_t> hit_distance;
    for (const auto& [dist, sum] : by_distance) {
      const auto it = model.threshold_by_distance.find(dist);
      if (it != model.threshold_by_distance.end() && sum >= it->second) {
        hit_distance = dist;
        break;
      }
    }
    if (!hit_distance) continue;
    const auto cell = model.first_susceptible_cell(victim.first, victim.second, cells);
    if (!model.deterministic_mode && !cell) continue;
    flips.push_back({victim.first, victim.second, cell.value_or(0), *hit_distance});
  }
  return flips;
}

/// Birthday-style probability that at least two of k uniformly random
/// addresses land in the same bank; exactly 1 for k > banks.
inline double bank_collision_probability(std::uint64_t k, std::uint64_t banks) {
  if (banks < 1) throw ConfigError("bank_collision_probability: banks must be >= 1");
  if (k <= 1) return 0.0;
  if (k > banks) return 1.0;
  double no_collision = 1.0;
  for (std::uint64_t i = 0; i < k; ++i) {
    no_collision *= static_cast<double>(banks - i) / static_cast<double>(banks);
  }
  return 1.0 - no_collision;
}

struct CollisionHistogram {
  std::map<std::uint32_t, std::uint64_t> per_bank;
  std::uint64_t total = 0;
  std::uint64_t max_bucket = 0;
};

inline CollisionHistogram collisions_for(const std::vector<std::uint64_t>& addresses,
                                         const AddressMapping& mapping,
                                         const DramGeometry& geom) {
  CollisionHistogram hist;
  for (std::uint64_t addr : addresses) {
    const DramLocation loc = map_address(addr, mapping, geom);
    const std::uint64_t n = ++hist.per_bank[global_bank(geom, loc)];
    hist.max_bucket = std::max(hist.max_bucket, n);
    ++hist.total;
  }
  return hist;
}

}  // namespace rowsim::dram
