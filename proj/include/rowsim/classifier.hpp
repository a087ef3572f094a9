#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rowsim/dram.hpp"
#include "rowsim/memctrl.hpp"
#include "rowsim/util.hpp"

namespace rowsim::classifier {

/// Where the latency numbers come from. The simulator below is the
/// default; the interface leaves room for a hardware-backed source.
class TimingSource {
 public:
  virtual ~TimingSource() = default;

  /// Loads `addr` n times, then returns the latency (CPU cycles) of one
  /// further access to the same address.
  virtual std::uint64_t measure_single(std::uint64_t addr, std::uint32_t n) = 0;

  /// Accesses `a`, then returns the latency of an access to `b` (same
  /// bank, different row).
  virtual std::uint64_t measure_conflict(std::uint64_t a, std::uint64_t b) = 0;
};

/// Drives the bank model directly with a fixed inter-access gap. Every
/// measurement starts from a pre-charged bank, and probes bypass the
/// cache model entirely (the experiment flushes its probe addresses).
class SimulatedTimingSource : public TimingSource {
 public:
  SimulatedTimingSource(memctrl::PagePolicy policy, memctrl::TimingConfig timing,
                        dram::AddressMapping mapping, dram::DramGeometry geom,
                        Nanos probe_gap_ns = 200)
      : policy_(std::move(policy)),
        timing_(timing),
        mapping_(std::move(mapping)),
        geom_(geom),
        gap_(probe_gap_ns) {
    policy_.validate();
    timing_.validate();
    mapping_.validate(geom_);
    if (gap_ <= 0) throw ConfigError("classifier.probe_gap_ns: must be positive");
  }

  Nanos probe_gap() const { return gap_; }

  std::uint64_t measure_single(std::uint64_t addr, std::uint32_t n) override {
    const dram::DramLocation loc = dram::map_address(addr, mapping_, geom_);
    memctrl::BankState bank = memctrl::make_bank_state(policy_);
    Nanos t = 0;
    for (std::uint32_t i = 0; i < n; ++i, t += gap_) {
      memctrl::access(bank, loc.row, t, policy_, timing_);
    }
    return memctrl::access(bank, loc.row, t, policy_, timing_).latency;
  }

  std::uint64_t measure_conflict(std::uint64_t a, std::uint64_t b) override {
    const dram::DramLocation la = dram::map_address(a, mapping_, geom_);
    const dram::DramLocation lb = dram::map_address(b, mapping_, geom_);
    if (dram::global_bank(geom_, la) != dram::global_bank(geom_, lb) || la.row == lb.row) {
      throw ConfigError("measure_conflict: probes must share a bank and differ in row");
    }
    memctrl::BankState bank = memctrl::make_bank_state(policy_);
    memctrl::access(bank, la.row, 0, policy_, timing_);
    return memctrl::access(bank, lb.row, gap_, policy_, timing_).latency;
  }

 private:
  memctrl::PagePolicy policy_;
  memctrl::TimingConfig timing_;
  dram::AddressMapping mapping_;
  dram::DramGeometry geom_;
  Nanos gap_;
};

/// Geometric subsample of [lo, hi], deduplicated, always ending at hi.
inline std::vector<std::uint32_t> geometric_schedule(std::uint32_t lo, std::uint32_t hi,
                                                     std::uint32_t points) {
  if (lo < 1 || hi < lo || points < 2) {
    throw ConfigError("classifier schedule: need lo >= 1, hi >= lo, points >= 2");
  }
  std::vector<std::uint32_t> out;
  const double ratio = static_cast<double>(hi) / lo;
  for (std::uint32_t i = 0; i < points; ++i) {
    const double x = lo * std::pow(ratio, static_cast<double>(i) / (points - 1));
    const auto n = static_cast<std::uint32_t>(std::llround(x));
    if (out.empty() || n > out.back()) out.push_back(n);
  }
  if (out.back() != hi) out.push_back(hi);
  return out;
}

struct ClassifierConfig {
  std::vector<std::uint32_t> n_schedule = geometric_schedule(1, 10000, 32);
  std::uint32_t repeats_per_point = 9;
  std::uint64_t equality_tolerance = 3;        ///< CPU cycles
  std::uint64_t jump_detection_min_step = 10;  ///< CPU cycles
  std::uint64_t probe_addr = 0;
  std::uint64_t conflict_addr = 0;

  void validate() const {
    if (n_schedule.empty()) throw ConfigError("classifier.n_schedule: must not be empty");
    for (std::size_t i = 1; i < n_schedule.size(); ++i) {
      if (n_schedule[i] <= n_schedule[i - 1]) {
        throw ConfigError("classifier.n_schedule: must be strictly increasing");
      }
    }
    if (repeats_per_point < 1) throw ConfigError("classifier.repeats_per_point: must be >= 1");
    if (equality_tolerance >= jump_detection_min_step) {
      throw ConfigError("classifier: equality_tolerance must stay below jump min_step");
    }
  }
};

/// Finds (A, B) in one bank but different rows by scanning row-aligned
/// addresses. Throws a configuration error when the mapping cannot
/// produce such a pair.
inline std::pair<std::uint64_t, std::uint64_t> make_probe_pair(
    const dram::AddressMapping& mapping, const dram::DramGeometry& geom,
    std::uint64_t max_scan = 1 << 22) {
  const std::uint64_t a = 0;
  const dram::DramLocation la = dram::map_address(a, mapping, geom);
  const std::uint32_t bank_a = dram::global_bank(geom, la);
  const std::uint64_t limit =
      mapping.physical_bits >= 64 ? ~0ull : (1ull << mapping.physical_bits);
  for (std::uint64_t step = 1; step <= max_scan; ++step) {
    const std::uint64_t b = step * geom.row_size_bytes;
    if (b >= limit) break;
    const dram::DramLocation lb = dram::map_address(b, mapping, geom);
    if (dram::global_bank(geom, lb) == bank_a && lb.row != la.row) return {a, b};
  }
  throw ConfigError("classifier: cannot construct a same-bank probe pair under this mapping");
}

inline std::uint64_t median(std::vector<std::uint64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

using Curve = std::vector<std::pair<std::uint32_t, std::uint64_t>>;  // (n, cycles)

/// Median latency of the (n+1)-th access to one address, per n in the
/// schedule.
inline Curve run_single_curve(TimingSource& src, const ClassifierConfig& cfg) {
  cfg.validate();
  Curve curve;
  curve.reserve(cfg.n_schedule.size());
  for (std::uint32_t n : cfg.n_schedule) {
    std::vector<std::uint64_t> samples;
    samples.reserve(cfg.repeats_per_point);
    for (std::uint32_t r = 0; r < cfg.repeats_per_point; ++r) {
      samples.push_back(src.measure_single(cfg.probe_addr, n));
    }
    curve.emplace_back(n, median(std::move(samples)));
  }
  return curve;
}

/// Median latency of a row-conflicting access.
inline std::uint64_t run_conflict(TimingSource& src, const ClassifierConfig& cfg) {
  cfg.validate();
  std::vector<std::uint64_t> samples;
  samples.reserve(cfg.repeats_per_point);
  for (std::uint32_t r = 0; r < cfg.repeats_per_point; ++r) {
    samples.push_back(src.measure_conflict(cfg.probe_addr, cfg.conflict_addr));
  }
  return median(std::move(samples));
}

inline std::uint64_t absdiff(std::uint64_t a, std::uint64_t b) { return a > b ? a - b : b - a; }

namespace detail {
inline std::uint64_t median3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}
inline std::uint64_t spread3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return std::max({a, b, c}) - std::min({a, b, c});
}
/// A change point at index i needs three flat points on each side and a
/// level change of at least min_step between the plateau medians.
inline bool jump_at(const std::vector<std::uint64_t>& v, std::size_t i,
                    std::uint64_t min_step) {
  const std::uint64_t before = median3(v[i - 3], v[i - 2], v[i - 1]);
  const std::uint64_t after = median3(v[i], v[i + 1], v[i + 2]);
  return spread3(v[i - 3], v[i - 2], v[i - 1]) < min_step &&
         spread3(v[i], v[i + 1], v[i + 2]) < min_step &&
         absdiff(before, after) >= min_step;
}
}  // namespace detail

/// First index whose value starts a sustained level change of at least
/// `min_step`; nullopt when the series has no such change point.
inline std::optional<std::size_t> detect_jump(const std::vector<std::uint64_t>& values,
                                              std::uint64_t min_step) {
  if (values.size() < 6) return std::nullopt;
  for (std::size_t i = 3; i + 3 <= values.size(); ++i) {
    if (detail::jump_at(values, i, min_step)) return i;
  }
  return std::nullopt;
}

/// All non-overlapping change points, in order.
inline std::vector<std::size_t> detect_jumps(const std::vector<std::uint64_t>& values,
                                             std::uint64_t min_step) {
  std::vector<std::size_t> jumps;
  if (values.size() < 6) return jumps;
  for (std::size_t i = 3; i + 3 <= values.size();) {
    if (detail::jump_at(values, i, min_step)) {
      jumps.push_back(i);
      i += 3;
    } else {
      ++i;
    }
  }
  return jumps;
}

enum class VerdictKind { Closed, Open, Adaptive, Unclassifiable };

inline const char* to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::Closed: return "closed";
    case VerdictKind::Open: return "open";
    case VerdictKind::Adaptive: return "adaptive";
    case VerdictKind::Unclassifiable: return "unclassifiable";
  }
  return "?";
}

struct PolicyVerdict {
  VerdictKind kind = VerdictKind::Unclassifiable;
  Curve single_curve;
  std::uint64_t conflict_latency = 0;
  std::optional<std::size_t> jump_index;  ///< into single_curve
  std::string note;
};

/// Three-way decision: no Single/Conflict gap at large n means closed;
/// a flat Single curve away from Conflict means open; a single sustained
/// jump means adaptive. Anything else is reported, never guessed.
inline PolicyVerdict classify(TimingSource& src, const ClassifierConfig& cfg) {
  cfg.validate();
  PolicyVerdict verdict;
  verdict.single_curve = run_single_curve(src, cfg);
  verdict.conflict_latency = run_conflict(src, cfg);

  std::vector<std::uint64_t> values;
  values.reserve(verdict.single_curve.size());
  for (const auto& [n, cycles] : verdict.single_curve) {
    (void)n;
    values.push_back(cycles);
  }
  const std::uint64_t last = values.back();

  if (absdiff(last, verdict.conflict_latency) <= cfg.equality_tolerance) {
    verdict.kind = VerdictKind::Closed;
    verdict.note = "single(n_max) equals conflict latency: every access sees a pre-charged bank";
    return verdict;
  }
  const std::uint64_t lo = *std::min_element(values.begin(), values.end());
  const std::uint64_t hi = *std::max_element(values.begin(), values.end());
  if (hi - lo <= cfg.equality_tolerance) {
    verdict.kind = VerdictKind::Open;
    verdict.note = "single curve flat and below conflict latency: rows stay open";
    return verdict;
  }
  verdict.jump_index = detect_jump(values, cfg.jump_detection_min_step);
  if (verdict.jump_index) {
    verdict.kind = VerdictKind::Adaptive;
    verdict.note = "single curve steps at n=" +
                   std::to_string(verdict.single_curve[*verdict.jump_index].first) +
                   ": the page timeout adapts to the workload";
    return verdict;
  }
  verdict.kind = VerdictKind::Unclassifiable;
  verdict.note = "single curve is neither flat nor a clean step";
  return verdict;
}

}  // namespace rowsim::classifier
