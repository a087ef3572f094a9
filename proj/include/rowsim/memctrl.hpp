#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "rowsim/util.hpp"

namespace rowsim::memctrl {

/// DRAM/CPU timing needed to turn access classes into CPU cycles.
struct TimingConfig {
  std::uint32_t t_rp = 14;    ///< pre-charge to activate, DRAM clock cycles
  std::uint32_t t_rcd = 14;   ///< activate to column select, DRAM clock cycles
  std::uint64_t base_hit_latency = 200;  ///< CPU cycles for a row hit
  double dram_transfer_rate = 2133.0;    ///< MT/s
  bool double_clocked = true;            ///< true for DDR4
  double cpu_freq = 4.0e9;               ///< Hz

  double effective_dram_clock_mhz() const {
    return dram_transfer_rate / (double_clocked ? 2.0 : 1.0);
  }

  double effective_dram_hz() const { return effective_dram_clock_mhz() * 1e6; }

  double ns_per_dram_cycle() const { return 1000.0 / effective_dram_clock_mhz(); }

  void validate() const {
    if (dram_transfer_rate <= 0 || cpu_freq <= 0 || base_hit_latency == 0) {
      throw ConfigError("timing: rates and base latency must be positive");
    }
    // The CPU clock must not be slower than the effective DRAM clock,
    // otherwise cycle conversion can collapse the hit/empty/conflict order.
    if (cpu_freq < effective_dram_clock_mhz() * 1e6) {
      throw ConfigError("timing.cpu_freq: must be >= the effective DRAM clock");
    }
  }
};

enum class AccessClass { RowHit, PageEmpty, RowConflict };

inline const char* to_string(AccessClass c) {
  switch (c) {
    case AccessClass::RowHit: return "row_hit";
    case AccessClass::PageEmpty: return "page_empty";
    case AccessClass::RowConflict: return "row_conflict";
  }
  return "?";
}

/// page_empty costs tRP over a hit, row_conflict costs tRP + tRCD.
/// The conversion from DRAM cycles to CPU cycles is pinned as one IEEE
/// double division, ceil(cycles * cpu_freq / effective_dram_hz), so
/// that integral clock ratios convert without rounding artifacts.
inline std::uint64_t latency_cycles(AccessClass cls, const TimingConfig& t) {
  std::uint64_t extra_dram_cycles = 0;
  switch (cls) {
    case AccessClass::RowHit: break;
    case AccessClass::PageEmpty: extra_dram_cycles = t.t_rp; break;
    case AccessClass::RowConflict: extra_dram_cycles = std::uint64_t(t.t_rp) + t.t_rcd; break;
  }
  const double extra_cpu =
      static_cast<double>(extra_dram_cycles) * t.cpu_freq / t.effective_dram_hz();
  return t.base_hit_latency + static_cast<std::uint64_t>(std::ceil(extra_cpu));
}

struct AccessOutcome {
  AccessClass cls = AccessClass::PageEmpty;
  std::uint64_t latency = 0;  ///< CPU cycles

  /// The row had to be opened (counts as a row activation).
  bool activated() const { return cls != AccessClass::RowHit; }
};

enum class PolicyKind { Closed, FixedOpen, Adaptive };

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Closed: return "closed";
    case PolicyKind::FixedOpen: return "fixed_open";
    case PolicyKind::Adaptive: return "adaptive";
  }
  return "?";
}

/// Page policy selection plus the adaptive-policy tuning constants.
/// The adaptive constants of real controllers are not public; these
/// defaults are config-overridable.
struct PagePolicy {
  PolicyKind kind = PolicyKind::Closed;

  Nanos fixed_timeout_ns = 1000;  ///< FixedOpen: row stays open this long

  struct Adaptive {
    Nanos initial_timeout_ns = 0;
    Nanos timeout_min_ns = 0;
    Nanos timeout_max_ns = 10000;
    Nanos step_ns = 25;
    std::uint32_t check_period = 64;  ///< accesses between mistake-counter checks
    std::int32_t inc_threshold = 8;
    std::int32_t dec_threshold = -8;
    std::int32_t counter_saturation = 127;
  } adaptive;

  void validate() const {
    if (kind == PolicyKind::FixedOpen && fixed_timeout_ns < 0) {
      throw ConfigError("policy.fixed_open.timeout_ns: must be >= 0");
    }
    if (kind == PolicyKind::Adaptive) {
      const auto& a = adaptive;
      if (a.timeout_min_ns < 0 || a.timeout_max_ns < a.timeout_min_ns) {
        throw ConfigError("policy.adaptive: timeout range is inverted");
      }
      if (a.initial_timeout_ns < a.timeout_min_ns || a.initial_timeout_ns > a.timeout_max_ns) {
        throw ConfigError("policy.adaptive.initial_timeout_ns: outside [min, max]");
      }
      if (a.step_ns <= 0) throw ConfigError("policy.adaptive.step_ns: must be positive");
      if (a.check_period == 0) throw ConfigError("policy.adaptive.check_period: must be >= 1");
      if (a.counter_saturation <= 0) {
        throw ConfigError("policy.adaptive.counter_saturation: must be positive");
      }
      if (a.inc_threshold <= a.dec_threshold) {
        throw ConfigError("policy.adaptive: inc_threshold must exceed dec_threshold");
      }
    }
  }
};

/// Row-buffer state of one bank. Preemptive closes are evaluated lazily
/// at the next access, which observably matches a background timer.
struct BankState {
  std::optional<std::uint32_t> open_row;
  Nanos last_access = 0;  ///< time the open row was last touched
  std::optional<std::uint32_t> last_closed_row;

  // adaptive-policy bookkeeping
  Nanos timeout_register_ns = 0;
  std::int32_t mistake_counter = 0;
  std::uint32_t accesses_since_check = 0;

  Nanos last_time = 0;  ///< monotonicity guard
};

inline BankState make_bank_state(const PagePolicy& policy) {
  BankState s;
  s.timeout_register_ns = policy.adaptive.initial_timeout_ns;
  return s;
}

enum class AdaptiveEvent { Conflict, EmptyCouldHaveHit };

/// Per-access bookkeeping of the adaptive policy: every access advances
/// the check counter; every check_period accesses the timeout register
/// moves by one step if the mistake counter crossed a threshold.
inline void adaptive_tick(BankState& state, const PagePolicy& policy) {
  const auto& a = policy.adaptive;
  if (++state.accesses_since_check < a.check_period) return;
  if (state.mistake_counter > a.inc_threshold) {
    state.timeout_register_ns = std::min(state.timeout_register_ns + a.step_ns, a.timeout_max_ns);
  } else if (state.mistake_counter < a.dec_threshold) {
    state.timeout_register_ns = std::max(state.timeout_register_ns - a.step_ns, a.timeout_min_ns);
  }
  state.mistake_counter = 0;
  state.accesses_since_check = 0;
}

/// Feeds one mistake-counter event into the adaptive policy. A conflict
/// means the row was kept open too long (decrement); a page-empty access
/// that would have hit the last closed row means it was closed too early
/// (increment).
inline void adaptive_update(BankState& state, AdaptiveEvent event, const PagePolicy& policy) {
  if (policy.kind != PolicyKind::Adaptive) {
    throw MisuseError("adaptive_update: policy is not adaptive");
  }
  const auto& a = policy.adaptive;
  if (event == AdaptiveEvent::Conflict) {
    state.mistake_counter = std::max(state.mistake_counter - 1, -a.counter_saturation);
  } else {
    state.mistake_counter = std::min(state.mistake_counter + 1, a.counter_saturation);
  }
  adaptive_tick(state, policy);
}

inline Nanos open_row_timeout(const BankState& state, const PagePolicy& policy) {
  switch (policy.kind) {
    case PolicyKind::FixedOpen: return policy.fixed_timeout_ns;
    case PolicyKind::Adaptive: return state.timeout_register_ns;
    case PolicyKind::Closed: return 0;
  }
  return 0;
}

/// One access to `row` of the bank at time `time`: applies any policy
/// close that fell due before `time`, classifies the access, updates the
/// adaptive counters, and leaves the row-buffer state per the policy.
inline AccessOutcome access(BankState& state, std::uint32_t row, Nanos time,
                            const PagePolicy& policy, const TimingConfig& timing) {
  if (time < state.last_time) throw OrderingError("access: time went backwards");
  state.last_time = time;

  if (state.open_row &&
      (policy.kind == PolicyKind::FixedOpen || policy.kind == PolicyKind::Adaptive)) {
    const Nanos deadline = state.last_access + open_row_timeout(state, policy);
    if (time >= deadline) {
      state.last_closed_row = state.open_row;
      state.open_row.reset();
    }
  }

  AccessClass cls;
  if (state.open_row && *state.open_row == row) {
    cls = AccessClass::RowHit;
  } else if (!state.open_row) {
    cls = AccessClass::PageEmpty;
  } else {
    cls = AccessClass::RowConflict;
  }

  if (policy.kind == PolicyKind::Adaptive) {
    if (cls == AccessClass::RowConflict) {
      adaptive_update(state, AdaptiveEvent::Conflict, policy);
    } else if (cls == AccessClass::PageEmpty && state.last_closed_row &&
               *state.last_closed_row == row) {
      adaptive_update(state, AdaptiveEvent::EmptyCouldHaveHit, policy);
    } else {
      adaptive_tick(state, policy);
    }
  }

  switch (policy.kind) {
    case PolicyKind::Closed:
      state.open_row.reset();
      state.last_closed_row = row;
      break;
    case PolicyKind::FixedOpen:
    case PolicyKind::Adaptive:
      if (cls == AccessClass::RowConflict) state.last_closed_row = state.open_row;
      state.open_row = row;
      state.last_access = time;
      break;
  }

  return {cls, latency_cycles(cls, timing)};
}

}  // namespace rowsim::memctrl
