#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rowsim/memctrl.hpp"

using namespace rowsim;
using namespace rowsim::memctrl;

namespace {

TimingConfig ddr4_2133() {
  TimingConfig t;
  t.t_rp = 14;
  t.t_rcd = 14;
  t.base_hit_latency = 200;
  t.dram_transfer_rate = 2133.0;
  t.double_clocked = true;
  t.cpu_freq = 4.0e9;
  return t;
}

PagePolicy fixed_open(Nanos timeout) {
  PagePolicy p;
  p.kind = PolicyKind::FixedOpen;
  p.fixed_timeout_ns = timeout;
  return p;
}

/// Direct evaluation of the documented conversion formula,
/// ceil(cycles * cpu_freq / effective_dram_hz), independent of
/// latency_cycles' control flow.
std::uint64_t oracle_extra(std::uint64_t dram_cycles, const TimingConfig& t) {
  const double hz = t.dram_transfer_rate / (t.double_clocked ? 2.0 : 1.0) * 1e6;
  return static_cast<std::uint64_t>(std::ceil(double(dram_cycles) * t.cpu_freq / hz));
}

}  // namespace

TEST_CASE("latency_cycles with zero timings collapses to the base latency") {
  TimingConfig t = ddr4_2133();
  t.t_rp = 0;
  t.t_rcd = 0;
  CHECK(latency_cycles(AccessClass::RowHit, t) == t.base_hit_latency);
  CHECK(latency_cycles(AccessClass::PageEmpty, t) == t.base_hit_latency);
  CHECK(latency_cycles(AccessClass::RowConflict, t) == t.base_hit_latency);
}

TEST_CASE("latency_cycles converts tRP=14 at DDR4-2133 and 4 GHz to 53 extra cycles") {
  const TimingConfig t = ddr4_2133();
  // 14 cycles / 1066.5 MHz = 13.13 ns -> 52.5 CPU cycles, rounded up.
  CHECK(latency_cycles(AccessClass::PageEmpty, t) - latency_cycles(AccessClass::RowHit, t) == 53);
}

TEST_CASE("latency conversion matches the formula oracle on random configs") {
  SplitMix64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    TimingConfig t;
    t.t_rp = 1 + static_cast<std::uint32_t>(rng.next_below(40));
    t.t_rcd = 1 + static_cast<std::uint32_t>(rng.next_below(40));
    t.base_hit_latency = 50 + rng.next_below(400);
    t.dram_transfer_rate = 800.0 + double(rng.next_below(2400));
    t.double_clocked = rng.next() & 1;
    const double min_cpu = t.dram_transfer_rate / (t.double_clocked ? 2.0 : 1.0) * 1e6;
    t.cpu_freq = min_cpu * (1.0 + double(rng.next_below(60)) / 10.0);
    t.validate();

    const std::uint64_t hit = latency_cycles(AccessClass::RowHit, t);
    const std::uint64_t empty = latency_cycles(AccessClass::PageEmpty, t);
    const std::uint64_t conflict = latency_cycles(AccessClass::RowConflict, t);
    CHECK(hit == t.base_hit_latency);
    CHECK(empty - hit == oracle_extra(t.t_rp, t));
    CHECK(conflict - hit == oracle_extra(std::uint64_t(t.t_rp) + t.t_rcd, t));
    CHECK(hit < empty);
    CHECK(empty < conflict);
  }
}

TEST_CASE("timing validation rejects a CPU slower than the DRAM clock") {
  TimingConfig t = ddr4_2133();
  t.cpu_freq = 5e8;  // 0.5 GHz < 1066.5 MHz
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("closed policy never produces hits or conflicts") {
  const TimingConfig t = ddr4_2133();
  PagePolicy p;  // closed
  BankState bank = make_bank_state(p);
  CHECK(access(bank, 7, 0, p, t).cls == AccessClass::PageEmpty);
  CHECK(access(bank, 7, 100, p, t).cls == AccessClass::PageEmpty);
  CHECK(access(bank, 9, 200, p, t).cls == AccessClass::PageEmpty);
  SplitMix64 rng(1);
  for (Nanos time = 300; time < 5000; time += 50) {
    CHECK(access(bank, static_cast<std::uint32_t>(rng.next_below(4)), time, p, t).cls ==
          AccessClass::PageEmpty);
  }
}

TEST_CASE("fixed open policy with a large timeout") {
  const TimingConfig t = ddr4_2133();
  const PagePolicy p = fixed_open(1'000'000'000'000);  // effectively infinite
  BankState bank = make_bank_state(p);
  CHECK(access(bank, 1, 0, p, t).cls == AccessClass::PageEmpty);
  CHECK(access(bank, 1, 100, p, t).cls == AccessClass::RowHit);
  CHECK(access(bank, 2, 200, p, t).cls == AccessClass::RowConflict);
}

TEST_CASE("fixed open policy closes the row after its timeout") {
  const TimingConfig t = ddr4_2133();
  const PagePolicy p = fixed_open(100);
  BankState bank = make_bank_state(p);
  CHECK(access(bank, 1, 0, p, t).cls == AccessClass::PageEmpty);
  CHECK(access(bank, 1, 150, p, t).cls == AccessClass::PageEmpty);  // closed at t=100
  CHECK(access(bank, 1, 200, p, t).cls == AccessClass::RowHit);     // 50 ns < timeout
}

TEST_CASE("open-policy constancy: repeated accesses all hit after the first") {
  const TimingConfig t = ddr4_2133();
  const PagePolicy p = fixed_open(500);
  BankState bank = make_bank_state(p);
  access(bank, 3, 0, p, t);
  std::uint64_t first_hit = 0;
  for (int n = 1; n <= 200; ++n) {
    const AccessOutcome out = access(bank, 3, Nanos(n) * 100, p, t);
    CHECK(out.cls == AccessClass::RowHit);
    if (n == 1) first_hit = out.latency;
    CHECK(out.latency == first_hit);
  }
}

TEST_CASE("access rejects time regressions") {
  const TimingConfig t = ddr4_2133();
  const PagePolicy p = fixed_open(100);
  BankState bank = make_bank_state(p);
  access(bank, 1, 1000, p, t);
  CHECK_THROWS_AS(access(bank, 1, 999, p, t), OrderingError);
}

TEST_CASE("activation accounting equals page_empty plus row_conflict") {
  const TimingConfig t = ddr4_2133();
  const PagePolicy p = fixed_open(300);
  BankState bank = make_bank_state(p);
  SplitMix64 rng(5);
  std::uint64_t activations = 0, empties = 0, conflicts = 0;
  Nanos time = 0;
  for (int i = 0; i < 5000; ++i) {
    time += static_cast<Nanos>(rng.next_below(600));
    const AccessOutcome out = access(bank, static_cast<std::uint32_t>(rng.next_below(3)), time, p, t);
    activations += out.activated();
    empties += out.cls == AccessClass::PageEmpty;
    conflicts += out.cls == AccessClass::RowConflict;
  }
  CHECK(activations == empties + conflicts);
}

TEST_CASE("adaptive_update requires an adaptive policy") {
  PagePolicy p;  // closed
  BankState bank = make_bank_state(p);
  CHECK_THROWS_AS(adaptive_update(bank, AdaptiveEvent::Conflict, p), MisuseError);
}

TEST_CASE("adaptive trajectory matches the hand-computed table") {
  PagePolicy p;
  p.kind = PolicyKind::Adaptive;
  p.adaptive.initial_timeout_ns = 50;
  p.adaptive.timeout_min_ns = 0;
  p.adaptive.timeout_max_ns = 100;
  p.adaptive.step_ns = 10;
  p.adaptive.check_period = 4;
  p.adaptive.inc_threshold = 2;
  p.adaptive.dec_threshold = -2;
  p.validate();
  BankState bank = make_bank_state(p);

  // 12 could-have-hit events, 20 conflicts, 18 could-have-hit events.
  std::vector<AdaptiveEvent> events;
  for (int i = 0; i < 12; ++i) events.push_back(AdaptiveEvent::EmptyCouldHaveHit);
  for (int i = 0; i < 20; ++i) events.push_back(AdaptiveEvent::Conflict);
  for (int i = 0; i < 18; ++i) events.push_back(AdaptiveEvent::EmptyCouldHaveHit);
  REQUIRE(events.size() == 50);

  // Expected (counter, register) after selected steps, computed by hand:
  // the register climbs by one step per full check period of increments,
  // falls on conflict periods, and the counter resets at every check.
  struct Expected {
    std::size_t step;
    std::int32_t counter;
    Nanos reg;
  };
  const std::vector<Expected> table = {
      {0, 1, 50},  {3, 0, 60},  {7, 0, 70},   {11, 0, 80}, {12, -1, 80},
      {15, 0, 70}, {23, 0, 50}, {31, 0, 30},  {35, 0, 40}, {43, 0, 60},
      {47, 0, 70}, {49, 2, 70},
  };

  // Independent step-by-step oracle replay alongside the implementation.
  std::int32_t oracle_counter = 0;
  Nanos oracle_reg = p.adaptive.initial_timeout_ns;
  std::uint32_t oracle_ticks = 0;
  std::size_t expected_at = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    adaptive_update(bank, events[i], p);
    oracle_counter += events[i] == AdaptiveEvent::EmptyCouldHaveHit ? 1 : -1;
    if (++oracle_ticks >= p.adaptive.check_period) {
      if (oracle_counter > p.adaptive.inc_threshold) {
        oracle_reg = std::min<Nanos>(oracle_reg + p.adaptive.step_ns, p.adaptive.timeout_max_ns);
      } else if (oracle_counter < p.adaptive.dec_threshold) {
        oracle_reg = std::max<Nanos>(oracle_reg - p.adaptive.step_ns, p.adaptive.timeout_min_ns);
      }
      oracle_counter = 0;
      oracle_ticks = 0;
    }
    CHECK(bank.mistake_counter == oracle_counter);
    CHECK(bank.timeout_register_ns == oracle_reg);
    if (expected_at < table.size() && table[expected_at].step == i) {
      CHECK(bank.mistake_counter == table[expected_at].counter);
      CHECK(bank.timeout_register_ns == table[expected_at].reg);
      ++expected_at;
    }
  }
  CHECK(expected_at == table.size());
}

namespace {

PagePolicy adaptive_default() {
  PagePolicy p;
  p.kind = PolicyKind::Adaptive;
  return p;  // min 0, max 10 us, step 25 ns, period 64, thresholds +-8
}

}  // namespace

TEST_CASE("adaptive policy learns to keep a periodically re-used row open") {
  const TimingConfig t = ddr4_2133();
  const PagePolicy p = adaptive_default();
  BankState bank = make_bank_state(p);
  const Nanos gap = 300;

  bool saw_hit = false;
  Nanos prev_reg = bank.timeout_register_ns;
  for (int i = 0; i < 2000; ++i) {
    const AccessOutcome out = access(bank, 5, Nanos(i) * gap, p, t);
    CHECK(bank.timeout_register_ns >= prev_reg);  // monotone under this workload
    prev_reg = bank.timeout_register_ns;
    if (i > 0 && out.cls == AccessClass::RowHit) saw_hit = true;
  }
  CHECK(saw_hit);
  CHECK(bank.timeout_register_ns >= gap);
}

TEST_CASE("adaptive policy drops the timeout under an alternating-row conflict stream") {
  const TimingConfig t = ddr4_2133();
  PagePolicy p = adaptive_default();
  p.adaptive.initial_timeout_ns = 1000;
  const PagePolicy policy = p;
  BankState bank = make_bank_state(policy);
  // The gap stays below one register step, so conflicts keep firing all
  // the way down to the minimum.
  for (int i = 0; i < 5000; ++i) {
    access(bank, i % 2 ? 10 : 20, Nanos(i) * 10, policy, t);
  }
  CHECK(bank.timeout_register_ns == policy.adaptive.timeout_min_ns);
}
