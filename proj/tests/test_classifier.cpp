#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "rowsim/classifier.hpp"

using namespace rowsim;
using namespace rowsim::classifier;

namespace {

memctrl::TimingConfig test_timing() {
  memctrl::TimingConfig t;
  t.t_rp = 14;
  t.t_rcd = 14;
  t.base_hit_latency = 200;
  t.dram_transfer_rate = 2133.0;
  t.double_clocked = true;
  t.cpu_freq = 4.0e9;
  return t;
}

ClassifierConfig probe_config(const dram::AddressMapping& m, const dram::DramGeometry& g) {
  ClassifierConfig cfg;
  const auto [a, b] = make_probe_pair(m, g);
  cfg.probe_addr = a;
  cfg.conflict_addr = b;
  return cfg;
}

SimulatedTimingSource make_source(memctrl::PolicyKind kind, Nanos fixed_timeout = 1000,
                                  Nanos gap = 200) {
  memctrl::PagePolicy p;
  p.kind = kind;
  p.fixed_timeout_ns = fixed_timeout;
  const dram::DramGeometry g;
  return SimulatedTimingSource(p, test_timing(), dram::synthetic_mapping(g), g, gap);
}

/// Fixed-script source for decision-logic tests.
struct ScriptedSource : TimingSource {
  std::vector<std::uint64_t> curve;
  std::uint64_t conflict = 0;
  std::size_t at = 0;

  std::uint64_t measure_single(std::uint64_t, std::uint32_t) override {
    const std::uint64_t v = curve[at % curve.size()];
    ++at;
    return v;
  }
  std::uint64_t measure_conflict(std::uint64_t, std::uint64_t) override { return conflict; }
};

}  // namespace

TEST_CASE("make_probe_pair returns a same-bank different-row pair") {
  const dram::DramGeometry g;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  const auto [a, b] = make_probe_pair(m, g);
  const auto la = dram::map_address(a, m, g);
  const auto lb = dram::map_address(b, m, g);
  CHECK(dram::global_bank(g, la) == dram::global_bank(g, lb));
  CHECK(la.row != lb.row);
}

TEST_CASE("make_probe_pair fails when no second row exists") {
  dram::DramGeometry g;
  g.rows_per_bank = 1;
  g.bank_groups = 1;
  g.banks_per_group = 1;
  g.row_size_bytes = 64;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  CHECK_THROWS_AS(make_probe_pair(m, g), ConfigError);
}

TEST_CASE("closed policy: single curve is flat at the page-empty latency") {
  auto src = make_source(memctrl::PolicyKind::Closed);
  const dram::DramGeometry g;
  ClassifierConfig cfg = probe_config(dram::synthetic_mapping(g), g);
  const Curve curve = run_single_curve(src, cfg);
  const std::uint64_t empty = memctrl::latency_cycles(memctrl::AccessClass::PageEmpty, test_timing());
  for (const auto& [n, latency] : curve) {
    (void)n;
    CHECK(latency == empty);
  }
  CHECK(run_conflict(src, cfg) == empty);  // pre-charged either way
}

TEST_CASE("fixed open policy with gap below timeout: flat at the row-hit latency") {
  auto src = make_source(memctrl::PolicyKind::FixedOpen, 1000, 200);
  const dram::DramGeometry g;
  ClassifierConfig cfg = probe_config(dram::synthetic_mapping(g), g);
  const Curve curve = run_single_curve(src, cfg);
  const std::uint64_t hit = memctrl::latency_cycles(memctrl::AccessClass::RowHit, test_timing());
  for (const auto& [n, latency] : curve) {
    (void)n;
    CHECK(latency == hit);
  }
  CHECK(run_conflict(src, cfg) ==
        memctrl::latency_cycles(memctrl::AccessClass::RowConflict, test_timing()));
}

TEST_CASE("conflict latency equals the formula for random timings under an open policy") {
  SplitMix64 rng(2);
  const dram::DramGeometry g;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  for (int i = 0; i < 50; ++i) {
    memctrl::TimingConfig t = test_timing();
    t.t_rp = 1 + static_cast<std::uint32_t>(rng.next_below(30));
    t.t_rcd = 1 + static_cast<std::uint32_t>(rng.next_below(30));
    memctrl::PagePolicy p;
    p.kind = memctrl::PolicyKind::FixedOpen;
    p.fixed_timeout_ns = 1000;
    SimulatedTimingSource src(p, t, m, g, 200);
    ClassifierConfig cfg = probe_config(m, g);
    CHECK(run_conflict(src, cfg) ==
          memctrl::latency_cycles(memctrl::AccessClass::RowConflict, t));
  }
}

TEST_CASE("degenerate zero timings: conflict equals the single curve") {
  memctrl::TimingConfig t = test_timing();
  t.t_rp = 0;
  t.t_rcd = 0;
  memctrl::PagePolicy p;
  p.kind = memctrl::PolicyKind::FixedOpen;
  p.fixed_timeout_ns = 1000;
  const dram::DramGeometry g;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  SimulatedTimingSource src(p, t, m, g, 200);
  ClassifierConfig cfg = probe_config(m, g);
  const Curve curve = run_single_curve(src, cfg);
  CHECK(run_conflict(src, cfg) == curve.back().second);
  CHECK(classify(src, cfg).kind == VerdictKind::Closed);
}

TEST_CASE("adaptive policy: step-shaped curve with exactly one jump at the predicted n") {
  memctrl::PagePolicy p;
  p.kind = memctrl::PolicyKind::Adaptive;  // defaults: step 25 ns, period 64, start 0
  const dram::DramGeometry g;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  const Nanos gap = 200;
  SimulatedTimingSource src(p, test_timing(), m, g, gap);
  ClassifierConfig cfg = probe_config(m, g);
  const Curve curve = run_single_curve(src, cfg);

  // The register must exceed the probe gap to keep the row open:
  // k = floor(gap/step) + 1 checks, each after check_period accesses.
  const std::uint32_t jump_n =
      p.adaptive.check_period *
      static_cast<std::uint32_t>(gap / p.adaptive.step_ns + 1);
  const std::uint64_t hit = memctrl::latency_cycles(memctrl::AccessClass::RowHit, test_timing());
  const std::uint64_t empty = memctrl::latency_cycles(memctrl::AccessClass::PageEmpty, test_timing());
  for (const auto& [n, latency] : curve) {
    CHECK(latency == (n >= jump_n ? hit : empty));
  }
  std::vector<std::uint64_t> values;
  for (const auto& [n, latency] : curve) {
    (void)n;
    values.push_back(latency);
  }
  CHECK(detect_jumps(values, cfg.jump_detection_min_step).size() == 1);

  const PolicyVerdict verdict = classify(src, cfg);
  CHECK(verdict.kind == VerdictKind::Adaptive);
  REQUIRE(verdict.jump_index.has_value());
  CHECK(verdict.single_curve[*verdict.jump_index].first >= jump_n);
}

TEST_CASE("adaptive policy outside the probed regime aliases to closed") {
  memctrl::PagePolicy p;
  p.kind = memctrl::PolicyKind::Adaptive;
  p.adaptive.timeout_max_ns = 100;  // below the 200 ns probe gap
  const dram::DramGeometry g;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  SimulatedTimingSource src(p, test_timing(), m, g, 200);
  ClassifierConfig cfg = probe_config(m, g);
  CHECK(classify(src, cfg).kind == VerdictKind::Closed);
}

TEST_CASE("detect_jump") {
  SECTION("flat series has no jump") {
    CHECK_FALSE(detect_jump({100, 100, 100, 100, 100, 100}, 20).has_value());
  }
  SECTION("constructed step at index 3") {
    const auto jump = detect_jump({100, 100, 100, 60, 60, 60}, 20);
    REQUIRE(jump.has_value());
    CHECK(*jump == 3);
  }
  SECTION("short series has no jump") {
    CHECK_FALSE(detect_jump({100, 60, 60}, 20).has_value());
  }
  SECTION("seeded jitter does not move the change point") {
    SplitMix64 rng(8);
    for (int round = 0; round < 200; ++round) {
      const std::size_t length = 12 + rng.next_below(20);
      const std::size_t step_at = 4 + rng.next_below(length - 8);
      std::vector<std::uint64_t> clean(length);
      for (std::size_t i = 0; i < length; ++i) clean[i] = i < step_at ? 250 : 200;
      const auto clean_jump = detect_jump(clean, 20);
      REQUIRE(clean_jump.has_value());

      std::vector<std::uint64_t> noisy = clean;
      for (auto& v : noisy) v += rng.next_below(5) - 2;  // +-2 cycles of jitter
      const auto noisy_jump = detect_jump(noisy, 20);
      REQUIRE(noisy_jump.has_value());
      CHECK(*noisy_jump == *clean_jump);
    }
  }
}

TEST_CASE("a ramp that never plateaus is unclassifiable") {
  ScriptedSource src;
  for (int i = 0; i < 32; ++i) src.curve.push_back(200 + 5 * i);
  src.conflict = 500;
  ClassifierConfig cfg;
  cfg.n_schedule = geometric_schedule(1, 10000, 32);
  cfg.repeats_per_point = 1;
  const PolicyVerdict verdict = classify(src, cfg);
  CHECK(verdict.kind == VerdictKind::Unclassifiable);
}

TEST_CASE("verdicts are stable across reruns") {
  for (auto kind : {memctrl::PolicyKind::Closed, memctrl::PolicyKind::FixedOpen,
                    memctrl::PolicyKind::Adaptive}) {
    auto src = make_source(kind);
    const dram::DramGeometry g;
    ClassifierConfig cfg = probe_config(dram::synthetic_mapping(g), g);
    const PolicyVerdict first = classify(src, cfg);
    const PolicyVerdict second = classify(src, cfg);
    CHECK(first.kind == second.kind);
    CHECK(first.single_curve == second.single_curve);
    CHECK(first.conflict_latency == second.conflict_latency);
  }
}

TEST_CASE("randomized controllers are classified correctly inside the detectable regime") {
  SplitMix64 rng(99);
  const dram::DramGeometry g;
  const dram::AddressMapping m = dram::synthetic_mapping(g);
  const Nanos gap = 200;
  int checked = 0;
  for (int i = 0; i < 30; ++i) {
    memctrl::TimingConfig t = test_timing();
    t.t_rp = 8 + static_cast<std::uint32_t>(rng.next_below(20));
    t.t_rcd = 8 + static_cast<std::uint32_t>(rng.next_below(20));

    memctrl::PagePolicy p;
    const auto pick = rng.next_below(3);
    if (pick == 0) {
      p.kind = memctrl::PolicyKind::Closed;
    } else if (pick == 1) {
      p.kind = memctrl::PolicyKind::FixedOpen;
      p.fixed_timeout_ns = 2 * gap + static_cast<Nanos>(rng.next_below(5000));
    } else {
      p.kind = memctrl::PolicyKind::Adaptive;
      p.adaptive.step_ns = 25 + static_cast<Nanos>(25 * rng.next_below(3));
      p.adaptive.check_period = 16u << rng.next_below(3);
    }
    SimulatedTimingSource src(p, t, m, g, gap);
    ClassifierConfig cfg = probe_config(m, g);
    const PolicyVerdict verdict = classify(src, cfg);
    const VerdictKind expected = pick == 0   ? VerdictKind::Closed
                                 : pick == 1 ? VerdictKind::Open
                                             : VerdictKind::Adaptive;
    CHECK(verdict.kind == expected);
    ++checked;
  }
  CHECK(checked == 30);
}
