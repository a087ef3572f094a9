#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <vector>

#include "rowsim/dram.hpp"

using namespace rowsim;
using namespace rowsim::dram;

namespace {

DramGeometry small_geometry() {
  DramGeometry g;
  g.bank_groups = 2;
  g.banks_per_group = 2;
  g.rows_per_bank = 256;
  g.row_size_bytes = 1024;
  return g;
}

/// Independent bit-by-bit evaluator: walks the bit-index lists directly
/// instead of the precomputed masks.
std::uint32_t oracle_coord(std::uint64_t addr, const std::vector<std::vector<unsigned>>& sets) {
  std::uint32_t value = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    unsigned parity = 0;
    for (unsigned bit : sets[i]) parity ^= static_cast<unsigned>((addr >> bit) & 1);
    value |= parity << i;
  }
  return value;
}

}  // namespace

TEST_CASE("map_address decodes address zero to the origin") {
  const DramGeometry g;
  const AddressMapping m = synthetic_mapping(g);
  const DramLocation loc = map_address(0, m, g);
  CHECK(loc == DramLocation{});
}

TEST_CASE("map_address single-bit bank set") {
  DramGeometry g;
  g.bank_groups = 1;
  g.banks_per_group = 2;
  g.rows_per_bank = 4;
  g.row_size_bytes = 64;
  AddressMapping m;
  m.physical_bits = 10;
  m.bank = {1ull << 6};
  m.row = {1ull << 7, 1ull << 8};
  m.column = {1, 2, 4, 8, 16, 32};
  m.validate(g);
  CHECK(map_address(0x40, m, g).bank == 1);
  CHECK(map_address(0x00, m, g).bank == 0);
}

TEST_CASE("map_address rejects addresses beyond the physical width") {
  const DramGeometry g;
  const AddressMapping m = synthetic_mapping(g);
  CHECK_THROWS_AS(map_address(1ull << m.physical_bits, m, g), ConfigError);
}

TEST_CASE("map_address agrees with a bit-by-bit oracle on random mappings") {
  SplitMix64 rng(42);
  const DramGeometry g = small_geometry();  // 2*2 banks, 256 rows, 1 KB rows
  // Random mapping: each coordinate bit XORs a random subset of the
  // non-column bits; columns keep the low bits to satisfy disjointness.
  std::vector<std::vector<unsigned>> column_sets, bg_sets, bank_sets, row_sets;
  for (unsigned i = 0; i < 10; ++i) column_sets.push_back({i});
  auto random_set = [&]() {
    std::vector<unsigned> bits;
    for (unsigned b = 10; b < 24; ++b) {
      if (rng.next() & 1) bits.push_back(b);
    }
    if (bits.empty()) bits.push_back(10);
    return bits;
  };
  for (unsigned i = 0; i < 1; ++i) bg_sets.push_back(random_set());
  for (unsigned i = 0; i < 1; ++i) bank_sets.push_back(random_set());
  for (unsigned i = 0; i < 8; ++i) row_sets.push_back(random_set());

  AddressMapping m;
  m.physical_bits = 24;
  auto to_masks = [](const std::vector<std::vector<unsigned>>& sets) {
    std::vector<std::uint64_t> masks;
    for (const auto& s : sets) masks.push_back(AddressMapping::mask_from_bits(s));
    return masks;
  };
  m.column = to_masks(column_sets);
  m.bank_group = to_masks(bg_sets);
  m.bank = to_masks(bank_sets);
  m.row = to_masks(row_sets);
  m.validate(g);

  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t addr = rng.next_below(1ull << 24);
    const DramLocation loc = map_address(addr, m, g);
    CHECK(loc.column == oracle_coord(addr, column_sets));
    CHECK(loc.bank_group == oracle_coord(addr, bg_sets));
    CHECK(loc.bank == oracle_coord(addr, bank_sets));
    CHECK(loc.row == oracle_coord(addr, row_sets));
  }
}

TEST_CASE("synthetic mapping: column bits never change the bank or row") {
  const DramGeometry g;
  const AddressMapping m = synthetic_mapping(g);
  SplitMix64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t base = rng.next_below(1ull << m.physical_bits) & ~std::uint64_t{8191};
    const std::uint64_t column = rng.next_below(8192);
    const DramLocation a = map_address(base, m, g);
    const DramLocation b = map_address(base | column, m, g);
    CHECK(a.row == b.row);
    CHECK(global_bank(g, a) == global_bank(g, b));
  }
}

TEST_CASE("find_address inverts the synthetic mapping") {
  const DramGeometry g = small_geometry();
  const AddressMapping m = synthetic_mapping(g);
  SplitMix64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto bank = static_cast<std::uint32_t>(rng.next_below(g.total_banks()));
    const auto row = static_cast<std::uint32_t>(rng.next_below(g.rows_per_bank));
    const auto addr = find_address(m, g, bank, row);
    REQUIRE(addr.has_value());
    const DramLocation loc = map_address(*addr, m, g);
    CHECK(global_bank(g, loc) == bank);
    CHECK(loc.row == row);
  }
}

TEST_CASE("geometry validation") {
  DramGeometry g;
  g.row_size_bytes = 1000;  // not a power of two
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = DramGeometry{};
  g.channels = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("ledger counts activations within one window") {
  const DramGeometry g = small_geometry();
  ActivationLedger ledger(g);
  DramLocation loc;
  loc.row = 5;
  ledger.record_activation(loc, 100);
  ledger.record_activation(loc, 200);
  ledger.record_activation(loc, 300);
  CHECK(ledger.count(0, 5) == 3);
  CHECK(ledger.activations_this_window() == 3);
}

TEST_CASE("ledger resets exactly at the window boundary") {
  const DramGeometry g = small_geometry();
  ActivationLedger ledger(g);  // 64 ms window
  DramLocation loc;
  loc.row = 9;
  ledger.record_activation(loc, 63'900'000);  // 63.9 ms
  CHECK(ledger.count(0, 9) == 1);
  ledger.record_activation(loc, 64'100'000);  // 64.1 ms -> next window
  CHECK(ledger.window_id() == 1);
  CHECK(ledger.count(0, 9) == 1);
  CHECK(ledger.activations_this_window() == 1);
}

TEST_CASE("ledger rejects time regressions") {
  const DramGeometry g = small_geometry();
  ActivationLedger ledger(g);
  DramLocation loc;
  ledger.record_activation(loc, 1000);
  CHECK_THROWS_AS(ledger.record_activation(loc, 999), OrderingError);
}

TEST_CASE("ledger replay matches an independent tally") {
  const DramGeometry g = small_geometry();
  ActivationLedger ledger(g);
  SplitMix64 rng(3);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> tally;
  Nanos t = 0;
  for (int i = 0; i < 100000; ++i) {
    DramLocation loc = bank_coords(g, static_cast<std::uint32_t>(rng.next_below(g.total_banks())));
    loc.row = static_cast<std::uint32_t>(rng.next_below(g.rows_per_bank));
    t += static_cast<Nanos>(rng.next_below(100));
    if (ledger.window_of(t) != ledger.window_id()) tally.clear();  // oracle window rollover
    ledger.record_activation(loc, t);
    ++tally[{global_bank(g, loc), loc.row}];
  }
  std::uint64_t total = 0;
  for (const auto& [key, count] : tally) {
    CHECK(ledger.count(key.first, key.second) == count);
    total += count;
  }
  CHECK(ledger.activations_this_window() == total);  // conservation
}

namespace {

ActivationLedger ledger_with(const DramGeometry& g,
                             const std::vector<std::pair<std::uint32_t, std::uint64_t>>& rows) {
  ActivationLedger ledger(g);
  Nanos t = 0;
  for (const auto& [row, count] : rows) {
    DramLocation loc;
    loc.row = row;
    for (std::uint64_t i = 0; i < count; ++i) ledger.record_activation(loc, t++);
  }
  return ledger;
}

}  // namespace

TEST_CASE("apply_trr refreshes neighbours of rows over the MAC") {
  const DramGeometry g = small_geometry();
  TrrConfig trr;
  trr.enabled = true;
  trr.max_activation_count = 10;

  SECTION("strictly above the MAC triggers") {
    const auto ledger = ledger_with(g, {{100, 11}});
    const RefreshSet refreshed = apply_trr(ledger, trr);
    REQUIRE(refreshed.size() == 2);
    CHECK(refreshed.count({0, 99}) == 1);
    CHECK(refreshed.count({0, 101}) == 1);
  }
  SECTION("exactly the MAC does not trigger") {
    const auto ledger = ledger_with(g, {{100, 10}});
    CHECK(apply_trr(ledger, trr).empty());
  }
  SECTION("two aggressors two rows apart") {
    const auto ledger = ledger_with(g, {{100, 11}, {102, 11}});
    const RefreshSet refreshed = apply_trr(ledger, trr);
    CHECK(refreshed.at({0, 101}) == 2);
    CHECK(refreshed.at({0, 99}) == 1);
    CHECK(refreshed.at({0, 103}) == 1);
    CHECK(refreshed.count({0, 98}) == 0);  // distance 2 from an aggressor
  }
}

TEST_CASE("evaluate_flips below every threshold is empty") {
  const DramGeometry g = small_geometry();
  FlipModel model;
  model.deterministic_mode = true;
  const auto ledger = ledger_with(g, {{100, 1000}});
  CHECK(evaluate_flips(ledger, model, {}).empty());
}

TEST_CASE("evaluate_flips: one aggressor over the Kim threshold flips both neighbours") {
  DramGeometry g = small_geometry();
  FlipModel model;
  model.threshold_by_distance = {{1, 139000}};
  model.deterministic_mode = true;
  ActivationLedger ledger(g);
  DramLocation loc;
  loc.row = 100;
  for (int i = 0; i < 393216; ++i) ledger.record_activation(loc, i);
  const auto flips = evaluate_flips(ledger, model, {});
  REQUIRE(flips.size() == 2);
  CHECK(flips[0] == FlipRecord{0, 99, 0, 1});
  CHECK(flips[1] == FlipRecord{0, 101, 0, 1});
}

TEST_CASE("evaluate_flips sums sandwiching aggressors and honours TRR") {
  const DramGeometry g = small_geometry();
  FlipModel model;
  model.threshold_by_distance = {{1, 139000}};
  model.deterministic_mode = true;
  const auto ledger = ledger_with(g, {{99, 70000}, {101, 70000}});

  SECTION("sum of 140000 at distance 1 flips the victim") {
    const auto flips = evaluate_flips(ledger, model, {});
    REQUIRE(flips.size() == 1);
    CHECK(flips[0].row == 100);
    CHECK(flips[0].distance == 1);
  }
  SECTION("TRR with a lower MAC refreshes the victim first") {
    TrrConfig trr;
    trr.enabled = true;
    trr.max_activation_count = 50000;
    CHECK(evaluate_flips(ledger, model, trr).empty());
  }
}

TEST_CASE("flip model invariants") {
  FlipModel model;
  SECTION("zero susceptibility never flips") {
    model.susceptibility = 0.0;
    model.deterministic_mode = false;
    model.threshold_by_distance = {{1, 10}};
    const auto ledger = ledger_with(small_geometry(), {{100, 1000}});
    CHECK(evaluate_flips(ledger, model, {}).empty());
  }
  SECTION("thresholds must be non-decreasing in distance") {
    model.threshold_by_distance = {{1, 100}, {2, 50}};
    CHECK_THROWS_AS(model.validate(), ConfigError);
  }
  SECTION("susceptibility fraction selects about the configured share of cells") {
    model.susceptibility = 0.25;
    model.seed = 99;
    std::uint64_t hits = 0;
    const std::uint64_t total = 100000;
    for (std::uint64_t c = 0; c < total; ++c) hits += model.cell_susceptible(1, 2, c);
    CHECK(std::abs(double(hits) / total - 0.25) < 0.01);
  }
}

TEST_CASE("monotonicity: adding activations never removes a flip (TRR off)") {
  const DramGeometry g = small_geometry();
  FlipModel model;
  model.threshold_by_distance = {{1, 50}, {2, 120}};
  model.deterministic_mode = true;
  SplitMix64 rng(17);
  for (int round = 0; round < 50; ++round) {
    std::vector<std::pair<std::uint32_t, std::uint64_t>> base;
    const int rows = 1 + static_cast<int>(rng.next_below(4));
    for (int r = 0; r < rows; ++r) {
      base.emplace_back(20 + static_cast<std::uint32_t>(rng.next_below(16)),
                        rng.next_below(200));
    }
    auto extended = base;
    extended.emplace_back(20 + static_cast<std::uint32_t>(rng.next_below(16)),
                          1 + rng.next_below(200));

    auto to_set = [&](const std::vector<std::pair<std::uint32_t, std::uint64_t>>& spec) {
      std::set<std::pair<std::uint32_t, std::uint32_t>> out;
      std::vector<std::pair<std::uint32_t, std::uint64_t>> nonzero;
      for (const auto& p : spec) {
        if (p.second > 0) nonzero.push_back(p);
      }
      for (const auto& f : evaluate_flips(ledger_with(g, nonzero), model, {})) {
        out.insert({f.bank, f.row});
      }
      return out;
    };
    const auto before = to_set(base);
    const auto after = to_set(extended);
    for (const auto& flip : before) CHECK(after.count(flip) == 1);
  }
}

TEST_CASE("TRR distance property at the ledger level") {
  const DramGeometry g = small_geometry();
  FlipModel model;
  model.threshold_by_distance = {{1, 500}, {2, 1000}};
  model.deterministic_mode = true;
  // Double-sided aggressors around row 100, both over the MAC.
  const auto ledger = ledger_with(g, {{99, 1300}, {101, 1300}});

  TrrConfig off;
  TrrConfig on;
  on.enabled = true;
  on.max_activation_count = 600;
  on.refresh_radius = 1;

  const auto flips_off = evaluate_flips(ledger, model, off);
  const auto flips_on = evaluate_flips(ledger, model, on);

  auto distance_set = [](const std::vector<FlipRecord>& flips, bool far) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const auto& f : flips) {
      if ((f.distance >= 2) == far) out.insert({f.bank, f.row});
    }
    return out;
  };
  CHECK(distance_set(flips_on, false).empty());
  CHECK_FALSE(distance_set(flips_off, false).empty());
  CHECK(distance_set(flips_on, true) == distance_set(flips_off, true));
}

TEST_CASE("double refresh halves the achievable per-window count") {
  const DramGeometry g = small_geometry();
  // Constant-rate trace: one activation every 1000 ns.
  auto max_count = [&](Nanos window) {
    ActivationLedger ledger(g, window);
    DramLocation loc;
    loc.row = 50;
    std::uint64_t best = 0;
    for (Nanos t = 0; t < 256'000'000; t += 1000) {
      if (ledger.window_of(t) != ledger.window_id()) {
        best = std::max(best, ledger.max_count());
      }
      ledger.record_activation(loc, t);
    }
    best = std::max(best, ledger.max_count());
    return best;
  };
  const std::uint64_t full = max_count(ActivationLedger::kDefaultWindow);
  const std::uint64_t half = max_count(ActivationLedger::kDefaultWindow / 2);
  CHECK(std::llabs(static_cast<long long>(full) - 2 * static_cast<long long>(half)) <= 2);
}

TEST_CASE("bank_collision_probability") {
  CHECK(bank_collision_probability(33, 32) == 1.0);
  CHECK(bank_collision_probability(1, 32) == 0.0);
  CHECK(bank_collision_probability(0, 32) == 0.0);
  CHECK_THAT(bank_collision_probability(8, 32),
             Catch::Matchers::WithinAbs(0.6143, 1e-4));  // exact product formula

  SECTION("non-decreasing in k") {
    double prev = 0.0;
    for (std::uint64_t k = 0; k <= 40; ++k) {
      const double p = bank_collision_probability(k, 32);
      CHECK(p >= prev);
      prev = p;
    }
  }
  SECTION("matches a Monte-Carlo estimate within 3 sigma") {
    SplitMix64 rng(123);
    const std::uint64_t trials = 1000000;
    std::uint64_t collided = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      std::uint32_t seen = 0;
      bool hit = false;
      for (int i = 0; i < 8 && !hit; ++i) {
        const std::uint32_t b = static_cast<std::uint32_t>(rng.next_below(32));
        hit = (seen >> b) & 1;
        seen |= 1u << b;
      }
      collided += hit;
    }
    const double p = bank_collision_probability(8, 32);
    const double estimate = double(collided) / double(trials);
    const double sigma = std::sqrt(p * (1 - p) / double(trials));
    CHECK(std::abs(estimate - p) < 3 * sigma);
  }
}

TEST_CASE("collisions_for") {
  const DramGeometry g;
  const AddressMapping m = synthetic_mapping(g);

  SECTION("empty input gives an empty histogram") {
    const auto hist = collisions_for({}, m, g);
    CHECK(hist.per_bank.empty());
    CHECK(hist.total == 0);
    CHECK(hist.max_bucket == 0);
  }
  SECTION("33 addresses in 32 banks always collide somewhere") {
    // 16-bank default geometry would make this trivial; use row-aligned
    // addresses spread over a 32-bank geometry.
    DramGeometry g32;
    g32.bank_groups = 4;
    g32.banks_per_group = 8;
    g32.rows_per_bank = 4096;
    const AddressMapping m32 = synthetic_mapping(g32);
    SplitMix64 rng(5);
    std::vector<std::uint64_t> addrs;
    for (int i = 0; i < 33; ++i) addrs.push_back(rng.next_below(1ull << m32.physical_bits));
    const auto hist = collisions_for(addrs, m32, g32);
    CHECK(hist.total == 33);
    CHECK(hist.max_bucket >= 2);  // pigeonhole
  }
  SECTION("histogram equals a per-address decode tally") {
    SplitMix64 rng(6);
    std::vector<std::uint64_t> addrs;
    for (int i = 0; i < 1000; ++i) addrs.push_back(rng.next_below(1ull << m.physical_bits));
    const auto hist = collisions_for(addrs, m, g);
    std::map<std::uint32_t, std::uint64_t> oracle;
    for (std::uint64_t a : addrs) ++oracle[global_bank(g, map_address(a, m, g))];
    CHECK(hist.per_bank == oracle);
    CHECK(hist.total == addrs.size());
  }
}

TEST_CASE("determinism: identical seeds give identical flip lists") {
  const DramGeometry g = small_geometry();
  FlipModel model;
  model.threshold_by_distance = {{1, 100}};
  model.susceptibility = 0.0005;
  model.seed = 77;
  const auto ledger = ledger_with(g, {{40, 500}, {80, 700}, {81, 300}});
  const auto a = evaluate_flips(ledger, model, {});
  const auto b = evaluate_flips(ledger, model, {});
  CHECK(a == b);
}
