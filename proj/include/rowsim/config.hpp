#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rowsim/attack.hpp"
#include "rowsim/cache.hpp"
#include "rowsim/classifier.hpp"
#include "rowsim/dram.hpp"
#include "rowsim/memctrl.hpp"
#include "rowsim/util.hpp"

namespace rowsim::cli {

using json = nlohmann::json;

/// Classifier run settings (probe addresses are constructed at runtime
/// from the mapping, not configured).
struct ClassifierSettings {
  std::uint32_t n_max = 10000;
  std::uint32_t points = 32;
  std::uint32_t repeats_per_point = 9;
  std::uint64_t equality_tolerance = 3;
  std::uint64_t jump_min_step = 10;
  Nanos probe_gap_ns = 200;

  classifier::ClassifierConfig build() const {
    classifier::ClassifierConfig cfg;
    cfg.n_schedule = classifier::geometric_schedule(1, n_max, points);
    cfg.repeats_per_point = repeats_per_point;
    cfg.equality_tolerance = equality_tolerance;
    cfg.jump_detection_min_step = jump_min_step;
    return cfg;
  }
};

struct SweepSettings {
  std::vector<std::string> policies;    // policy kinds to sweep over
  std::vector<std::string> bandwidths;  // bandwidth strings to sweep over
};

/// Fully validated run configuration with every default materialized.
struct RunConfig {
  std::uint64_t seed = 1;
  attack::SystemConfig sys;
  attack::AttackConfig atk;
  attack::PacketProfile profile;
  ClassifierSettings classifier;
  SweepSettings sweep;
};

namespace detail {

[[noreturn]] inline void fail_key(const std::string& path, const std::string& why) {
  throw ConfigError("config." + path + ": " + why);
}

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail_key(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!ok.count(key)) fail_key(path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail_key(key, "wrong type");
  }
}

inline std::uint64_t parse_addr(const json& v, const std::string& path) {
  if (v.is_number_unsigned() || v.is_number_integer()) return v.get<std::uint64_t>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    try {
      return std::stoull(s, nullptr, 0);
    } catch (const std::exception&) {
      fail_key(path, "cannot parse address '" + s + "'");
    }
  }
  fail_key(path, "address must be a number or hex string");
}

inline std::vector<std::uint64_t> parse_bitsets(const json& arr, const std::string& path) {
  if (!arr.is_array()) fail_key(path, "expected an array of bit-index arrays");
  std::vector<std::uint64_t> masks;
  for (const auto& set : arr) {
    if (!set.is_array()) fail_key(path, "expected an array of bit-index arrays");
    std::vector<unsigned> bits;
    for (const auto& b : set) bits.push_back(b.get<unsigned>());
    masks.push_back(dram::AddressMapping::mask_from_bits(bits));
  }
  return masks;
}

inline json bitsets_json(const std::vector<std::uint64_t>& masks) {
  json arr = json::array();
  for (std::uint64_t m : masks) arr.push_back(dram::AddressMapping::bits_from_mask(m));
  return arr;
}

inline attack::Bypass parse_bypass(const std::string& s, const std::string& path) {
  if (s == "cacheable") return attack::Bypass::Cacheable;
  if (s == "flushed") return attack::Bypass::Flushed;
  if (s == "uncached") return attack::Bypass::Uncached;
  fail_key(path, "bypass must be cacheable, flushed, or uncached");
}

inline std::string bandwidth_string(const attack::Bandwidth& bw) {
  std::ostringstream out;
  if (bw.amount == std::floor(bw.amount)) {
    out << static_cast<long long>(bw.amount);
  } else {
    out << bw.amount;
  }
  switch (bw.prefix) {
    case attack::SiPrefix::None: break;
    case attack::SiPrefix::Kilo: out << 'k'; break;
    case attack::SiPrefix::Mega: out << 'M'; break;
    case attack::SiPrefix::Giga: out << 'G'; break;
  }
  out << "bit";
  return out.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON -> structs
// ---------------------------------------------------------------------------

inline dram::DramGeometry geometry_from_json(const json& j) {
  detail::check_keys(j, "geometry",
                     {"channels", "dimms_per_channel", "ranks_per_dimm", "bank_groups",
                      "banks_per_group", "rows_per_bank", "row_size_bytes"});
  dram::DramGeometry g;
  g.channels = detail::get_or<std::uint32_t>(j, "channels", g.channels);
  g.dimms_per_channel = detail::get_or<std::uint32_t>(j, "dimms_per_channel", g.dimms_per_channel);
  g.ranks_per_dimm = detail::get_or<std::uint32_t>(j, "ranks_per_dimm", g.ranks_per_dimm);
  g.bank_groups = detail::get_or<std::uint32_t>(j, "bank_groups", g.bank_groups);
  g.banks_per_group = detail::get_or<std::uint32_t>(j, "banks_per_group", g.banks_per_group);
  g.rows_per_bank = detail::get_or<std::uint32_t>(j, "rows_per_bank", g.rows_per_bank);
  g.row_size_bytes = detail::get_or<std::uint32_t>(j, "row_size_bytes", g.row_size_bytes);
  g.validate();
  return g;
}

inline dram::AddressMapping mapping_from_json(const json& j, const dram::DramGeometry& g) {
  detail::check_keys(j, "mapping",
                     {"physical_bits", "channel", "dimm", "rank", "bank_group", "bank",
                      "row", "column"});
  dram::AddressMapping m;
  m.physical_bits = detail::get_or<unsigned>(j, "physical_bits", 32);
  auto coord = [&](const char* key) {
    return j.contains(key) ? detail::parse_bitsets(j.at(key), std::string("mapping.") + key)
                           : std::vector<std::uint64_t>{};
  };
  m.channel = coord("channel");
  m.dimm = coord("dimm");
  m.rank = coord("rank");
  m.bank_group = coord("bank_group");
  m.bank = coord("bank");
  m.row = coord("row");
  m.column = coord("column");
  m.validate(g);
  return m;
}

inline memctrl::TimingConfig timing_from_json(const json& j) {
  detail::check_keys(j, "timing",
                     {"t_rp", "t_rcd", "base_hit_latency", "dram_transfer_rate",
                      "double_clocked", "cpu_freq"});
  memctrl::TimingConfig t;
  t.t_rp = detail::get_or<std::uint32_t>(j, "t_rp", t.t_rp);
  t.t_rcd = detail::get_or<std::uint32_t>(j, "t_rcd", t.t_rcd);
  t.base_hit_latency = detail::get_or<std::uint64_t>(j, "base_hit_latency", t.base_hit_latency);
  t.dram_transfer_rate = detail::get_or<double>(j, "dram_transfer_rate", t.dram_transfer_rate);
  t.double_clocked = detail::get_or<bool>(j, "double_clocked", t.double_clocked);
  t.cpu_freq = detail::get_or<double>(j, "cpu_freq", t.cpu_freq);
  t.validate();
  return t;
}

inline memctrl::PagePolicy policy_from_json(const json& j) {
  detail::check_keys(j, "policy", {"kind", "fixed_open", "adaptive"});
  memctrl::PagePolicy p;
  const std::string kind = detail::get_or<std::string>(j, "kind", "closed");
  if (kind == "closed") p.kind = memctrl::PolicyKind::Closed;
  else if (kind == "fixed_open") p.kind = memctrl::PolicyKind::FixedOpen;
  else if (kind == "adaptive") p.kind = memctrl::PolicyKind::Adaptive;
  else detail::fail_key("policy.kind", "must be closed, fixed_open, or adaptive");
  if (j.contains("fixed_open")) {
    const json& f = j.at("fixed_open");
    detail::check_keys(f, "policy.fixed_open", {"timeout_ns"});
    p.fixed_timeout_ns = detail::get_or<Nanos>(f, "timeout_ns", p.fixed_timeout_ns);
  }
  if (j.contains("adaptive")) {
    const json& a = j.at("adaptive");
    detail::check_keys(a, "policy.adaptive",
                       {"initial_timeout_ns", "timeout_min_ns", "timeout_max_ns", "step_ns",
                        "check_period", "inc_threshold", "dec_threshold", "counter_saturation"});
    auto& ad = p.adaptive;
    ad.initial_timeout_ns = detail::get_or<Nanos>(a, "initial_timeout_ns", ad.initial_timeout_ns);
    ad.timeout_min_ns = detail::get_or<Nanos>(a, "timeout_min_ns", ad.timeout_min_ns);
    ad.timeout_max_ns = detail::get_or<Nanos>(a, "timeout_max_ns", ad.timeout_max_ns);
    ad.step_ns = detail::get_or<Nanos>(a, "step_ns", ad.step_ns);
    ad.check_period = detail::get_or<std::uint32_t>(a, "check_period", ad.check_period);
    ad.inc_threshold = detail::get_or<std::int32_t>(a, "inc_threshold", ad.inc_threshold);
    ad.dec_threshold = detail::get_or<std::int32_t>(a, "dec_threshold", ad.dec_threshold);
    ad.counter_saturation =
        detail::get_or<std::int32_t>(a, "counter_saturation", ad.counter_saturation);
  }
  p.validate();
  return p;
}

inline cache::CacheConfig cache_from_json(const json& j) {
  detail::check_keys(j, "cache",
                     {"slices", "sets_per_slice", "ways", "cat_ways", "line_size", "slice_hash"});
  cache::CacheConfig c;
  c.slices = detail::get_or<std::uint32_t>(j, "slices", c.slices);
  c.sets_per_slice = detail::get_or<std::uint32_t>(j, "sets_per_slice", c.sets_per_slice);
  c.ways = detail::get_or<std::uint32_t>(j, "ways", c.ways);
  c.cat_ways = detail::get_or<std::uint32_t>(j, "cat_ways", c.cat_ways);
  c.line_size = detail::get_or<std::uint32_t>(j, "line_size", c.line_size);
  if (j.contains("slice_hash")) c.slice_hash = detail::parse_bitsets(j.at("slice_hash"), "cache.slice_hash");
  c.validate();
  return c;
}

inline dram::FlipModel flip_model_from_json(const json& j) {
  detail::check_keys(j, "flip_model", {"thresholds", "susceptibility", "seed", "deterministic"});
  dram::FlipModel m;
  if (j.contains("thresholds")) {
    const json& t = j.at("thresholds");
    if (!t.is_object()) detail::fail_key("flip_model.thresholds", "expected an object");
    m.threshold_by_distance.clear();
    for (const auto& [key, value] : t.items()) {
      std::uint32_t distance = 0;
      try {
        distance = static_cast<std::uint32_t>(std::stoul(key));
      } catch (const std::exception&) {
        detail::fail_key("flip_model.thresholds", "distance keys must be integers");
      }
      m.threshold_by_distance[distance] = value.get<std::uint64_t>();
    }
  }
  m.susceptibility = detail::get_or<double>(j, "susceptibility", m.susceptibility);
  m.seed = detail::get_or<std::uint64_t>(j, "seed", m.seed);
  m.deterministic_mode = detail::get_or<bool>(j, "deterministic", m.deterministic_mode);
  m.validate();
  return m;
}

inline dram::TrrConfig trr_from_json(const json& j) {
  detail::check_keys(j, "trr",
                     {"enabled", "max_activation_count", "refresh_radius", "double_refresh"});
  dram::TrrConfig t;
  t.enabled = detail::get_or<bool>(j, "enabled", t.enabled);
  t.max_activation_count =
      detail::get_or<std::uint64_t>(j, "max_activation_count", t.max_activation_count);
  t.refresh_radius = detail::get_or<std::uint32_t>(j, "refresh_radius", t.refresh_radius);
  t.double_refresh = detail::get_or<bool>(j, "double_refresh", t.double_refresh);
  t.validate();
  return t;
}

inline attack::PacketProfile profile_from_json(const json& arr) {
  if (!arr.is_array()) detail::fail_key("attack.profile", "expected an array of functions");
  attack::PacketProfile profile;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& f = arr.at(i);
    const std::string path = "attack.profile[" + std::to_string(i) + "]";
    detail::check_keys(f, path, {"function", "calls_per_packet", "addresses"});
    attack::FunctionAccess fn;
    fn.label = detail::get_or<std::string>(f, "function", "");
    if (fn.label.empty()) detail::fail_key(path + ".function", "must not be empty");
    fn.calls_per_packet = detail::get_or<std::uint32_t>(f, "calls_per_packet", 1);
    if (!f.contains("addresses") || !f.at("addresses").is_array()) {
      detail::fail_key(path + ".addresses", "expected an array");
    }
    for (const auto& a : f.at("addresses")) {
      attack::AnnotatedAddress aa;
      if (a.is_object()) {
        detail::check_keys(a, path + ".addresses[]", {"addr", "bypass"});
        aa.addr = detail::parse_addr(a.at("addr"), path + ".addresses[].addr");
        aa.bypass = detail::parse_bypass(detail::get_or<std::string>(a, "bypass", "cacheable"),
                                         path + ".addresses[].bypass");
      } else {
        aa.addr = detail::parse_addr(a, path + ".addresses[]");
      }
      fn.addresses.push_back(aa);
    }
    profile.functions.push_back(std::move(fn));
  }
  profile.validate();
  return profile;
}

struct PatternSettings {
  bool present = false;
  attack::HammerPattern pattern;
  attack::Bypass bypass = attack::Bypass::Flushed;
  bool bypass_explicit = false;
};

inline PatternSettings pattern_from_json(const json& j) {
  detail::check_keys(j, "attack.pattern", {"kind", "bank", "row", "address_count", "bypass"});
  PatternSettings out;
  out.present = true;
  const std::string kind = detail::get_or<std::string>(j, "kind", "one_location");
  if (kind == "one_location") out.pattern.kind = attack::HammerPattern::Kind::OneLocation;
  else if (kind == "single_sided") out.pattern.kind = attack::HammerPattern::Kind::SingleSided;
  else if (kind == "double_sided") out.pattern.kind = attack::HammerPattern::Kind::DoubleSided;
  else detail::fail_key("attack.pattern.kind", "must be one_location, single_sided, or double_sided");
  out.pattern.bank = detail::get_or<std::uint32_t>(j, "bank", 0);
  out.pattern.row = detail::get_or<std::uint32_t>(j, "row", 0);
  out.pattern.address_count = detail::get_or<std::uint32_t>(j, "address_count", 8);
  if (j.contains("bypass")) {
    out.bypass = detail::parse_bypass(j.at("bypass").get<std::string>(), "attack.pattern.bypass");
    out.bypass_explicit = true;
  }
  return out;
}

inline attack::Bypass default_bypass_for(attack::BypassMode mode) {
  switch (mode) {
    case attack::BypassMode::FlushDriver: return attack::Bypass::Flushed;
    case attack::BypassMode::Uncached: return attack::Bypass::Uncached;
    case attack::BypassMode::CatEviction: return attack::Bypass::Cacheable;
  }
  return attack::Bypass::Cacheable;
}

inline void attack_from_json(const json& j, RunConfig& cfg) {
  detail::check_keys(j, "attack",
                     {"bandwidth", "prefix_convention", "frame_bytes", "duration_s",
                      "bypass_mode", "background_load", "arrival", "duty_on_ms", "duty_off_ms",
                      "profile", "pattern"});
  attack::AttackConfig& a = cfg.atk;
  if (j.contains("bandwidth")) {
    const json& b = j.at("bandwidth");
    if (b.is_string()) a.bandwidth = attack::Bandwidth::parse(b.get<std::string>());
    else if (b.is_number()) a.bandwidth = {b.get<double>(), attack::SiPrefix::None};
    else detail::fail_key("attack.bandwidth", "must be a string like '500Mbit' or a number");
  }
  const std::string conv = detail::get_or<std::string>(j, "prefix_convention", "binary");
  if (conv == "binary") a.prefix_convention = attack::PrefixConvention::Binary;
  else if (conv == "decimal") a.prefix_convention = attack::PrefixConvention::Decimal;
  else detail::fail_key("attack.prefix_convention", "must be binary or decimal");
  a.frame_bytes = detail::get_or<std::uint32_t>(j, "frame_bytes", a.frame_bytes);
  a.duration_s = detail::get_or<double>(j, "duration_s", a.duration_s);
  const std::string mode = detail::get_or<std::string>(j, "bypass_mode", "flush_driver");
  if (mode == "flush_driver") a.bypass_mode = attack::BypassMode::FlushDriver;
  else if (mode == "uncached") a.bypass_mode = attack::BypassMode::Uncached;
  else if (mode == "cat_eviction") a.bypass_mode = attack::BypassMode::CatEviction;
  else detail::fail_key("attack.bypass_mode", "must be flush_driver, uncached, or cat_eviction");
  a.background_load = detail::get_or<double>(j, "background_load", a.background_load);
  const std::string arrival = detail::get_or<std::string>(j, "arrival", "uniform");
  if (arrival == "uniform") a.arrival = attack::Arrival::Uniform;
  else if (arrival == "poisson") a.arrival = attack::Arrival::Poisson;
  else detail::fail_key("attack.arrival", "must be uniform or poisson");
  a.duty_on_ns = static_cast<Nanos>(std::llround(detail::get_or<double>(j, "duty_on_ms", 0.0) * 1e6));
  a.duty_off_ns = static_cast<Nanos>(std::llround(detail::get_or<double>(j, "duty_off_ms", 0.0) * 1e6));
  a.validate();

  if (j.contains("profile") && j.contains("pattern")) {
    detail::fail_key("attack", "profile and pattern are mutually exclusive");
  }
  if (j.contains("profile")) {
    cfg.profile = profile_from_json(j.at("profile"));
  } else if (j.contains("pattern")) {
    PatternSettings p = pattern_from_json(j.at("pattern"));
    const attack::Bypass bypass =
        p.bypass_explicit ? p.bypass : default_bypass_for(a.bypass_mode);
    cfg.profile =
        attack::pattern_profile(p.pattern, cfg.sys.mapping, cfg.sys.geometry, bypass, cfg.seed);
  } else {
    cfg.profile = attack::udp_funccount_profile(0x1000000, default_bypass_for(a.bypass_mode));
  }
}

inline ClassifierSettings classifier_from_json(const json& j) {
  detail::check_keys(j, "classifier",
                     {"n_max", "points", "repeats_per_point", "equality_tolerance",
                      "jump_min_step", "probe_gap_ns"});
  ClassifierSettings c;
  c.n_max = detail::get_or<std::uint32_t>(j, "n_max", c.n_max);
  c.points = detail::get_or<std::uint32_t>(j, "points", c.points);
  c.repeats_per_point = detail::get_or<std::uint32_t>(j, "repeats_per_point", c.repeats_per_point);
  c.equality_tolerance = detail::get_or<std::uint64_t>(j, "equality_tolerance", c.equality_tolerance);
  c.jump_min_step = detail::get_or<std::uint64_t>(j, "jump_min_step", c.jump_min_step);
  c.probe_gap_ns = detail::get_or<Nanos>(j, "probe_gap_ns", c.probe_gap_ns);
  c.build().validate();
  if (c.probe_gap_ns <= 0) detail::fail_key("classifier.probe_gap_ns", "must be positive");
  return c;
}

inline SweepSettings sweep_from_json(const json& j) {
  detail::check_keys(j, "sweep", {"policies", "bandwidths"});
  SweepSettings s;
  if (j.contains("policies")) {
    for (const auto& p : j.at("policies")) s.policies.push_back(p.get<std::string>());
  }
  if (j.contains("bandwidths")) {
    for (const auto& b : j.at("bandwidths")) s.bandwidths.push_back(b.get<std::string>());
  }
  for (const auto& p : s.policies) {
    if (p != "closed" && p != "fixed_open" && p != "adaptive") {
      detail::fail_key("sweep.policies", "unknown policy '" + p + "'");
    }
  }
  for (const auto& b : s.bandwidths) attack::Bandwidth::parse(b);
  return s;
}

/// Parses and validates a full configuration tree. Unknown keys are
/// rejected, every invariant is checked before anything runs.
inline RunConfig config_from_json(const json& j) {
  detail::check_keys(j, "",
                     {"seed", "geometry", "mapping", "timing", "policy", "cache", "flip_model",
                      "trr", "attack", "classifier", "sweep"});
  RunConfig cfg;
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.sys.geometry = j.contains("geometry") ? geometry_from_json(j.at("geometry"))
                                            : dram::DramGeometry{};
  cfg.sys.mapping = j.contains("mapping") ? mapping_from_json(j.at("mapping"), cfg.sys.geometry)
                                          : dram::synthetic_mapping(cfg.sys.geometry);
  cfg.sys.timing = j.contains("timing") ? timing_from_json(j.at("timing")) : memctrl::TimingConfig{};
  cfg.sys.policy = j.contains("policy") ? policy_from_json(j.at("policy")) : memctrl::PagePolicy{};
  cfg.sys.cache = j.contains("cache") ? cache_from_json(j.at("cache")) : cache::CacheConfig{};
  cfg.sys.flip_model =
      j.contains("flip_model") ? flip_model_from_json(j.at("flip_model")) : dram::FlipModel{};
  cfg.sys.trr = j.contains("trr") ? trr_from_json(j.at("trr")) : dram::TrrConfig{};
  if (j.contains("attack")) {
    attack_from_json(j.at("attack"), cfg);
  } else {
    cfg.profile = attack::udp_funccount_profile(0x1000000, default_bypass_for(cfg.atk.bypass_mode));
  }
  cfg.classifier = j.contains("classifier") ? classifier_from_json(j.at("classifier"))
                                            : ClassifierSettings{};
  cfg.sweep = j.contains("sweep") ? sweep_from_json(j.at("sweep")) : SweepSettings{};
  cfg.sys.validate();
  cfg.sys.timing.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// structs -> JSON (the effective config echoed into every report)
// ---------------------------------------------------------------------------

inline json effective_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  const auto& g = cfg.sys.geometry;
  j["geometry"] = {{"channels", g.channels},
                   {"dimms_per_channel", g.dimms_per_channel},
                   {"ranks_per_dimm", g.ranks_per_dimm},
                   {"bank_groups", g.bank_groups},
                   {"banks_per_group", g.banks_per_group},
                   {"rows_per_bank", g.rows_per_bank},
                   {"row_size_bytes", g.row_size_bytes}};
  const auto& m = cfg.sys.mapping;
  j["mapping"] = {{"physical_bits", m.physical_bits},
                  {"channel", detail::bitsets_json(m.channel)},
                  {"dimm", detail::bitsets_json(m.dimm)},
                  {"rank", detail::bitsets_json(m.rank)},
                  {"bank_group", detail::bitsets_json(m.bank_group)},
                  {"bank", detail::bitsets_json(m.bank)},
                  {"row", detail::bitsets_json(m.row)},
                  {"column", detail::bitsets_json(m.column)}};
  const auto& t = cfg.sys.timing;
  j["timing"] = {{"t_rp", t.t_rp},
                 {"t_rcd", t.t_rcd},
                 {"base_hit_latency", t.base_hit_latency},
                 {"dram_transfer_rate", t.dram_transfer_rate},
                 {"double_clocked", t.double_clocked},
                 {"cpu_freq", t.cpu_freq}};
  const auto& p = cfg.sys.policy;
  j["policy"] = {{"kind", memctrl::to_string(p.kind)},
                 {"fixed_open", {{"timeout_ns", p.fixed_timeout_ns}}},
                 {"adaptive",
                  {{"initial_timeout_ns", p.adaptive.initial_timeout_ns},
                   {"timeout_min_ns", p.adaptive.timeout_min_ns},
                   {"timeout_max_ns", p.adaptive.timeout_max_ns},
                   {"step_ns", p.adaptive.step_ns},
                   {"check_period", p.adaptive.check_period},
                   {"inc_threshold", p.adaptive.inc_threshold},
                   {"dec_threshold", p.adaptive.dec_threshold},
                   {"counter_saturation", p.adaptive.counter_saturation}}}};
  const auto& c = cfg.sys.cache;
  j["cache"] = {{"slices", c.slices},
                {"sets_per_slice", c.sets_per_slice},
                {"ways", c.ways},
                {"cat_ways", c.cat_ways},
                {"line_size", c.line_size},
                {"slice_hash", detail::bitsets_json(c.slice_hash)}};
  const auto& fm = cfg.sys.flip_model;
  json thresholds = json::object();
  for (const auto& [d, thr] : fm.threshold_by_distance) thresholds[std::to_string(d)] = thr;
  j["flip_model"] = {{"thresholds", thresholds},
                     {"susceptibility", fm.susceptibility},
                     {"seed", fm.seed},
                     {"deterministic", fm.deterministic_mode}};
  const auto& trr = cfg.sys.trr;
  j["trr"] = {{"enabled", trr.enabled},
              {"max_activation_count", trr.max_activation_count},
              {"refresh_radius", trr.refresh_radius},
              {"double_refresh", trr.double_refresh}};
  const auto& a = cfg.atk;
  json profile = json::array();
  for (const auto& fn : cfg.profile.functions) {
    json addresses = json::array();
    for (const auto& aa : fn.addresses) {
      addresses.push_back({{"addr", aa.addr}, {"bypass", attack::to_string(aa.bypass)}});
    }
    profile.push_back({{"function", fn.label},
                       {"calls_per_packet", fn.calls_per_packet},
                       {"addresses", addresses}});
  }
  j["attack"] = {{"bandwidth", detail::bandwidth_string(a.bandwidth)},
                 {"prefix_convention",
                  a.prefix_convention == attack::PrefixConvention::Binary ? "binary" : "decimal"},
                 {"frame_bytes", a.frame_bytes},
                 {"duration_s", a.duration_s},
                 {"bypass_mode", attack::to_string(a.bypass_mode)},
                 {"background_load", a.background_load},
                 {"arrival", a.arrival == attack::Arrival::Uniform ? "uniform" : "poisson"},
                 {"duty_on_ms", static_cast<double>(a.duty_on_ns) / 1e6},
                 {"duty_off_ms", static_cast<double>(a.duty_off_ns) / 1e6},
                 {"profile", profile}};
  const auto& cl = cfg.classifier;
  j["classifier"] = {{"n_max", cl.n_max},
                     {"points", cl.points},
                     {"repeats_per_point", cl.repeats_per_point},
                     {"equality_tolerance", cl.equality_tolerance},
                     {"jump_min_step", cl.jump_min_step},
                     {"probe_gap_ns", cl.probe_gap_ns}};
  if (!cfg.sweep.policies.empty() || !cfg.sweep.bandwidths.empty()) {
    j["sweep"] = {{"policies", cfg.sweep.policies}, {"bandwidths", cfg.sweep.bandwidths}};
  }
  return j;
}

/// Loads a config file; a report file (which embeds its effective
/// config) is accepted too, so any report can be re-executed.
inline RunConfig load_config(const std::string& path, json* effective_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  if (j.is_object() && j.contains("schema_version") && j.contains("config")) {
    j = j.at("config");  // re-execute a report from its own header
  }
  RunConfig cfg = config_from_json(j);
  if (effective_out) *effective_out = effective_json(cfg);
  return cfg;
}

}  // namespace rowsim::cli
