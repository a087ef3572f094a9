#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rowsim/attack.hpp"
#include "rowsim/classifier.hpp"
#include "rowsim/config.hpp"
#include "rowsim/exploit.hpp"
#include "rowsim/report.hpp"

namespace rowsim::cli {

inline std::string fmt_num(double v) {
  std::ostringstream out;
  out << std::setprecision(15) << v;
  return out.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open input file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline std::string default_config_path(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("ROWSIM_CONFIG")) return env;
  throw ConfigError("no config file: pass --config or set ROWSIM_CONFIG");
}

inline RunConfig load_run_config(const std::string& config_flag,
                                 std::uint64_t seed_override, bool seed_given,
                                 json* effective) {
  RunConfig cfg = load_config(default_config_path(config_flag), effective);
  if (seed_given) {
    cfg.seed = seed_override;
    if (effective) (*effective)["seed"] = cfg.seed;
  }
  return cfg;
}

struct SweepCell {
  std::size_t index = 0;
  std::string policy;
  std::string bandwidth;
  attack::SimReport report;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

inline int run_rates(const std::string& bandwidth_str, const std::string& prefix,
                     std::uint32_t frame_bytes, std::uint32_t calls, double window_ms,
                     std::vector<std::uint64_t> thresholds, const std::string& out_path,
                     std::ostream& out) {
  const attack::Bandwidth bw = attack::Bandwidth::parse(bandwidth_str);
  const attack::PrefixConvention conv = prefix == "decimal"
                                            ? attack::PrefixConvention::Decimal
                                            : attack::PrefixConvention::Binary;
  if (prefix != "binary" && prefix != "decimal") {
    throw ConfigError("--prefix must be binary or decimal");
  }
  if (thresholds.empty()) thresholds = attack::reference_thresholds();
  const double pkts = attack::packet_rate(bw, frame_bytes, conv);
  const double per_s = pkts * calls;
  const double per_interval = per_s * (window_ms / 1000.0);
  attack::FeasibilityVerdict verdict = attack::feasibility(per_interval, thresholds);
  verdict.packets_per_s = pkts;
  verdict.accesses_per_s = per_s;

  out << "packets_per_s: " << fmt_num(pkts) << "\n";
  out << "accesses_per_s: " << fmt_num(per_s) << "\n";
  out << "accesses_per_refresh_interval: " << fmt_num(per_interval) << "\n";
  for (const auto& [threshold, feasible] : verdict.per_threshold) {
    out << "threshold " << threshold << ": " << (feasible ? "feasible" : "infeasible") << "\n";
  }
  if (!out_path.empty()) {
    Report report;
    report.command = "rates";
    report.config = {{"bandwidth", bandwidth_str},
                     {"prefix_convention", prefix},
                     {"frame_bytes", frame_bytes},
                     {"calls_per_packet", calls},
                     {"window_ms", window_ms}};
    report.results = results_json(verdict);
    write_report_atomic(out_path, report);
  }
  return 0;
}

inline int run_simulate(const std::string& config_flag, std::uint64_t seed_override,
                        bool seed_given, const std::string& out_path,
                        const std::string& flips_csv, const std::string& trace_csv,
                        std::ostream& out) {
  json effective;
  RunConfig cfg = detail::load_run_config(config_flag, seed_override, seed_given, &effective);
  std::vector<attack::AccessTraceRow> trace_rows;
  attack::SimReport sim = attack::simulate(cfg.atk, cfg.profile, cfg.sys, cfg.seed,
                                           trace_csv.empty() ? nullptr : &trace_rows);
  Report report;
  report.command = "simulate";
  report.seed = cfg.seed;
  report.config = effective;
  report.results = results_json(sim, cfg.sys.geometry);
  write_report_atomic(out_path, report);

  if (!flips_csv.empty()) {
    std::ofstream csv(flips_csv, std::ios::trunc);
    if (!csv) throw Error("cannot write '" + flips_csv + "'");
    write_flips_csv(csv, sim.flips, cfg.sys.geometry);
  }
  if (!trace_csv.empty()) {
    std::ofstream csv(trace_csv, std::ios::trunc);
    if (!csv) throw Error("cannot write '" + trace_csv + "'");
    write_access_trace_csv(csv, trace_rows);
  }
  out << "windows: " << sim.windows << " (simulated " << sim.simulated_windows
      << (sim.fast_forwarded ? ", steady state replayed" : "") << ")\n";
  out << "dram_accesses: " << sim.dram_accesses << "\n";
  out << "flips: " << sim.flips.size() << "\n";
  out << "flips_per_hour: " << fmt_num(sim.flips_per_hour) << "\n";
  out << "report: " << out_path << "\n";
  return 0;
}

inline int run_sweep(const std::string& config_flag, std::uint64_t seed_override,
                     bool seed_given, const std::string& out_path, std::ostream& out) {
  json effective;
  RunConfig cfg = detail::load_run_config(config_flag, seed_override, seed_given, &effective);
  std::vector<std::string> policies = cfg.sweep.policies;
  if (policies.empty()) policies = {"closed", "fixed_open", "adaptive"};
  std::vector<std::string> bandwidths = cfg.sweep.bandwidths;
  if (bandwidths.empty()) bandwidths = {detail::bandwidth_string(cfg.atk.bandwidth)};

  std::vector<std::future<detail::SweepCell>> cells;
  std::size_t index = 0;
  for (const auto& policy : policies) {
    for (const auto& bandwidth : bandwidths) {
      const std::size_t cell_index = index++;
      cells.push_back(std::async(std::launch::async, [cell_index, policy, bandwidth, cfg]() {
        RunConfig local = cfg;
        if (policy == "closed") local.sys.policy.kind = memctrl::PolicyKind::Closed;
        if (policy == "fixed_open") local.sys.policy.kind = memctrl::PolicyKind::FixedOpen;
        if (policy == "adaptive") local.sys.policy.kind = memctrl::PolicyKind::Adaptive;
        local.atk.bandwidth = attack::Bandwidth::parse(bandwidth);
        detail::SweepCell cell;
        cell.index = cell_index;
        cell.policy = policy;
        cell.bandwidth = bandwidth;
        cell.report = attack::simulate(local.atk, local.profile, local.sys, local.seed);
        return cell;
      }));
    }
  }

  json grid = json::array();
  for (auto& fut : cells) {  // joined in grid order, not completion order
    const detail::SweepCell cell = fut.get();
    std::uint32_t max_window = 0;
    for (std::uint32_t m : cell.report.window_max) max_window = std::max(max_window, m);
    grid.push_back({{"index", cell.index},
                    {"policy", cell.policy},
                    {"bandwidth", cell.bandwidth},
                    {"flips", cell.report.flips.size()},
                    {"flips_per_hour", cell.report.flips_per_hour},
                    {"dram_accesses", cell.report.dram_accesses},
                    {"max_window_activations", max_window}});
    out << cell.index << " policy=" << cell.policy << " bandwidth=" << cell.bandwidth
        << " flips=" << cell.report.flips.size() << "\n";
  }
  Report report;
  report.command = "sweep";
  report.seed = cfg.seed;
  report.config = effective;
  report.results = {{"grid", grid}};
  if (!out_path.empty()) write_report_atomic(out_path, report);
  return 0;
}

inline int run_classify(const std::string& config_flag, const std::string& out_path,
                        const std::string& curve_csv, std::ostream& out) {
  json effective;
  RunConfig cfg = detail::load_run_config(config_flag, 0, false, &effective);
  classifier::SimulatedTimingSource source(cfg.sys.policy, cfg.sys.timing, cfg.sys.mapping,
                                           cfg.sys.geometry, cfg.classifier.probe_gap_ns);
  classifier::ClassifierConfig ccfg = cfg.classifier.build();
  const auto [a, b] = classifier::make_probe_pair(cfg.sys.mapping, cfg.sys.geometry);
  ccfg.probe_addr = a;
  ccfg.conflict_addr = b;
  const classifier::PolicyVerdict verdict = classifier::classify(source, ccfg);

  out << "verdict: " << classifier::to_string(verdict.kind) << "\n";
  out << "note: " << verdict.note << "\n";
  out << "conflict_latency: " << verdict.conflict_latency << "\n";
  if (verdict.jump_index) {
    out << "jump_n: " << verdict.single_curve[*verdict.jump_index].first << "\n";
  }
  if (!curve_csv.empty()) {
    std::ofstream csv(curve_csv, std::ios::trunc);
    if (!csv) throw Error("cannot write '" + curve_csv + "'");
    write_curve_csv(csv, verdict.single_curve);
  }
  if (!out_path.empty()) {
    Report report;
    report.command = "classify";
    report.seed = cfg.seed;
    report.config = effective;
    report.results = results_json(verdict);
    write_report_atomic(out_path, report);
  }
  return 0;
}

inline int run_banks(std::uint64_t k, std::uint64_t banks, std::uint64_t mc_trials,
                     std::uint64_t sample, const std::string& config_flag,
                     std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  const double p = dram::bank_collision_probability(k, banks);
  out << "k: " << k << "\n";
  out << "banks: " << banks << "\n";
  out << "collision_probability: " << fmt_num(p) << "\n";
  json results = {{"k", k}, {"banks", banks}, {"collision_probability", p}};

  if (mc_trials > 0) {
    SplitMix64 rng(seed);
    std::uint64_t collisions = 0;
    std::vector<bool> seen(banks);
    for (std::uint64_t t = 0; t < mc_trials; ++t) {
      std::fill(seen.begin(), seen.end(), false);
      bool collided = false;
      for (std::uint64_t i = 0; i < k && !collided; ++i) {
        const std::uint64_t b = rng.next_below(banks);
        collided = seen[b];
        seen[b] = true;
      }
      collisions += collided;
    }
    const double estimate = static_cast<double>(collisions) / static_cast<double>(mc_trials);
    out << "monte_carlo_estimate: " << fmt_num(estimate) << " (" << mc_trials << " trials)\n";
    results["monte_carlo_estimate"] = estimate;
    results["monte_carlo_trials"] = mc_trials;
  }

  if (sample > 0) {
    RunConfig cfg;
    if (!config_flag.empty() || std::getenv("ROWSIM_CONFIG")) {
      cfg = load_config(detail::default_config_path(config_flag));
    }
    SplitMix64 rng(seed);
    const std::uint64_t space = cfg.sys.mapping.physical_bits >= 64
                                    ? ~0ull
                                    : (1ull << cfg.sys.mapping.physical_bits);
    std::vector<std::uint64_t> addresses;
    addresses.reserve(sample);
    for (std::uint64_t i = 0; i < sample; ++i) addresses.push_back(rng.next_below(space));
    const dram::CollisionHistogram hist =
        dram::collisions_for(addresses, cfg.sys.mapping, cfg.sys.geometry);
    out << "sampled_addresses: " << hist.total << "\n";
    out << "occupied_banks: " << hist.per_bank.size() << "\n";
    out << "max_bucket: " << hist.max_bucket << "\n";
    results["sampled_addresses"] = hist.total;
    results["occupied_banks"] = hist.per_bank.size();
    results["max_bucket"] = hist.max_bucket;
  }

  if (!out_path.empty()) {
    Report report;
    report.command = "banks";
    report.seed = seed;
    report.config = {{"k", k}, {"banks", banks}};
    report.results = results;
    write_report_atomic(out_path, report);
  }
  return 0;
}

inline int run_analyze_dns(const std::string& in_path, const std::string& out_path,
                           std::ostream& out) {
  const auto entries = exploit::parse_zone_file(read_file(in_path));
  json domains = json::array();
  std::size_t total = 0;
  for (const auto& entry : entries) {
    json item = {{"name", entry.name}, {"type", entry.record_type}};
    json candidates = json::array();
    for (const auto& c : exploit::enumerate_dns_bitsquats(entry.name)) {
      candidates.push_back({{"domain", c.flipped}, {"offset", c.byte_offset}, {"bit", c.bit}});
    }
    // An MX value names another domain: a flip there redirects mail.
    if (entry.record_type == "MX" && !entry.value.empty()) {
      for (const auto& c : exploit::enumerate_dns_bitsquats(exploit::to_lower(entry.value))) {
        candidates.push_back({{"domain", c.flipped},
                              {"offset", c.byte_offset},
                              {"bit", c.bit},
                              {"in_value", true}});
      }
    }
    total += candidates.size();
    item["candidates"] = candidates;
    domains.push_back(item);
  }
  out << "entries: " << entries.size() << "\n";
  out << "bitsquat_candidates: " << total << "\n";
  if (!out_path.empty()) {
    Report report;
    report.command = "analyze dns";
    report.config = {{"input", in_path}};
    report.results = {{"entries", domains}, {"total_candidates", total}};
    write_report_atomic(out_path, report);
  }
  return 0;
}

inline int run_analyze_ocsp(const std::string& in_path, const std::string& out_path,
                            std::ostream& out) {
  const auto records = exploit::parse_ocsp_db(read_file(in_path));
  const exploit::OcspScanReport scan = exploit::scan_ocsp(records);
  out << "records: " << records.size() << "\n";
  out << "total_bytes: " << scan.total_bytes << "\n";
  out << "exploitable_bits: " << scan.exploitable.size() << "\n";
  out << "exploitable_probability: " << fmt_num(scan.exploitable_probability * 100.0) << "%\n";
  out << "dos_candidates: " << scan.dos_candidates.size() << "\n";
  out << "unknown_candidates: " << scan.unknown_candidates.size() << "\n";
  if (!out_path.empty()) {
    json exploitable = json::array();
    for (const auto& f : scan.exploitable) {
      exploitable.push_back({{"offset", f.byte_offset},
                             {"bit", f.bit},
                             {"record", f.record_index},
                             {"from", std::string(1, f.from)},
                             {"to", std::string(1, f.to)}});
    }
    Report report;
    report.command = "analyze ocsp";
    report.config = {{"input", in_path}};
    report.results = {{"records", records.size()},
                      {"total_bytes", scan.total_bytes},
                      {"exploitable", exploitable},
                      {"exploitable_probability", scan.exploitable_probability},
                      {"dos_candidates", scan.dos_candidates.size()},
                      {"unknown_candidates", scan.unknown_candidates.size()}};
    write_report_atomic(out_path, report);
  }
  return 0;
}

inline int run_analyze_rsa(const std::string& in_path, const std::string& before_path,
                           double fill, std::uint32_t modulus_bits, std::uint32_t framing_bits,
                           std::uint32_t factor_bits, const std::string& out_path,
                           std::ostream& out) {
  json results;
  const exploit::KeyRecordLayout layout{modulus_bits, framing_bits};
  const double hit = exploit::rsa_modulus_hit_probability(fill, layout);
  out << "modulus_hit_probability: " << fmt_num(hit * 100.0) << "%\n";
  results["hit_probability"] = hit;
  results["layout"] = {{"modulus_bits", modulus_bits}, {"framing_bits", framing_bits}};
  results["fill_fraction"] = fill;

  const auto after = exploit::parse_key_listing(read_file(in_path));
  if (!before_path.empty()) {
    const auto before = exploit::parse_key_listing(read_file(before_path));
    const exploit::DiffReport diff = exploit::diff_key_store(before, after);
    json changed = json::array();
    for (const auto& d : diff.changed) {
      json bits = json::array();
      for (const auto& [offset, bit] : d.flipped_bits) bits.push_back({offset, bit});
      changed.push_back({{"owner", d.owner}, {"size_changed", d.size_changed}, {"bits", bits}});
    }
    results["diff"] = {{"changed", changed}, {"added", diff.added}, {"removed", diff.removed}};
    out << "changed_keys: " << diff.changed.size() << "\n";
  }

  json keys = json::array();
  for (const auto& entry : after) {
    json item = {{"owner", entry.owner}, {"type", entry.type}};
    if (entry.type == "ssh-rsa") {
      try {
        const auto [e, n] = exploit::parse_ssh_rsa_blob(entry.blob);
        const std::size_t bits = mpz_sizeinbase(n.get_mpz_t(), 2);
        item["modulus_bits"] = bits;
        if (bits <= factor_bits) {
          exploit::RsaPublicKey key{n, e, entry.owner};
          json recovered = json::array();
          for (unsigned bit = 0; bit < bits; ++bit) {
            const exploit::KeyFlipAnalysis analysis = exploit::analyze_key_flip(key, bit);
            if (analysis.recovered()) {
              recovered.push_back({{"bit", bit},
                                   {"modified_modulus", analysis.modified_modulus.get_str()},
                                   {"private_exponent", analysis.private_exponent.get_str()}});
            }
          }
          item["flips_analyzed"] = bits;
          item["recovered"] = recovered;
          out << entry.owner << ": " << recovered.size() << "/" << bits
              << " modulus flips recover a private key\n";
        } else {
          item["flips_analyzed"] = 0;
          out << entry.owner << ": modulus too large for exhaustive analysis (" << bits
              << " bits > " << factor_bits << ")\n";
        }
      } catch (const ParseError& e) {
        item["error"] = e.what();
      }
    }
    keys.push_back(item);
  }
  results["keys"] = keys;

  if (!out_path.empty()) {
    Report report;
    report.command = "analyze rsa";
    report.config = {{"input", in_path},
                     {"before", before_path},
                     {"fill", fill},
                     {"modulus_bits", modulus_bits},
                     {"framing_bits", framing_bits}};
    report.results = results;
    write_report_atomic(out_path, report);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Remote-Rowhammer feasibility simulator and analysis toolkit"};
  app.require_subcommand(1);

  // rates
  auto* rates = app.add_subcommand("rates", "Packet/access rate arithmetic and flip feasibility");
  std::string bandwidth = "500Mbit", prefix = "binary";
  std::uint32_t frame = 64, calls = 6;
  double window_ms = 64.0;
  std::vector<std::uint64_t> thresholds;
  std::string rates_out;
  rates->add_option("--bandwidth", bandwidth, "Link bandwidth, e.g. 500Mbit");
  rates->add_option("--prefix", prefix, "Prefix convention: binary or decimal");
  rates->add_option("--frame", frame, "Frame size in bytes (>= 64)");
  rates->add_option("--calls", calls, "Calls per packet of the hammered function");
  rates->add_option("--window-ms", window_ms, "Refresh interval in ms");
  rates->add_option("--thresholds", thresholds, "Flip thresholds per refresh interval");
  rates->add_option("--out", rates_out, "Write a JSON report here");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run one packet-driven hammering simulation");
  std::string sim_config, sim_out = "report.json", flips_csv, trace_csv;
  std::uint64_t seed = 0;
  bool seed_given = false;
  simulate->add_option("--config", sim_config, "Config file (or $ROWSIM_CONFIG)");
  simulate->add_option("--seed", seed, "Override the config seed")->each([&](const std::string&) {
    seed_given = true;
  });
  simulate->add_option("--out", sim_out, "Report path (default report.json)");
  simulate->add_option("--flips-csv", flips_csv, "Write the flip list as CSV");
  simulate->add_option("--trace-csv", trace_csv, "Write the DRAM access-class trace as CSV");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Grid of simulations over policies and bandwidths");
  std::string sweep_config, sweep_out = "sweep.json";
  sweep->add_option("--config", sweep_config, "Config file (or $ROWSIM_CONFIG)");
  sweep->add_option("--seed", seed, "Override the config seed")->each([&](const std::string&) {
    seed_given = true;
  });
  sweep->add_option("--out", sweep_out, "Report path (default sweep.json)");

  // classify
  auto* classify = app.add_subcommand("classify", "Detect the memory-controller page policy");
  std::string cls_config, cls_out, curve_csv;
  classify->add_option("--config", cls_config, "Config file (or $ROWSIM_CONFIG)");
  classify->add_option("--out", cls_out, "Write a JSON report here");
  classify->add_option("--curve-csv", curve_csv, "Write the (n, latency) curve as CSV");

  // banks
  auto* banks = app.add_subcommand("banks", "Bank-collision arithmetic");
  std::uint64_t k = 8, bank_count = 32, mc_trials = 0, sample = 0, banks_seed = 1;
  std::string banks_config, banks_out;
  banks->add_option("--k", k, "Number of random addresses");
  banks->add_option("--banks", bank_count, "Number of banks");
  banks->add_option("--mc-trials", mc_trials, "Monte-Carlo cross-check trials");
  banks->add_option("--sample", sample, "Sample N addresses under the configured mapping");
  banks->add_option("--config", banks_config, "Config file for --sample");
  banks->add_option("--seed", banks_seed, "Seed for sampling");
  banks->add_option("--out", banks_out, "Write a JSON report here");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Exploitability of bit flips in stored data");
  analyze->require_subcommand(1);
  auto* dns = analyze->add_subcommand("dns", "Bitsquattable DNS zone entries");
  std::string dns_in, dns_out;
  dns->add_option("--in", dns_in, "Zone file: 'name type value' per line")->required();
  dns->add_option("--out", dns_out, "Write a JSON report here");
  auto* ocsp = analyze->add_subcommand("ocsp", "Status flips in an OCSP index");
  std::string ocsp_in, ocsp_out;
  ocsp->add_option("--in", ocsp_in, "OCSP index file")->required();
  ocsp->add_option("--out", ocsp_out, "Write a JSON report here");
  auto* rsa = analyze->add_subcommand("rsa", "RSA key-store flips and key recovery");
  std::string rsa_in, rsa_before, rsa_out;
  double fill = 0.8;
  std::uint32_t modulus_bits = 4096, framing_bits = 16, factor_bits = 128;
  rsa->add_option("--in", rsa_in, "authorized_keys-style listing")->required();
  rsa->add_option("--before", rsa_before, "Earlier listing to diff against");
  rsa->add_option("--fill", fill, "Fraction of memory filled with key records");
  rsa->add_option("--modulus-bits", modulus_bits, "Modulus size in the record layout");
  rsa->add_option("--framing-bits", framing_bits, "Framing overhead bits in the record layout");
  rsa->add_option("--factor-bits", factor_bits, "Max modulus size for exhaustive flip analysis");
  rsa->add_option("--out", rsa_out, "Write a JSON report here");

  std::vector<const char*> argv;
  argv.push_back("rowsim");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (rates->parsed()) {
      return run_rates(bandwidth, prefix, frame, calls, window_ms, thresholds, rates_out, out);
    }
    if (simulate->parsed()) {
      return run_simulate(sim_config, seed, seed_given, sim_out, flips_csv, trace_csv, out);
    }
    if (sweep->parsed()) return run_sweep(sweep_config, seed, seed_given, sweep_out, out);
    if (classify->parsed()) return run_classify(cls_config, cls_out, curve_csv, out);
    if (banks->parsed()) {
      return run_banks(k, bank_count, mc_trials, sample, banks_config, banks_seed, banks_out, out);
    }
    if (analyze->parsed()) {
      if (dns->parsed()) return run_analyze_dns(dns_in, dns_out, out);
      if (ocsp->parsed()) return run_analyze_ocsp(ocsp_in, ocsp_out, out);
      if (rsa->parsed()) {
        return run_analyze_rsa(rsa_in, rsa_before, fill, modulus_bits, framing_bits, factor_bits,
                               rsa_out, out);
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  err << "error: no subcommand\n";
  return 1;
}

}  // namespace rowsim::cli
