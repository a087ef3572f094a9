#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "rowsim/attack.hpp"
#include "rowsim/classifier.hpp"
#include "rowsim/dram.hpp"
#include "rowsim/util.hpp"

namespace rowsim::cli {

using json = nlohmann::json;

inline std::string config_digest(const json& effective_config) {
  return to_hex(fnv1a(effective_config.dump()));
}

/// Self-describing result envelope. Identical (config, seed, command)
/// triples serialize to byte-identical files.
struct Report {
  int schema_version = 1;
  std::string command;
  std::uint64_t seed = 0;
  json config;  // effective config, defaults materialized
  json results;

  json to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["command"] = command;
    j["seed"] = seed;
    j["config_digest"] = config_digest(config);
    j["config"] = config;
    j["results"] = results;
    return j;
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }
};

/// Writes via a temp file plus rename; a report file is never partial.
inline void write_report_atomic(const std::string& path, const Report& report) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write report file '" + tmp + "'");
    out << report.dump();
    if (!out.good()) throw Error("short write on report file '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot move report into place at '" + path + "'");
  }
}

// ---------------------------------------------------------------------------
// Results payloads
// ---------------------------------------------------------------------------

inline json results_json(const attack::FeasibilityVerdict& v) {
  json thresholds = json::array();
  for (const auto& [threshold, feasible] : v.per_threshold) {
    thresholds.push_back({{"threshold", threshold}, {"feasible", feasible}});
  }
  return {{"packets_per_s", v.packets_per_s},
          {"accesses_per_s", v.accesses_per_s},
          {"accesses_per_refresh_interval", v.accesses_per_refresh_interval},
          {"thresholds", thresholds},
          {"feasible_against_all", v.feasible_against_all()}};
}

inline json results_json(const attack::SimReport& r, const dram::DramGeometry& geom) {
  json flips = json::array();
  for (const auto& f : r.flips) {
    dram::DramLocation loc = dram::bank_coords(geom, f.flip.bank);
    flips.push_back({f.window_id, loc.channel, loc.dimm, loc.rank, loc.bank_group, loc.bank,
                     f.flip.row, f.flip.cell, f.flip.distance, f.time_ns});
  }
  return {{"duration_s", r.duration_s},
          {"packets_sent", r.packets_sent},
          {"trace_accesses", r.trace_accesses},
          {"background_accesses", r.background_accesses},
          {"invalidates", r.invalidates},
          {"cache_hits", r.cache_hits},
          {"cache_misses", r.cache_misses},
          {"dram_accesses", r.dram_accesses},
          {"class_histogram",
           {{"row_hit", r.class_row_hit},
            {"page_empty", r.class_page_empty},
            {"row_conflict", r.class_row_conflict}}},
          {"activations", r.activations},
          {"windows", r.windows},
          {"simulated_windows", r.simulated_windows},
          {"fast_forwarded", r.fast_forwarded},
          {"window_max", r.window_max},
          {"flip_columns",
           {"window_id", "channel", "dimm", "rank", "bank_group", "bank", "row", "cell",
            "distance", "time_ns"}},
          {"flips", flips},
          {"flip_count", r.flips.size()},
          {"flips_per_hour", r.flips_per_hour},
          {"dram_access_rate", r.dram_access_rate}};
}

inline json results_json(const classifier::PolicyVerdict& v) {
  json curve = json::array();
  for (const auto& [n, cycles] : v.single_curve) curve.push_back({n, cycles});
  json j = {{"verdict", classifier::to_string(v.kind)},
            {"note", v.note},
            {"conflict_latency", v.conflict_latency},
            {"curve_columns", {"n", "latency_cycles"}},
            {"curve", curve}};
  if (v.jump_index) {
    j["jump_index"] = *v.jump_index;
    j["jump_n"] = v.single_curve[*v.jump_index].first;
  } else {
    j["jump_index"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV extracts
// ---------------------------------------------------------------------------

inline void write_flips_csv(std::ostream& out, const std::vector<attack::TimedFlip>& flips,
                            const dram::DramGeometry& geom) {
  out << "window_id,channel,dimm,rank,bank_group,bank,row,cell,distance\n";
  for (const auto& f : flips) {
    dram::DramLocation loc = dram::bank_coords(geom, f.flip.bank);
    out << f.window_id << ',' << loc.channel << ',' << loc.dimm << ',' << loc.rank << ','
        << loc.bank_group << ',' << loc.bank << ',' << f.flip.row << ',' << f.flip.cell << ','
        << f.flip.distance << '\n';
  }
}

inline void write_curve_csv(std::ostream& out, const classifier::Curve& curve) {
  out << "n,latency_cycles\n";
  for (const auto& [n, cycles] : curve) out << n << ',' << cycles << '\n';
}

inline void write_access_trace_csv(std::ostream& out,
                                   const std::vector<attack::AccessTraceRow>& rows) {
  out << "time_ns,bank,row,class,latency_cycles\n";
  for (const auto& r : rows) {
    out << r.time << ',' << r.bank << ',' << r.row << ',' << memctrl::to_string(r.cls) << ','
        << r.latency << '\n';
  }
}

}  // namespace rowsim::cli
