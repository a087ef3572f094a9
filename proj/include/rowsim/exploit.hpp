#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rowsim/util.hpp"

namespace rowsim::exploit {

// ---------------------------------------------------------------------------
// DNS bitsquatting
// ---------------------------------------------------------------------------

struct ZoneEntry {
  std::string name;
  std::string record_type;  // A, MX, CNAME
  std::string value;
};

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Letters-digits-hyphen validity over every label: 1..63 chars per
/// label, no leading or trailing hyphen, at least two labels, at most
/// 253 chars overall. Expects a lower-cased name.
inline bool valid_domain(const std::string& domain) {
  if (domain.empty() || domain.size() > 253) return false;
  std::size_t label_start = 0;
  std::size_t labels = 0;
  for (std::size_t i = 0; i <= domain.size(); ++i) {
    if (i == domain.size() || domain[i] == '.') {
      const std::size_t len = i - label_start;
      if (len < 1 || len > 63) return false;
      if (domain[label_start] == '-' || domain[i - 1] == '-') return false;
      ++labels;
      label_start = i + 1;
      continue;
    }
    const char c = domain[i];
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    if (!ok) return false;
  }
  return labels >= 2;
}

/// A serialized form and the one-bit variant that produced it.
struct FlipCandidate {
  std::size_t byte_offset = 0;
  unsigned bit = 0;
  std::string original;
  std::string flipped;
};

/// All registrable domains one bit flip away from `domain`. The name is
/// canonicalized to lower case first; flips that only toggle letter
/// case are the same DNS name and are excluded, as is everything inside
/// the public-suffix portion (the final label, by default policy).
inline std::vector<FlipCandidate> enumerate_dns_bitsquats(const std::string& domain) {
  const std::string canon = to_lower(domain);
  if (!valid_domain(canon)) {
    throw ParseError("enumerate_dns_bitsquats: invalid domain '" + domain + "'");
  }
  const std::size_t last_dot = canon.rfind('.');
  std::vector<FlipCandidate> out;
  for (std::size_t pos = 0; pos < last_dot; ++pos) {
    for (unsigned bit = 0; bit < 8; ++bit) {
      std::string flipped = canon;
      flipped[pos] = static_cast<char>(static_cast<unsigned char>(flipped[pos]) ^ (1u << bit));
      const std::string flipped_canon = to_lower(flipped);
      if (flipped_canon == canon) continue;  // case-only flip: same DNS name
      if (!valid_domain(flipped_canon)) continue;
      // The suffix portion must survive untouched.
      if (flipped_canon.size() <= last_dot || flipped_canon.substr(last_dot) != canon.substr(last_dot)) {
        continue;
      }
      out.push_back({pos, bit, canon, flipped_canon});
    }
  }
  return out;
}

inline std::vector<ZoneEntry> parse_zone_file(const std::string& text) {
  std::vector<ZoneEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    std::istringstream fields(line);
    ZoneEntry e;
    if (!(fields >> e.name >> e.record_type)) {
      throw ParseError("zone file line " + std::to_string(lineno) + ": expected 'name type value'");
    }
    std::getline(fields, e.value);
    const std::size_t first = e.value.find_first_not_of(" \t");
    e.value = first == std::string::npos ? "" : e.value.substr(first);
    e.name = to_lower(e.name);
    entries.push_back(std::move(e));
  }
  return entries;
}

// ---------------------------------------------------------------------------
// OCSP status database
// ---------------------------------------------------------------------------

/// One line of a certificate-authority index: the status is a single
/// leading ASCII character (V = valid, R = revoked, E = expired),
/// followed by tab-separated expiration date, revocation date, serial,
/// file name, and subject.
struct OcspRecord {
  char status = 'V';
  std::string expiration;
  std::string revocation;  // empty unless revoked
  std::string serial;
  std::string filename;
  std::string subject;
};

inline std::string serialize_record(const OcspRecord& r) {
  std::string line;
  line += r.status;
  line += '\t';
  line += r.expiration;
  line += '\t';
  line += r.revocation;
  line += '\t';
  line += r.serial;
  line += '\t';
  line += r.filename;
  line += '\t';
  line += r.subject;
  line += '\n';
  return line;
}

inline std::string serialize_ocsp_db(const std::vector<OcspRecord>& records) {
  std::string out;
  for (const auto& r : records) out += serialize_record(r);
  return out;
}

inline OcspRecord parse_ocsp_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  if (fields.size() != 6) {
    throw ParseError("ocsp index line " + std::to_string(lineno) + ": expected 6 tab-separated fields");
  }
  if (fields[0].size() != 1 || (fields[0][0] != 'V' && fields[0][0] != 'R' && fields[0][0] != 'E')) {
    throw ParseError("ocsp index line " + std::to_string(lineno) + ": status must be one of V, R, E");
  }
  if (fields[3].empty()) {
    throw ParseError("ocsp index line " + std::to_string(lineno) + ": serial must not be empty");
  }
  return {fields[0][0], fields[1], fields[2], fields[3], fields[4], fields[5]};
}

inline std::vector<OcspRecord> parse_ocsp_db(const std::string& text) {
  std::vector<OcspRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    records.push_back(parse_ocsp_line(line, lineno));
  }
  return records;
}

struct OcspBitFlip {
  std::size_t byte_offset = 0;  ///< into the serialized database
  unsigned bit = 0;
  std::size_t record_index = 0;
  char from = 0;
  char to = 0;

  bool operator==(const OcspBitFlip&) const = default;
};

struct OcspScanReport {
  std::vector<OcspBitFlip> exploitable;         ///< R -> V: revoked turns valid
  std::vector<OcspBitFlip> dos_candidates;      ///< V -> R: valid turns revoked
  std::vector<OcspBitFlip> unknown_candidates;  ///< serial flips: lookups miss
  std::size_t total_bytes = 0;
  double exploitable_probability = 0;  ///< exploitable bits / total bits
};

/// Scans the serialized database for single-bit flips with security
/// impact. 'R' (0x52) and 'V' (0x56) differ in exactly bit 2, so every
/// revoked record contributes one exploitable bit.
inline OcspScanReport scan_ocsp(const std::vector<OcspRecord>& records) {
  OcspScanReport report;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const OcspRecord& r = records[i];
    const std::string line = serialize_record(r);
    if (r.status == 'R') {
      report.exploitable.push_back({offset, 2, i, 'R', 'V'});
    } else if (r.status == 'V') {
      report.dos_candidates.push_back({offset, 2, i, 'V', 'R'});
    }
    // Serial flips make the lookup return "unknown": any flip that keeps
    // the line structure intact (no separator bytes appear) qualifies.
    const std::size_t serial_start = offset + 1 + r.expiration.size() + 1 + r.revocation.size() + 1;
    for (std::size_t j = 0; j < r.serial.size(); ++j) {
      const auto orig = static_cast<unsigned char>(r.serial[j]);
      for (unsigned bit = 0; bit < 8; ++bit) {
        const char flipped = static_cast<char>(orig ^ (1u << bit));
        if (flipped == '\t' || flipped == '\n') continue;
        report.unknown_candidates.push_back(
            {serial_start + j, bit, i, static_cast<char>(orig), flipped});
      }
    }
    offset += line.size();
  }
  report.total_bytes = offset;
  report.exploitable_probability =
      offset == 0 ? 0.0
                  : static_cast<double>(report.exploitable.size()) /
                        (8.0 * static_cast<double>(offset));
  return report;
}

// ---------------------------------------------------------------------------
// RSA public keys
// ---------------------------------------------------------------------------

struct RsaPublicKey {
  mpz_class modulus;
  mpz_class exponent;
  std::string owner;

  void validate() const {
    if (mpz_odd_p(modulus.get_mpz_t()) == 0) throw ConfigError("rsa key: modulus must be odd");
    if (exponent < 3 || modulus <= exponent) {
      throw ConfigError("rsa key: requires modulus > exponent >= 3");
    }
  }
};

/// Serialized key-record layout: modulus bits plus framing overhead
/// (type and length fields around the modulus).
struct KeyRecordLayout {
  std::uint32_t modulus_bits = 4096;
  std::uint32_t framing_bits = 16;
};

/// Probability that a uniformly random bit flip lands in some modulus,
/// with `fill_fraction` of memory holding key records.
inline double rsa_modulus_hit_probability(double fill_fraction, const KeyRecordLayout& layout) {
  if (fill_fraction < 0.0 || fill_fraction > 1.0) {
    throw ConfigError("rsa_modulus_hit_probability: fill_fraction must be within [0, 1]");
  }
  const double total = static_cast<double>(layout.modulus_bits) + layout.framing_bits;
  return fill_fraction * static_cast<double>(layout.modulus_bits) / total;
}

struct FactorBudget {
  std::uint64_t trial_division_bound = 100000;
  std::uint64_t rho_iterations = 50'000'000;  ///< total iteration budget
  int verify_rounds = 10;
  std::uint64_t seed = 1;
};

/// Prime factorization as (prime, multiplicity); empty on failure.
using Factorization = std::vector<std::pair<mpz_class, unsigned>>;

namespace detail {

inline bool is_probable_prime(const mpz_class& n) {
  return mpz_probab_prime_p(n.get_mpz_t(), 40) != 0;
}

/// Pollard's rho (Brent cycle detection) with an iteration budget.
/// Returns a non-trivial factor or nullopt when the budget runs out.
inline std::optional<mpz_class> pollard_rho(const mpz_class& n, std::uint64_t& budget,
                                            SplitMix64& rng) {
  if (mpz_even_p(n.get_mpz_t())) return mpz_class(2);
  for (int attempt = 0; attempt < 64 && budget > 0; ++attempt) {
    const mpz_class c = 1 + mpz_class(rng.next() % 1000003);
    mpz_class x = 2 + mpz_class(rng.next() % 1000003);
    mpz_class y = x, d = 1, diff, saved_x;
    std::uint64_t power = 1, lam = 0;
    const std::uint64_t batch = 128;
    mpz_class q = 1;
    while (d == 1 && budget > 0) {
      if (lam == power) {
        y = x;
        power *= 2;
        lam = 0;
      }
      saved_x = x;
      std::uint64_t steps = std::min<std::uint64_t>({batch, power - lam, budget});
      for (std::uint64_t i = 0; i < steps; ++i) {
        x = (x * x + c) % n;
        diff = x > y ? x - y : y - x;
        if (diff == 0) diff = 1;
        q = (q * diff) % n;
      }
      lam += steps;
      budget -= steps;
      mpz_gcd(d.get_mpz_t(), q.get_mpz_t(), n.get_mpz_t());
      if (d == n) {
        // Backtrack one batch with per-step gcds.
        x = saved_x;
        d = 1;
        for (std::uint64_t i = 0; i < steps && d == 1; ++i) {
          x = (x * x + c) % n;
          diff = x > y ? x - y : y - x;
          if (diff == 0) diff = 1;
          mpz_gcd(d.get_mpz_t(), diff.get_mpz_t(), n.get_mpz_t());
        }
        break;
      }
    }
    if (d != 1 && d != n) return d;
  }
  return std::nullopt;
}

/// Full factorization via trial division plus rho; nullopt on budget
/// exhaustion.
inline std::optional<Factorization> factorize(mpz_class n, const FactorBudget& budget_cfg) {
  std::map<mpz_class, unsigned> factors;
  if (n <= 1) return std::nullopt;
  for (mpz_class p = 2; p * p <= n && p <= budget_cfg.trial_division_bound; p += (p == 2 ? 1 : 2)) {
    while (n % p == 0) {
      ++factors[p];
      n /= p;
    }
  }
  std::uint64_t budget = budget_cfg.rho_iterations;
  SplitMix64 rng(budget_cfg.seed);
  std::vector<mpz_class> stack;
  if (n > 1) stack.push_back(n);
  while (!stack.empty()) {
    mpz_class m = stack.back();
    stack.pop_back();
    if (m == 1) continue;
    if (is_probable_prime(m)) {
      ++factors[m];
      continue;
    }
    auto f = pollard_rho(m, budget, rng);
    if (!f) return std::nullopt;
    stack.push_back(*f);
    stack.push_back(m / *f);
  }
  Factorization out(factors.begin(), factors.end());
  return out;
}

/// Carmichael function from a full factorization.
inline mpz_class carmichael(const Factorization& factors) {
  mpz_class lambda = 1;
  for (const auto& [p, k] : factors) {
    mpz_class lam_pk;
    if (p == 2) {
      if (k == 1) lam_pk = 1;
      else if (k == 2) lam_pk = 2;
      else {
        lam_pk = 1;
        mpz_mul_2exp(lam_pk.get_mpz_t(), lam_pk.get_mpz_t(), k - 2);
      }
    } else {
      lam_pk = p - 1;
      for (unsigned i = 1; i < k; ++i) lam_pk *= p;
    }
    mpz_lcm(lambda.get_mpz_t(), lambda.get_mpz_t(), lam_pk.get_mpz_t());
  }
  return lambda;
}

inline mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

}  // namespace detail

struct KeyFlipAnalysis {
  enum class Status { Recovered, InfeasibleFactoring, InfeasibleGcd, InfeasibleVerify };
  Status status = Status::InfeasibleFactoring;
  mpz_class modified_modulus;
  Factorization factors;          ///< filled when factorization succeeded
  mpz_class carmichael_lambda;    ///< valid when factors are complete
  mpz_class private_exponent;     ///< valid only for Recovered

  bool recovered() const { return status == Status::Recovered; }
};

inline const char* to_string(KeyFlipAnalysis::Status s) {
  switch (s) {
    case KeyFlipAnalysis::Status::Recovered: return "recovered";
    case KeyFlipAnalysis::Status::InfeasibleFactoring: return "infeasible_factoring";
    case KeyFlipAnalysis::Status::InfeasibleGcd: return "infeasible_gcd";
    case KeyFlipAnalysis::Status::InfeasibleVerify: return "infeasible_verify";
  }
  return "?";
}

/// Attempts private-key recovery for the key whose modulus had `bit`
/// flipped: factor N' = N xor 2^bit, compute d' = e^-1 mod lambda(N')
/// when gcd(e, lambda) = 1, and confirm with sign/verify round trips on
/// random messages. Never returns a key that failed verification.
inline KeyFlipAnalysis analyze_key_flip(const RsaPublicKey& key, unsigned bit,
                                        const FactorBudget& budget = {}) {
  key.validate();
  KeyFlipAnalysis result;
  mpz_class flipped = key.modulus;
  mpz_combit(flipped.get_mpz_t(), bit);
  result.modified_modulus = flipped;

  if (flipped <= key.exponent) {
    result.status = KeyFlipAnalysis::Status::InfeasibleVerify;
    return result;
  }
  auto factors = detail::factorize(flipped, budget);
  if (!factors) {
    result.status = KeyFlipAnalysis::Status::InfeasibleFactoring;
    return result;
  }
  result.factors = *factors;
  result.carmichael_lambda = detail::carmichael(*factors);

  mpz_class g;
  mpz_gcd(g.get_mpz_t(), key.exponent.get_mpz_t(), result.carmichael_lambda.get_mpz_t());
  if (g != 1) {
    result.status = KeyFlipAnalysis::Status::InfeasibleGcd;
    return result;
  }
  mpz_class d;
  if (mpz_invert(d.get_mpz_t(), key.exponent.get_mpz_t(),
                 result.carmichael_lambda.get_mpz_t()) == 0) {
    result.status = KeyFlipAnalysis::Status::InfeasibleGcd;
    return result;
  }

  // Sign/verify round trips; a square factor in N' shows up here.
  SplitMix64 rng(hash_mix(budget.seed, bit, 0x5e, 0));
  const mpz_class span = flipped - 3;
  for (int i = 0; i < budget.verify_rounds; ++i) {
    mpz_class m = 2 + mpz_class(rng.next()) % span;
    if (detail::powm(detail::powm(m, key.exponent, flipped), d, flipped) != m) {
      result.status = KeyFlipAnalysis::Status::InfeasibleVerify;
      return result;
    }
  }
  result.status = KeyFlipAnalysis::Status::Recovered;
  result.private_exponent = d;
  return result;
}

// ---------------------------------------------------------------------------
// Key-store listings
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  int acc = 0, bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value_of(c);
    if (v < 0) throw ParseError("base64: invalid character");
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  int acc = 0, bits = 0;
  for (std::uint8_t b : data) {
    acc = (acc << 8) | b;
    bits += 8;
    while (bits >= 6) {
      bits -= 6;
      out.push_back(alphabet[(acc >> bits) & 0x3f]);
    }
  }
  if (bits > 0) out.push_back(alphabet[(acc << (6 - bits)) & 0x3f]);
  while (out.size() % 4) out.push_back('=');
  return out;
}

/// authorized_keys-style entry: "<type> <base64 blob> <owner>".
struct KeyEntry {
  std::string type;
  std::vector<std::uint8_t> blob;
  std::string owner;
};

inline std::vector<KeyEntry> parse_key_listing(const std::string& text) {
  std::vector<KeyEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string type, blob64, owner;
    if (!(fields >> type >> blob64 >> owner)) {
      throw ParseError("key listing line " + std::to_string(lineno) +
                       ": expected 'type base64 owner'");
    }
    out.push_back({type, base64_decode(blob64), owner});
  }
  return out;
}

/// Extracts (exponent, modulus) from an SSH wire-format ssh-rsa blob.
inline std::pair<mpz_class, mpz_class> parse_ssh_rsa_blob(const std::vector<std::uint8_t>& blob) {
  std::size_t at = 0;
  auto read_chunk = [&](const char* what) {
    if (at + 4 > blob.size()) throw ParseError(std::string("ssh blob: truncated ") + what);
    const std::size_t len = (std::size_t(blob[at]) << 24) | (std::size_t(blob[at + 1]) << 16) |
                            (std::size_t(blob[at + 2]) << 8) | blob[at + 3];
    at += 4;
    if (at + len > blob.size()) throw ParseError(std::string("ssh blob: truncated ") + what);
    const std::size_t start = at;
    at += len;
    return std::make_pair(start, len);
  };
  const auto [tstart, tlen] = read_chunk("type");
  const std::string type(blob.begin() + tstart, blob.begin() + tstart + tlen);
  if (type != "ssh-rsa") throw ParseError("ssh blob: not an ssh-rsa key");
  const auto [estart, elen] = read_chunk("exponent");
  const auto [nstart, nlen] = read_chunk("modulus");
  mpz_class e, n;
  mpz_import(e.get_mpz_t(), elen, 1, 1, 1, 0, blob.data() + estart);
  mpz_import(n.get_mpz_t(), nlen, 1, 1, 1, 0, blob.data() + nstart);
  return {e, n};
}

struct KeyDiff {
  std::string owner;
  std::vector<std::pair<std::size_t, unsigned>> flipped_bits;  ///< (byte offset, bit)
  bool size_changed = false;
};

struct DiffReport {
  std::vector<KeyDiff> changed;
  std::vector<std::string> added;
  std::vector<std::string> removed;
};

/// Compares two listings keyed by owner and reports every key whose
/// serialized blob changed, with exact bit positions.
inline DiffReport diff_key_store(const std::vector<KeyEntry>& before,
                                 const std::vector<KeyEntry>& after) {
  std::map<std::string, const KeyEntry*> b, a;
  for (const auto& e : before) b[e.owner] = &e;
  for (const auto& e : after) a[e.owner] = &e;
  DiffReport report;
  for (const auto& [owner, entry] : a) {
    const auto it = b.find(owner);
    if (it == b.end()) {
      report.added.push_back(owner);
      continue;
    }
    const auto& old = it->second->blob;
    const auto& now = entry->blob;
    KeyDiff diff;
    diff.owner = owner;
    if (old.size() != now.size()) {
      diff.size_changed = true;
      report.changed.push_back(std::move(diff));
      continue;
    }
    for (std::size_t i = 0; i < old.size(); ++i) {
      std::uint8_t x = old[i] ^ now[i];
      for (unsigned bit = 0; bit < 8; ++bit) {
        if (x & (1u << bit)) diff.flipped_bits.emplace_back(i, bit);
      }
    }
    if (!diff.flipped_bits.empty()) report.changed.push_back(std::move(diff));
  }
  for (const auto& [owner, entry] : b) {
    (void)entry;
    if (!a.count(owner)) report.removed.push_back(owner);
  }
  return report;
}

}  // namespace rowsim::exploit
