#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace numval {

// ---------------------------------------------------------------------------
// Error types. Everything user-facing throws one of these; the CLI maps them
// to exit codes (usage 2, I/O 3, integrity 4).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// API misuse: broken precondition (non-scalar backward root, missing value
// for a <num> position, ...).
struct ContractError : Error {
  using Error::Error;
};

// Digit count exceeding a fixed encoder cap.
struct CapacityError : Error {
  using Error::Error;
};

// Character or id outside the vocabulary.
struct VocabError : Error {
  using Error::Error;
};

// Malformed numeric literal.
struct ParseError : Error {
  using Error::Error;
};

// Unsupported (task group, format) combination or invalid operand.
struct DomainError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Corrupt checkpoint, failed dataset validation, config/vocab mismatch.
struct IntegrityError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 gives a portable bit stream; the value
// mappings below are ours so that draws do not depend on libstdc++'s
// distribution implementations.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ContractError("uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(eng_());  // full 64-bit range
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  // Standard normal via polar Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    have_spare_ = true;
    return u * mul;
  }

  bool coin(double p) { return uniform() < p; }

  // Independent stream for worker `index` under the same master seed.
  static Rng derive(std::uint64_t master_seed, std::uint64_t index) {
    return Rng(master_seed * 0x9E3779B97F4A7C15ull + index * 0xBF58476D1CE4E5B9ull + 1);
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw IntegrityError("Rng::restore: malformed engine state");
    have_spare_ = false;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// FNV-1a 64-bit, used as the checkpoint content checksum.
inline std::uint64_t fnv1a(const void* buf, size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(buf);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace numval
