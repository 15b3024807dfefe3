#pragma once

#include <gmpxx.h>

#include <string>
#include <vector>

#include "numval/common.hpp"

// Exact rational numbers with a display format, and the canonical string
// renderings the benchmark answers use. GMP supplies the arbitrary-precision
// arithmetic; everything about decimal form lives here.

namespace numval {

enum class Format { Int, Float, Fraction, SciNot };

inline const char* format_name(Format f) {
  switch (f) {
    case Format::Int: return "int";
    case Format::Float: return "float";
    case Format::Fraction: return "fraction";
    case Format::SciNot: return "scinot";
  }
  return "?";
}

inline Format format_from_name(const std::string& s) {
  if (s == "int") return Format::Int;
  if (s == "float") return Format::Float;
  if (s == "fraction") return Format::Fraction;
  if (s == "scinot") return Format::SciNot;
  throw ParseError("unknown format name '" + s + "'");
}

struct ExactNumber {
  mpq_class value;             // reduced, denominator > 0
  Format format = Format::Int;
  int dec_places = 0;          // Float: fractional digits as written
  int sig_figs = 0;            // SciNot: mantissa digits as written
};

// ---------------------------------------------------------------------------
// Integer helpers
// ---------------------------------------------------------------------------

inline long digits_in(const mpz_class& z) {
  // mpz_sizeinbase may overestimate by one for base 10.
  size_t est = mpz_sizeinbase(z.get_mpz_t(), 10);
  if (est <= 1) return 1;
  mpz_class p;
  mpz_ui_pow_ui(p.get_mpz_t(), 10, est - 1);
  return mpz_cmpabs(z.get_mpz_t(), p.get_mpz_t()) >= 0 ? static_cast<long>(est)
                                                       : static_cast<long>(est) - 1;
}

inline mpz_class pow10_z(long k) {
  mpz_class p;
  mpz_ui_pow_ui(p.get_mpz_t(), 10, static_cast<unsigned long>(k));
  return p;
}

// Largest e with 10^e <= |v|; v must be nonzero.
inline long exponent10(const mpq_class& v) {
  mpz_class num = abs(mpq_class(v).get_num());
  mpz_class den = v.get_den();
  if (num == 0) throw ContractError("exponent10 of zero");
  long e = digits_in(num) - digits_in(den);
  auto at_least = [&](long exp) {  // |v| >= 10^exp
    return exp >= 0 ? num >= den * pow10_z(exp) : num * pow10_z(-exp) >= den;
  };
  while (!at_least(e)) --e;
  while (at_least(e + 1)) ++e;
  return e;
}

// ---------------------------------------------------------------------------
// Canonical renderings
// ---------------------------------------------------------------------------

inline std::string render_int(const mpq_class& v) {
  if (v.get_den() != 1)
    throw ContractError("value " + v.get_str() + " is not an integer");
  return v.get_num().get_str();
}

// Minimal exact decimal with at least one digit on each side of the point:
// 9864 -> "9864.0", 1/2 -> "0.5". Requires a terminating expansion.
inline std::string render_float(const mpq_class& v) {
  mpz_class num = v.get_num(), den = v.get_den();
  mpz_class rest;
  mp_bitcnt_t twos = mpz_remove(rest.get_mpz_t(), den.get_mpz_t(), mpz_class(2).get_mpz_t());
  mpz_class rest2;
  mp_bitcnt_t fives = mpz_remove(rest2.get_mpz_t(), rest.get_mpz_t(), mpz_class(5).get_mpz_t());
  if (rest2 != 1)
    throw ContractError("value " + v.get_str() + " has no terminating decimal form");
  long k = std::max<long>(twos, fives);
  mpz_class scaled = abs(num) * pow10_z(k) / den;
  std::string s = scaled.get_str();
  if (static_cast<long>(s.size()) < k + 1) s.insert(0, k + 1 - s.size(), '0');
  std::string int_part = s.substr(0, s.size() - k);
  std::string frac = s.substr(s.size() - k);
  while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
  if (frac.empty()) frac = "0";
  return std::string(num < 0 ? "-" : "") + int_part + "." + frac;
}

inline std::string render_fraction(const mpq_class& v) {
  return v.get_num().get_str() + "/" + v.get_den().get_str();
}

// Normalized scientific notation "d.f...e<exp>": one nonzero leading mantissa
// digit, at least one fractional digit, no '+' on the exponent. sig = 0 keeps
// the exact mantissa; sig >= 2 rounds half-up (away from zero) to exactly that
// many significant figures.
inline std::string render_scinot(const mpq_class& v, int sig = 0) {
  if (v == 0) throw ContractError("zero has no normalized scientific form");
  bool neg = v < 0;
  mpq_class av = abs(v);
  long e = exponent10(av);
  std::string sign = neg ? "-" : "";
  if (sig == 0) {
    mpq_class mant = e >= 0 ? mpq_class(av.get_num(), av.get_den() * pow10_z(e))
                            : mpq_class(av.get_num() * pow10_z(-e), av.get_den());
    mant.canonicalize();
    return sign + render_float(mant) + "e" + std::to_string(e);
  }
  if (sig < 2)
    throw ContractError("scientific rendering keeps at least 2 significant figures");
  long shift = sig - 1 - e;
  mpq_class scaled = shift >= 0 ? mpq_class(av.get_num() * pow10_z(shift), av.get_den())
                                : mpq_class(av.get_num(), av.get_den() * pow10_z(-shift));
  scaled.canonicalize();
  scaled += mpq_class(1, 2);
  mpz_class rounded;
  mpz_fdiv_q(rounded.get_mpz_t(), scaled.get_num().get_mpz_t(), scaled.get_den().get_mpz_t());
  if (rounded == pow10_z(sig)) {
    rounded = pow10_z(sig - 1);
    ++e;
  }
  std::string ds = rounded.get_str();
  if (static_cast<long>(ds.size()) != sig)
    throw ContractError("significant-figure rounding produced " + ds);
  return sign + ds.substr(0, 1) + "." + ds.substr(1) + "e" + std::to_string(e);
}

inline std::string canonicalize(const ExactNumber& x) {
  switch (x.format) {
    case Format::Int: return render_int(x.value);
    case Format::Float: return render_float(x.value);
    case Format::Fraction: return render_fraction(x.value);
    case Format::SciNot: return render_scinot(x.value);
  }
  throw ContractError("bad format");
}

// ---------------------------------------------------------------------------
// Parsing of canonical literals
// ---------------------------------------------------------------------------

namespace detail {

inline bool digit_run(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

inline bool canonical_uint(const std::string& s) {
  return digit_run(s) && (s.size() == 1 || s[0] != '0');
}

inline void expect(bool ok, const std::string& lit, const char* why) {
  if (!ok) throw ParseError("bad numeric literal '" + lit + "': " + why);
}

}  // namespace detail

inline ExactNumber parse_exact(const std::string& lit, Format fmt) {
  using detail::canonical_uint;
  using detail::expect;
  std::string s = lit;
  bool neg = !s.empty() && s[0] == '-';
  if (neg) s = s.substr(1);
  ExactNumber out;
  out.format = fmt;
  switch (fmt) {
    case Format::Int: {
      expect(canonical_uint(s), lit, "expected plain digits");
      expect(!(neg && s == "0"), lit, "negative zero");
      out.value = mpq_class(mpz_class(s, 10));
      break;
    }
    case Format::Float: {
      auto dot = s.find('.');
      expect(dot != std::string::npos, lit, "expected a decimal point");
      std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
      expect(canonical_uint(ip), lit, "bad integer part");
      expect(detail::digit_run(fp), lit, "bad fractional part");
      mpq_class q(mpz_class(ip, 10) * pow10_z(fp.size()) + mpz_class(fp, 10), pow10_z(fp.size()));
      q.canonicalize();
      expect(!(neg && q == 0), lit, "negative zero");
      out.value = q;
      out.dec_places = static_cast<int>(fp.size());
      break;
    }
    case Format::Fraction: {
      auto slash = s.find('/');
      expect(slash != std::string::npos, lit, "expected p/q");
      std::string p = s.substr(0, slash), q = s.substr(slash + 1);
      expect(canonical_uint(p), lit, "bad numerator");
      expect(canonical_uint(q) && q != "0", lit, "bad denominator");
      mpq_class r{mpz_class(p, 10), mpz_class(q, 10)};
      r.canonicalize();
      out.value = r;
      break;
    }
    case Format::SciNot: {
      auto epos = s.find('e');
      expect(epos != std::string::npos, lit, "expected mantissa e exponent");
      std::string mant = s.substr(0, epos), es = s.substr(epos + 1);
      bool eneg = !es.empty() && es[0] == '-';
      if (eneg) es = es.substr(1);
      expect(canonical_uint(es), lit, "bad exponent");
      auto dot = mant.find('.');
      expect(dot == 1, lit, "mantissa needs one leading digit");
      expect(mant[0] >= '1' && mant[0] <= '9', lit, "mantissa lead digit must be nonzero");
      std::string fp = mant.substr(2);
      expect(detail::digit_run(fp), lit, "bad mantissa fraction");
      long e = std::stol(es) * (eneg ? -1 : 1);
      mpq_class m(mpz_class(mant.substr(0, 1), 10) * pow10_z(fp.size()) + mpz_class(fp, 10),
                  pow10_z(fp.size()));
      m.canonicalize();
      mpq_class q = e >= 0 ? mpq_class(m.get_num() * pow10_z(e), m.get_den())
                           : mpq_class(m.get_num(), m.get_den() * pow10_z(-e));
      q.canonicalize();
      out.value = q;
      out.sig_figs = static_cast<int>(1 + fp.size());
      break;
    }
  }
  if (neg) out.value = -out.value;
  return out;
}

}  // namespace numval
