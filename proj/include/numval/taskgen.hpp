#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "numval/exact.hpp"

// Arithmetic benchmark generator: task groups x numeric formats, prompts
// rendered from fixed templates, answers produced by exact rational
// arithmetic and canonical rendering. Reading a dataset back re-derives every
// answer from the prompt, so a stored file is self-validating.

namespace numval {

enum class Group { add, subtract, multiply, truediv, floordiv, modulo, count, length, max, sig, to };

inline const std::vector<Group>& all_groups() {
  static const std::vector<Group> g{Group::add,    Group::subtract, Group::multiply,
                                    Group::truediv, Group::floordiv, Group::modulo,
                                    Group::count,  Group::length,   Group::max,
                                    Group::sig,    Group::to};
  return g;
}

inline const char* group_name(Group g) {
  switch (g) {
    case Group::add: return "add";
    case Group::subtract: return "subtract";
    case Group::multiply: return "multiply";
    case Group::truediv: return "truediv";
    case Group::floordiv: return "floordiv";
    case Group::modulo: return "modulo";
    case Group::count: return "count";
    case Group::length: return "length";
    case Group::max: return "max";
    case Group::sig: return "sig";
    case Group::to: return "to";
  }
  return "?";
}

inline Group group_from_name(const std::string& s) {
  for (Group g : all_groups())
    if (s == group_name(g)) return g;
  throw ParseError("unknown task group '" + s + "'");
}

// (group, operand format) pairs the benchmark defines. For `to`, the format
// is the source: scinot converts to float and float to scientific notation.
inline const std::vector<std::pair<Group, Format>>& supported_tasks() {
  using enum Format;
  static const std::vector<std::pair<Group, Format>> t{
      {Group::add, Int},      {Group::add, Float},      {Group::add, Fraction},
      {Group::add, SciNot},   {Group::subtract, Int},   {Group::subtract, Float},
      {Group::subtract, Fraction}, {Group::subtract, SciNot},
      {Group::multiply, Int}, {Group::multiply, Float}, {Group::multiply, Fraction},
      {Group::multiply, SciNot},
      {Group::truediv, Int},  {Group::truediv, Fraction},
      {Group::floordiv, Int}, {Group::modulo, Int},
      {Group::count, Int},    {Group::count, Float},
      {Group::length, Int},   {Group::length, Float},
      {Group::max, Int},      {Group::max, Float},      {Group::max, Fraction},
      {Group::max, SciNot},
      {Group::sig, Int},      {Group::sig, Float},
      {Group::to, SciNot},    {Group::to, Float},
  };
  return t;
}

inline bool task_supported(Group g, Format f) {
  for (const auto& [tg, tf] : supported_tasks())
    if (tg == g && tf == f) return true;
  return false;
}

struct Sample {
  std::string prompt;
  std::string answer;
  Group group = Group::add;
  Format format = Format::Int;
  int digits = 0;  // max digit count over the operands
};

// ---------------------------------------------------------------------------
// Digit counting conventions per format: Int counts its digits, Float counts
// integer plus fractional digits, Fraction the max of numerator/denominator,
// SciNot the mantissa digits.
// ---------------------------------------------------------------------------

inline int literal_digit_count(const std::string& lit, Format fmt) {
  auto digits_of = [](const std::string& s) {
    int n = 0;
    for (char c : s)
      if (c >= '0' && c <= '9') ++n;
    return n;
  };
  switch (fmt) {
    case Format::Int: return digits_of(lit);
    case Format::Float: return digits_of(lit);
    case Format::Fraction: {
      auto slash = lit.find('/');
      return std::max(digits_of(lit.substr(0, slash)), digits_of(lit.substr(slash + 1)));
    }
    case Format::SciNot: return digits_of(lit.substr(0, lit.find('e')));
  }
  return 0;
}

// Smallest digit count a format can express under the operand conventions
// (floats and scientific mantissas carry at least two digits).
inline int format_min_digits(Format f) {
  return (f == Format::Float || f == Format::SciNot) ? 2 : 1;
}

// ---------------------------------------------------------------------------
// Oracle: exact answers from parsed operands. `param` carries the digit to
// count for `count` and the significant-figure request for `sig`.
// ---------------------------------------------------------------------------

inline std::string oracle_eval(Group g, Format f, const std::vector<ExactNumber>& ops,
                               int param = -1) {
  if (!task_supported(g, f))
    throw DomainError(std::string("unsupported task ") + group_name(g) + "/" + format_name(f));
  auto need = [&](size_t n) {
    if (ops.size() != n)
      throw ContractError(std::string(group_name(g)) + ": expected " + std::to_string(n) +
                          " operands, got " + std::to_string(ops.size()));
  };
  auto render_in = [&](const mpq_class& v) {
    ExactNumber r;
    r.value = v;
    r.format = f;
    return canonicalize(r);
  };
  switch (g) {
    case Group::add:
      need(2);
      return render_in(ops[0].value + ops[1].value);
    case Group::subtract:
      need(2);
      return render_in(ops[0].value - ops[1].value);
    case Group::multiply:
      need(2);
      return render_in(ops[0].value * ops[1].value);
    case Group::truediv: {
      need(2);
      if (ops[1].value == 0) throw DomainError("division by zero");
      mpq_class q = ops[0].value / ops[1].value;
      return render_fraction(q);
    }
    case Group::floordiv: {
      need(2);
      if (ops[1].value == 0) throw DomainError("division by zero");
      mpz_class q;
      mpz_fdiv_q(q.get_mpz_t(), ops[0].value.get_num().get_mpz_t(),
                 ops[1].value.get_num().get_mpz_t());
      return q.get_str();
    }
    case Group::modulo: {
      need(2);
      if (ops[1].value == 0) throw DomainError("division by zero");
      mpz_class r;
      mpz_fdiv_r(r.get_mpz_t(), ops[0].value.get_num().get_mpz_t(),
                 ops[1].value.get_num().get_mpz_t());
      return r.get_str();
    }
    case Group::count: {
      need(1);
      if (param < 0 || param > 9) throw ContractError("count needs a digit parameter");
      char d = static_cast<char>('0' + param);
      int n = 0;
      for (char c : canonicalize(ops[0])) n += (c == d);
      return std::to_string(n);
    }
    case Group::length: {
      need(1);
      int n = 0;
      for (char c : canonicalize(ops[0]))
        if (c >= '0' && c <= '9') ++n;
      return std::to_string(n);
    }
    case Group::max: {
      need(2);
      return canonicalize(ops[0].value >= ops[1].value ? ops[0] : ops[1]);
    }
    case Group::sig: {
      need(1);
      if (param < 2) throw ContractError("sig needs at least 2 significant figures");
      return render_scinot(ops[0].value, param);
    }
    case Group::to: {
      need(1);
      if (f == Format::SciNot) return render_float(ops[0].value);
      return render_scinot(ops[0].value);
    }
  }
  throw ContractError("bad group");
}

// ---------------------------------------------------------------------------
// Prompt templates (binary groups render "A <op> B"; fraction operands of
// truediv are parenthesized so the two slashes stay unambiguous).
// ---------------------------------------------------------------------------

namespace detail {

struct PromptParts {
  std::string prefix;
  std::string infix;   // between the two operands; empty for unary groups
  std::string suffix;  // trailing text holding the parameter, if any
};

inline PromptParts prompt_parts(Group g, Format f) {
  switch (g) {
    case Group::add: return {"Add two numbers: ", " + ", ""};
    case Group::subtract: return {"Subtract two numbers: ", " - ", ""};
    case Group::multiply: return {"Multiply two numbers: ", " * ", ""};
    case Group::truediv:
      return {"Divide two numbers and return the result as a fraction. ", " / ", ""};
    case Group::floordiv:
      return {"Divide two numbers and return the result as an integer. ", " // ", ""};
    case Group::modulo: return {"Divide two numbers and return the remainder. ", " % ", ""};
    case Group::count: return {"", " count the occurrence time of digit ", ""};
    case Group::length: return {"The total number of digits of ", "", ""};
    case Group::max: return {"Get the maximal number: ", " and ", ""};
    case Group::sig:
      return {"Convert the number to scientific notation: ", " and keep significant figures as ",
              ""};
    case Group::to:
      return {f == Format::SciNot ? "Convert the number to float: "
                                  : "Convert the number to scientific notation: ",
              "", ""};
  }
  throw ContractError("bad group");
}

inline std::string decorate_operand(const std::string& lit, Group g, Format f) {
  if (g == Group::truediv && f == Format::Fraction) return "(" + lit + ")";
  return lit;
}

}  // namespace detail

inline std::string render_prompt(Group g, Format f, const std::vector<std::string>& operand_lits,
                                 int param = -1) {
  auto parts = detail::prompt_parts(g, f);
  auto dec = [&](const std::string& s) { return detail::decorate_operand(s, g, f); };
  switch (g) {
    case Group::count:
      return dec(operand_lits.at(0)) + parts.infix + std::to_string(param);
    case Group::sig:
      return parts.prefix + dec(operand_lits.at(0)) + parts.infix + std::to_string(param);
    case Group::length:
    case Group::to:
      return parts.prefix + dec(operand_lits.at(0));
    default:
      return parts.prefix + dec(operand_lits.at(0)) + parts.infix + dec(operand_lits.at(1));
  }
}

// Inverse of render_prompt for a known (group, format): operand literals plus
// the optional parameter. Throws ParseError when the template does not match.
struct ParsedPrompt {
  std::vector<ExactNumber> operands;
  std::vector<std::string> literals;
  int param = -1;
};

inline ParsedPrompt parse_prompt(const std::string& prompt, Group g, Format f) {
  auto parts = detail::prompt_parts(g, f);
  auto fail = [&](const char* why) {
    throw ParseError(std::string("prompt does not match ") + group_name(g) + " template (" +
                     why + "): " + prompt);
  };
  std::string rest = prompt;
  if (!parts.prefix.empty()) {
    if (rest.rfind(parts.prefix, 0) != 0) fail("prefix");
    rest = rest.substr(parts.prefix.size());
  }
  ParsedPrompt out;
  auto strip = [&](std::string lit) {
    if (g == Group::truediv && f == Format::Fraction) {
      if (lit.size() < 2 || lit.front() != '(' || lit.back() != ')') fail("parentheses");
      lit = lit.substr(1, lit.size() - 2);
    }
    return lit;
  };
  if (g == Group::length || g == Group::to) {
    out.literals.push_back(strip(rest));
  } else if (g == Group::count || g == Group::sig) {
    auto pos = rest.find(parts.infix);
    if (pos == std::string::npos) fail("separator");
    out.literals.push_back(strip(rest.substr(0, pos)));
    std::string ps = rest.substr(pos + parts.infix.size());
    if (!detail::digit_run(ps)) fail("parameter");
    out.param = std::stoi(ps);
  } else {
    auto pos = rest.find(parts.infix);
    if (pos == std::string::npos) fail("separator");
    out.literals.push_back(strip(rest.substr(0, pos)));
    out.literals.push_back(strip(rest.substr(pos + parts.infix.size())));
  }
  for (const auto& lit : out.literals) out.operands.push_back(parse_exact(lit, f));
  return out;
}

// ---------------------------------------------------------------------------
// Generation. Every operand draws its digit count uniformly over the
// requested range (floored at the format minimum), then digits uniformly with
// no leading zeros. Results that the answer format cannot express (integral
// fractions, zero in scientific notation) are redrawn.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string draw_uint(Rng& rng, int ndigits) {
  std::string s;
  s += static_cast<char>('0' + rng.uniform_int(1, 9));
  for (int i = 1; i < ndigits; ++i) s += static_cast<char>('0' + rng.uniform_int(0, 9));
  return s;
}

// Trailing digit nonzero so the written digit count is well defined.
inline std::string draw_frac_digits(Rng& rng, int ndigits) {
  std::string s;
  for (int i = 0; i + 1 < ndigits; ++i) s += static_cast<char>('0' + rng.uniform_int(0, 9));
  s += static_cast<char>('0' + rng.uniform_int(1, 9));
  return s;
}

inline std::string draw_int_literal(Rng& rng, int d) { return draw_uint(rng, d); }

inline std::string draw_float_literal(Rng& rng, int d) {
  int frac = static_cast<int>(rng.uniform_int(1, d - 1));
  return draw_uint(rng, d - frac) + "." + draw_frac_digits(rng, frac);
}

inline std::string draw_fraction_literal(Rng& rng, int d) {
  for (;;) {
    int dp = d, dq = d;
    if (rng.coin(0.5))
      dq = static_cast<int>(rng.uniform_int(1, d));
    else
      dp = static_cast<int>(rng.uniform_int(1, d));
    std::string p = draw_uint(rng, dp);
    std::string q = dq == 1 ? std::string(1, static_cast<char>('0' + rng.uniform_int(2, 9)))
                            : draw_uint(rng, dq);
    mpz_class zp(p, 10), zq(q, 10);
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), zp.get_mpz_t(), zq.get_mpz_t());
    if (g == 1) return p + "/" + q;
  }
}

inline std::string draw_scinot_mantissa(Rng& rng, int d) {
  std::string lead(1, static_cast<char>('0' + rng.uniform_int(1, 9)));
  return lead + "." + draw_frac_digits(rng, d - 1);
}

// Exponent conventions (the paper does not specify NUPA's sampling law):
// independent exponents up to 99; addition keeps the gap within 6 so exact
// sums stay short; conversions to float stay within 7 to bound answer length.
inline constexpr long kExpMax = 99;
inline constexpr long kExpGapMax = 6;
inline constexpr long kToFloatExpMax = 7;

}  // namespace detail

inline Sample gen_sample(Group g, Format f, int min_digits, int max_digits, Rng& rng) {
  if (!task_supported(g, f))
    throw DomainError(std::string("unsupported task ") + group_name(g) + "/" + format_name(f));
  if (min_digits < 1 || max_digits > 7 || min_digits > max_digits)
    throw DomainError("digit range [" + std::to_string(min_digits) + "," +
                      std::to_string(max_digits) + "] outside [1,7]");
  int lo = std::max(min_digits, format_min_digits(f));
  if (g == Group::sig) lo = std::max(lo, 2);  // at least 2 digits to round from
  int hi = std::max(max_digits, lo);

  auto draw_operand = [&](long* exp_out = nullptr, long forced_exp = -1) {
    int d = static_cast<int>(rng.uniform_int(lo, hi));
    switch (f) {
      case Format::Int: return detail::draw_int_literal(rng, d);
      case Format::Float: return detail::draw_float_literal(rng, d);
      case Format::Fraction: return detail::draw_fraction_literal(rng, d);
      case Format::SciNot: {
        std::string m = detail::draw_scinot_mantissa(rng, d);
        long cap = (g == Group::to) ? detail::kToFloatExpMax : detail::kExpMax;
        long e = forced_exp >= 0 ? forced_exp : rng.uniform_int(0, cap);
        if (exp_out) *exp_out = e;
        return m + "e" + std::to_string(e);
      }
    }
    throw ContractError("bad format");
  };

  for (;;) {
    std::vector<std::string> lits;
    int param = -1;
    bool binary = g == Group::add || g == Group::subtract || g == Group::multiply ||
                  g == Group::truediv || g == Group::floordiv || g == Group::modulo ||
                  g == Group::max;
    if (binary) {
      if (f == Format::SciNot && (g == Group::add || g == Group::subtract)) {
        long e1 = 0;
        lits.push_back(draw_operand(&e1));
        long gap = rng.uniform_int(0, detail::kExpGapMax);
        long e2 = rng.coin(0.5) ? e1 + gap : e1 - gap;
        e2 = std::min(std::max(e2, 0L), detail::kExpMax);
        lits.push_back(draw_operand(nullptr, e2));
      } else {
        lits.push_back(draw_operand());
        lits.push_back(draw_operand());
      }
    } else {
      lits.push_back(draw_operand());
      if (g == Group::count) param = static_cast<int>(rng.uniform_int(0, 9));
      if (g == Group::sig) {
        int d0 = literal_digit_count(lits[0], f);
        param = static_cast<int>(rng.uniform_int(2, std::min(6, std::max(2, d0))));
      }
    }

    std::vector<ExactNumber> ops;
    for (const auto& l : lits) ops.push_back(parse_exact(l, f));

    // Constraints the answer format imposes.
    if (f == Format::Fraction &&
        (g == Group::add || g == Group::subtract || g == Group::multiply ||
         g == Group::truediv)) {
      mpq_class r;
      if (g == Group::add)
        r = ops[0].value + ops[1].value;
      else if (g == Group::subtract)
        r = ops[0].value - ops[1].value;
      else if (g == Group::multiply)
        r = ops[0].value * ops[1].value;
      else
        r = ops[0].value / ops[1].value;
      if (r.get_den() == 1) continue;  // integral fractions are not fraction-shaped answers
    }
    if (f == Format::Int && g == Group::truediv) {
      mpq_class r = ops[0].value / ops[1].value;
      if (r.get_den() == 1) continue;
    }
    if (f == Format::SciNot && g == Group::subtract && ops[0].value == ops[1].value)
      continue;  // zero has no scientific form

    Sample s;
    s.group = g;
    s.format = f;
    s.prompt = render_prompt(g, f, lits, param);
    s.answer = oracle_eval(g, f, ops, param);
    s.digits = 0;
    for (const auto& l : lits) s.digits = std::max(s.digits, literal_digit_count(l, f));
    return s;
  }
}

// ---------------------------------------------------------------------------
// JSONL persistence. Reading validates each row against the oracle unless
// told otherwise, so corruption is caught at the line that carries it.
// ---------------------------------------------------------------------------

inline void write_dataset(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& s : samples) {
    nlohmann::json j{{"prompt", s.prompt},
                     {"answer", s.answer},
                     {"group", group_name(s.group)},
                     {"format", format_name(s.format)},
                     {"digits", s.digits}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<Sample> read_dataset(const std::string& path, bool validate = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Sample> samples;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Sample s;
    try {
      auto j = nlohmann::json::parse(line);
      s.prompt = j.at("prompt").get<std::string>();
      s.answer = j.at("answer").get<std::string>();
      s.group = group_from_name(j.at("group").get<std::string>());
      s.format = format_from_name(j.at("format").get<std::string>());
      s.digits = j.at("digits").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw IntegrityError(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
    }
    if (validate) {
      std::string expect;
      try {
        auto parsed = parse_prompt(s.prompt, s.group, s.format);
        expect = oracle_eval(s.group, s.format, parsed.operands, parsed.param);
      } catch (const Error& e) {
        throw IntegrityError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (expect != s.answer)
        throw IntegrityError(path + ":" + std::to_string(lineno) + ": answer '" + s.answer +
                             "' does not match oracle '" + expect + "'");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace numval
