#pragma once

// Benchmark metrics and report shapes. Three per-sample scores:
//
//   exact_match   strict string equality after whitespace trimming (and,
//                 for the digit-count baseline, annotation stripping); no
//                 numeric re-canonicalization of predictions
//   digit_match   positional digit overlap in [0, 1]; strings are split on
//                 the structural characters '/' and 'e' into segments paired
//                 in order, each segment anchored at its first decimal point
//                 with integer digits right-aligned and fractional digits
//                 left-aligned; score = matches / max(digit counts)
//   dlength       |digit-count difference|, counting digit characters only
//
// Signs and other non-digit characters are invisible to digit_match and
// dlength; only exact_match sees them. aggregate() folds per-sample records
// into unweighted means overall, per operand digit count, and per task group.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <numval/common.hpp>
#include <numval/taskgen.hpp>
#include <numval/text.hpp>

namespace numval {

namespace detail {

inline long count_digits(const std::string& s) {
  return std::count_if(s.begin(), s.end(),
                       [](unsigned char c) { return std::isdigit(c) != 0; });
}

// Digits of one segment, split at its first decimal point. Non-digit
// characters other than the anchoring '.' are skipped.
struct SegmentDigits {
  std::string int_part, frac_part;
};

inline SegmentDigits split_segment(const std::string& seg) {
  SegmentDigits out;
  bool frac = false;
  for (char c : seg) {
    if (c == '.' && !frac) {
      frac = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      (frac ? out.frac_part : out.int_part) += c;
    }
  }
  return out;
}

inline std::vector<std::string> structural_segments(const std::string& s) {
  std::vector<std::string> segs(1);
  for (char c : s) {
    if (c == '/' || c == 'e')
      segs.emplace_back();
    else
      segs.back() += c;
  }
  return segs;
}

}  // namespace detail

inline int exact_match(const std::string& pred, const std::string& ref,
                       bool strip_annotations = false) {
  std::string p = trim(pred);
  if (strip_annotations) p = trim(numerologic_strip(p));
  return p == trim(ref) ? 1 : 0;
}

inline double digit_match(const std::string& pred, const std::string& ref) {
  long denom = std::max(detail::count_digits(pred), detail::count_digits(ref));
  if (denom == 0) return 1.0;  // no digits on either side: nothing to mismatch
  std::vector<std::string> ps = detail::structural_segments(pred);
  std::vector<std::string> rs = detail::structural_segments(ref);
  long matches = 0;
  std::size_t pairs = std::min(ps.size(), rs.size());
  for (std::size_t i = 0; i < pairs; ++i) {
    detail::SegmentDigits a = detail::split_segment(ps[i]);
    detail::SegmentDigits b = detail::split_segment(rs[i]);
    std::size_t ni = std::min(a.int_part.size(), b.int_part.size());
    for (std::size_t j = 1; j <= ni; ++j)
      if (a.int_part[a.int_part.size() - j] == b.int_part[b.int_part.size() - j]) ++matches;
    std::size_t nf = std::min(a.frac_part.size(), b.frac_part.size());
    for (std::size_t j = 0; j < nf; ++j)
      if (a.frac_part[j] == b.frac_part[j]) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(denom);
}

inline long dlength(const std::string& pred, const std::string& ref) {
  return std::abs(detail::count_digits(pred) - detail::count_digits(ref));
}

struct EvalRecord {
  Group group = Group::add;
  Format format = Format::Int;
  int digits = 0;
  std::string prediction;  // after trimming / annotation stripping
  int exact = 0;
  double digit = 0;
  long dlen = 0;
};

// Scores one prediction against its sample. All three metrics see the same
// cleaned prediction string, which keeps exact = 1 implying digit = 1 and
// dlen = 0.
inline EvalRecord score_sample(const Sample& s, const std::string& prediction,
                               bool strip_annotations = false) {
  EvalRecord r;
  r.group = s.group;
  r.format = s.format;
  r.digits = s.digits;
  std::string p = trim(prediction);
  if (strip_annotations) p = trim(numerologic_strip(p));
  std::string ref = trim(s.answer);
  r.prediction = p;
  r.exact = p == ref ? 1 : 0;
  r.digit = digit_match(p, ref);
  r.dlen = dlength(p, ref);
  return r;
}

struct MetricMeans {
  double exact = 0, digit = 0, dlen = 0;
  long n = 0;
};

struct Report {
  MetricMeans overall;
  std::map<int, MetricMeans> by_digits;                 // operand digit count
  std::vector<std::pair<Group, MetricMeans>> by_group;  // fixed benchmark group order
};

inline Report aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ContractError("aggregate: empty record set");
  Report rep;
  std::map<Group, MetricMeans> groups;
  auto fold = [](MetricMeans& m, const EvalRecord& r) {
    m.exact += r.exact;
    m.digit += r.digit;
    m.dlen += static_cast<double>(r.dlen);
    ++m.n;
  };
  for (const EvalRecord& r : records) {
    fold(rep.overall, r);
    fold(rep.by_digits[r.digits], r);
    fold(groups[r.group], r);
  }
  auto finish = [](MetricMeans& m) {
    m.exact /= static_cast<double>(m.n);
    m.digit /= static_cast<double>(m.n);
    m.dlen /= static_cast<double>(m.n);
  };
  finish(rep.overall);
  for (auto& [d, m] : rep.by_digits) finish(m);
  for (Group g : all_groups()) {
    auto it = groups.find(g);
    if (it == groups.end()) continue;
    finish(it->second);
    rep.by_group.emplace_back(g, it->second);
  }
  return rep;
}

inline nlohmann::json report_json(const Report& rep) {
  auto pack = [](const MetricMeans& m) {
    return nlohmann::json{
        {"exact_match", m.exact}, {"digit_match", m.digit}, {"dlength", m.dlen}, {"n", m.n}};
  };
  nlohmann::json by_digits = nlohmann::json::object();
  for (const auto& [d, m] : rep.by_digits) by_digits[std::to_string(d)] = pack(m);
  nlohmann::json by_group = nlohmann::json::object();
  for (const auto& [g, m] : rep.by_group) by_group[group_name(g)] = pack(m);
  return {{"overall", pack(rep.overall)},
          {"by_digits", by_digits},
          {"by_group", by_group},
          {"n", rep.overall.n}};
}

inline std::string report_text(const Report& rep) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line,
                "overall (n=%ld)\n  exact match  %.4f\n  digit match  %.4f\n  d-length     %.4f\n",
                rep.overall.n, rep.overall.exact, rep.overall.digit, rep.overall.dlen);
  out += line;
  out += "\nby operand digits\n  digits   exact   digit  d-length       n\n";
  for (const auto& [d, m] : rep.by_digits) {
    std::snprintf(line, sizeof line, "  %6d  %.4f  %.4f  %8.4f  %6ld\n", d, m.exact, m.digit,
                  m.dlen, m.n);
    out += line;
  }
  out += "\nby task group\n  group      exact   digit  d-length       n\n";
  for (const auto& [g, m] : rep.by_group) {
    std::snprintf(line, sizeof line, "  %-9s  %.4f  %.4f  %8.4f  %6ld\n", group_name(g), m.exact,
                  m.digit, m.dlen, m.n);
    out += line;
  }
  return out;
}

}  // namespace numval
