#pragma once

#include <array>
#include <cstddef>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "numval/common.hpp"
#include "numval/taskgen.hpp"

namespace numval {

// ---------------------------------------------------------------------------
// Character-level vocabulary. Ids are deterministic: the four specials first,
// then every single-character token in ascending byte order. The character
// set is the digits, the operator/punctuation alphabet of the task templates,
// the annotation braces used by the digit-count baseline, and whatever letters
// the prompt templates actually spell.
// ---------------------------------------------------------------------------

struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> ids;
  std::array<int, 128> char_ids{};  // single-char fast path; -1 when absent
  int pad = 0, bos = 1, eos = 2, num = 3;

  int size() const { return static_cast<int>(tokens.size()); }

  bool is_special(int id) const { return id == pad || id == bos || id == eos || id == num; }

  int id_of(const std::string& tok) const {
    auto it = ids.find(tok);
    if (it == ids.end()) throw VocabError("unknown token '" + tok + "'");
    return it->second;
  }

  int id_of_char(char c) const {
    unsigned char u = static_cast<unsigned char>(c);
    int id = u < 128 ? char_ids[u] : -1;
    if (id < 0) throw VocabError(std::string("unencodable character '") + c + "'");
    return id;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw VocabError("unknown token id " + std::to_string(id));
    return tokens[static_cast<std::size_t>(id)];
  }

  static Vocab build() {
    Vocab v;
    auto add = [&](const std::string& t) {
      v.ids.emplace(t, static_cast<int>(v.tokens.size()));
      v.tokens.push_back(t);
    };
    add("<pad>");
    add("<bos>");
    add("<eos>");
    add("<num>");
    std::set<char> chars;
    for (char c = '0'; c <= '9'; ++c) chars.insert(c);
    for (char c : {'.', '/', '-', '+', '%', '(', ')', ':', ',', '=', '*', ' ', '{', '}', 'e'})
      chars.insert(c);
    for (const auto& [g, f] : supported_tasks()) {
      detail::PromptParts p = detail::prompt_parts(g, f);
      for (const std::string* s : {&p.prefix, &p.infix, &p.suffix})
        for (char c : *s) chars.insert(c);
    }
    for (char c : chars) add(std::string(1, c));
    v.index_chars();
    return v;
  }

  void index_chars() {
    char_ids.fill(-1);
    for (int id = 0; id < size(); ++id)
      if (tokens[static_cast<std::size_t>(id)].size() == 1)
        char_ids[static_cast<unsigned char>(tokens[static_cast<std::size_t>(id)][0])] = id;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (int id = 0; id < size(); ++id) j[tokens[static_cast<std::size_t>(id)]] = id;
    return j;
  }

  static Vocab from_json(const nlohmann::json& j) {
    Vocab v;
    v.tokens.assign(j.size(), "");
    for (auto it = j.begin(); it != j.end(); ++it) {
      int id = it.value().get<int>();
      if (id < 0 || id >= static_cast<int>(j.size()) ||
          !v.tokens[static_cast<std::size_t>(id)].empty())
        throw IntegrityError("vocabulary ids are not a permutation of 0.." +
                             std::to_string(j.size() - 1));
      v.tokens[static_cast<std::size_t>(id)] = it.key();
      v.ids.emplace(it.key(), id);
    }
    for (auto [name, field] : {std::pair<const char*, int*>{"<pad>", &v.pad},
                               {"<bos>", &v.bos},
                               {"<eos>", &v.eos},
                               {"<num>", &v.num}}) {
      auto it = v.ids.find(name);
      if (it == v.ids.end()) throw IntegrityError(std::string("vocabulary missing ") + name);
      *field = it->second;
    }
    v.index_chars();
    return v;
  }
};

// ---------------------------------------------------------------------------
// Numeric literals. The scanner produces raw spans; parse_value decomposes a
// span into sign plus symbolic digit lists (no binary conversion, so literal
// length is unbounded). Scientific notation and fractions intentionally split
// into several plain decimal literals ("9.65e42" scans as "9.65" and "42").
// ---------------------------------------------------------------------------

struct NumberLiteral {
  std::size_t begin = 0;  // byte offsets into the scanned text
  std::size_t end = 0;
  std::string raw;
};

struct NumberValue {
  int sign = 1;
  std::vector<int> int_digits;   // most-significant first
  std::vector<int> frac_digits;  // left-to-right
  // Auxiliary features: sign, integer-digit count, fractional-digit count.
  std::array<double, 3> aux() const {
    return {static_cast<double>(sign), static_cast<double>(int_digits.size()),
            static_cast<double>(frac_digits.size())};
  }
  bool operator==(const NumberValue&) const = default;
};

inline std::vector<NumberLiteral> scan_numerals(const std::string& text) {
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  std::vector<NumberLiteral> out;
  std::size_t i = 0, n = text.size();
  while (i < n) {
    char c = text[i];
    bool sign_start = false;
    if ((c == '-' || c == '+') && i + 1 < n && is_digit(text[i + 1])) {
      // A sign belongs to the literal only when the previous non-space
      // character is not a digit; otherwise it is an infix operator.
      std::size_t j = i;
      while (j > 0 && text[j - 1] == ' ') --j;
      sign_start = j == 0 || !is_digit(text[j - 1]);
    }
    if (!is_digit(c) && !sign_start) {
      ++i;
      continue;
    }
    std::size_t b = i;
    if (sign_start) ++i;
    while (i < n && is_digit(text[i])) ++i;
    if (i + 1 < n && text[i] == '.' && is_digit(text[i + 1])) {
      ++i;
      while (i < n && is_digit(text[i])) ++i;
    }
    out.push_back({b, i, text.substr(b, i - b)});
  }
  return out;
}

inline NumberValue parse_value(const NumberLiteral& lit) {
  auto fail = [&](const char* why) {
    throw ParseError("bad numeral '" + lit.raw + "' at byte " + std::to_string(lit.begin) + ": " +
                     why);
  };
  const std::string& s = lit.raw;
  NumberValue v;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
    v.sign = s[i] == '-' ? -1 : 1;
    ++i;
  }
  std::size_t int_begin = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') v.int_digits.push_back(s[i++] - '0');
  if (v.int_digits.empty()) fail("expected a digit");
  if (v.int_digits.size() > 1 && s[int_begin] == '0') fail("leading zero");
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') v.frac_digits.push_back(s[i++] - '0');
    if (v.frac_digits.empty()) fail("expected a fractional digit");
  }
  if (i != s.size()) fail("trailing characters");
  bool all_zero = true;
  for (int d : v.int_digits) all_zero &= d == 0;
  for (int d : v.frac_digits) all_zero &= d == 0;
  if (all_zero) v.sign = 1;  // zero carries no sign
  return v;
}

// ---------------------------------------------------------------------------
// Encoding. One token per character; insert_num additionally places a <num>
// token before each literal and records (its index, the parsed value) so the
// embedding layer can substitute a value-computed vector at that position.
// ---------------------------------------------------------------------------

struct EncodedSequence {
  std::vector<int> ids;
  std::vector<std::pair<std::size_t, NumberValue>> nums;  // index of each <num> id
  std::size_t answer_start = 0;  // first answer token; 0 for bare text
};

namespace detail {

inline void append_encoded(const Vocab& v, const std::string& text, bool insert_num,
                           EncodedSequence& seq) {
  std::vector<NumberLiteral> lits = scan_numerals(text);
  std::size_t li = 0;
  for (std::size_t i = 0; i < text.size();) {
    if (li < lits.size() && lits[li].begin == i) {
      if (insert_num) {
        seq.nums.emplace_back(seq.ids.size(), parse_value(lits[li]));
        seq.ids.push_back(v.num);
      }
      for (char c : lits[li].raw) seq.ids.push_back(v.id_of_char(c));
      i = lits[li].end;
      ++li;
    } else {
      seq.ids.push_back(v.id_of_char(text[i]));
      ++i;
    }
  }
}

}  // namespace detail

inline EncodedSequence encode(const Vocab& v, const std::string& text, bool insert_num) {
  EncodedSequence seq;
  detail::append_encoded(v, text, insert_num, seq);
  return seq;
}

// Training example: <bos> prompt = answer <eos>, answer_start pointing at the
// first answer token. Answer numerals get <num> too, so the model learns to
// emit <num> before it generates digits.
inline EncodedSequence encode_example(const Vocab& v, const std::string& prompt,
                                      const std::string& answer, bool insert_num) {
  EncodedSequence seq;
  seq.ids.push_back(v.bos);
  detail::append_encoded(v, prompt + "=", insert_num, seq);
  seq.answer_start = seq.ids.size();
  detail::append_encoded(v, answer, insert_num, seq);
  seq.ids.push_back(v.eos);
  return seq;
}

// Generation prefix: <bos> prompt = , ready for the decoder to continue.
inline EncodedSequence encode_prompt(const Vocab& v, const std::string& prompt, bool insert_num) {
  EncodedSequence seq;
  seq.ids.push_back(v.bos);
  detail::append_encoded(v, prompt + "=", insert_num, seq);
  seq.answer_start = seq.ids.size();
  return seq;
}

inline std::string decode(const Vocab& v, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = v.token(id);
    if (v.is_special(id)) continue;
    out += tok;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Digit-count baseline surface form: each numeral is wrapped as {D:raw} or
// {D.F:raw} where D / F are its integer / fractional digit counts. Applied
// per literal, so "5/2" becomes "{1:5}/{1:2}". Stripping is tolerant of
// truncated generations: headers and braces vanish, digits survive.
// ---------------------------------------------------------------------------

inline std::string numerologic_annotate(const std::string& text) {
  std::vector<NumberLiteral> lits = scan_numerals(text);
  std::string out;
  std::size_t i = 0;
  for (const NumberLiteral& lit : lits) {
    out += text.substr(i, lit.begin - i);
    NumberValue val = parse_value(lit);
    out += "{" + std::to_string(val.int_digits.size());
    if (!val.frac_digits.empty()) out += "." + std::to_string(val.frac_digits.size());
    out += ":" + lit.raw + "}";
    i = lit.end;
  }
  out += text.substr(i);
  return out;
}

inline std::string numerologic_strip(const std::string& text) {
  static const std::regex header(R"(\{[0-9]+(\.[0-9]+)?:)");
  std::string out = std::regex_replace(text, header, "");
  std::string clean;
  clean.reserve(out.size());
  for (char c : out)
    if (c != '{' && c != '}') clean += c;
  return clean;
}

inline Sample numerologic_augment(Sample s) {
  s.answer = numerologic_annotate(s.answer);
  return s;
}

}  // namespace numval
