#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "numval/taskgen.hpp"

using numval::ExactNumber;
using numval::Format;
using numval::Group;
using numval::Sample;

namespace {

std::string eval_prompt(const std::string& prompt, Group g, Format f) {
  auto parsed = numval::parse_prompt(prompt, g, f);
  return numval::oracle_eval(g, f, parsed.operands, parsed.param);
}

struct GoldenRow {
  const char* prompt;
  const char* answer;
  Group group;
  Format format;
};

// Every sample task published for the benchmark subset, reproduced verbatim.
const GoldenRow kGolden[] = {
    {"Add two numbers: 830 + 70", "900", Group::add, Format::Int},
    {"Add two numbers: 1.7 + 87.954", "89.654", Group::add, Format::Float},
    {"Add two numbers: 4/3 + 7/6", "5/2", Group::add, Format::Fraction},
    {"Add two numbers: 9.65e42 + 7.594e42", "1.7244e43", Group::add, Format::SciNot},
    {"Subtract two numbers: 693 - 647", "46", Group::subtract, Format::Int},
    {"Subtract two numbers: 16.513 - 1.28", "15.233", Group::subtract, Format::Float},
    {"Subtract two numbers: 8/9 - 6/7", "2/63", Group::subtract, Format::Fraction},
    {"Subtract two numbers: 9.711e38 - 9.2e36", "9.619e38", Group::subtract, Format::SciNot},
    {"Multiply two numbers: 211 * 314", "66254", Group::multiply, Format::Int},
    {"Multiply two numbers: 4.3 * 454.416", "1953.9888", Group::multiply, Format::Float},
    {"Multiply two numbers: 8/5 * 7/6", "28/15", Group::multiply, Format::Fraction},
    {"Multiply two numbers: 3.4e44 * 5.917e95", "2.01178e140", Group::multiply, Format::SciNot},
    {"Get the maximal number: 67530 and 65941", "67530", Group::max, Format::Int},
    {"Get the maximal number: 1.114 and 1.12", "1.12", Group::max, Format::Float},
    {"Get the maximal number: 5/6 and 3/5", "5/6", Group::max, Format::Fraction},
    {"Get the maximal number: 2.621e28 and 4.9e62", "4.9e62", Group::max, Format::SciNot},
    {"The total number of digits of 94789", "5", Group::length, Format::Int},
    {"The total number of digits of 7.643", "4", Group::length, Format::Float},
    {"Divide two numbers and return the result as a fraction. 820 / 860", "41/43",
     Group::truediv, Format::Int},
    {"Divide two numbers and return the result as a fraction. (6/5) / (8/9)", "27/20",
     Group::truediv, Format::Fraction},
    {"Divide two numbers and return the result as an integer. 912 // 3", "304",
     Group::floordiv, Format::Int},
    {"Divide two numbers and return the remainder. 617 % 193", "38", Group::modulo,
     Format::Int},
    {"Convert the number to float: 9.864e3", "9864.0", Group::to, Format::SciNot},
    {"Convert the number to scientific notation: 59.506", "5.9506e1", Group::to, Format::Float},
    {"60939 count the occurrence time of digit 9", "2", Group::count, Format::Int},
    {"Convert the number to scientific notation: 54.213 and keep significant figures as 3",
     "5.42e1", Group::sig, Format::Float},
};

TEST(Golden, AllPublishedRowsReproduce) {
  int n = 0;
  for (const auto& row : kGolden) {
    EXPECT_EQ(eval_prompt(row.prompt, row.group, row.format), row.answer) << row.prompt;
    ++n;
  }
  EXPECT_EQ(n, 26);
}

TEST(Rendering, IntForms) {
  EXPECT_EQ(numval::render_int(mpq_class(900)), "900");
  EXPECT_EQ(numval::render_int(mpq_class(0)), "0");
  EXPECT_EQ(numval::render_int(mpq_class(-154)), "-154");
  EXPECT_THROW(numval::render_int(mpq_class(1, 2)), numval::ContractError);
}

TEST(Rendering, FloatForms) {
  EXPECT_EQ(numval::render_float(mpq_class(9864)), "9864.0");
  EXPECT_EQ(numval::render_float(mpq_class(1, 2)), "0.5");
  EXPECT_EQ(numval::render_float(mpq_class(-3, 8)), "-0.375");
  EXPECT_EQ(numval::render_float(mpq_class(0)), "0.0");
  mpq_class third(1, 3);
  EXPECT_THROW(numval::render_float(third), numval::ContractError);
}

TEST(Rendering, SciNotNormalization) {
  auto sci = [](long num, long den) {
    mpq_class q(num, den);
    q.canonicalize();
    return numval::render_scinot(q);
  };
  EXPECT_EQ(sci(900, 1), "9.0e2");
  EXPECT_EQ(sci(17244, 1000) /* x 1 */, "1.7244e1");
  EXPECT_EQ(sci(1, 100), "1.0e-2");
  EXPECT_EQ(sci(-95, 10), "-9.5e0");
  EXPECT_THROW(numval::render_scinot(mpq_class(0)), numval::ContractError);
}

TEST(Rendering, SignificantFigureRounding) {
  mpq_class v(54213, 1000);
  v.canonicalize();
  EXPECT_EQ(numval::render_scinot(v, 3), "5.42e1");
  EXPECT_EQ(numval::render_scinot(v, 4), "5.421e1");
  EXPECT_EQ(numval::render_scinot(v, 2), "5.4e1");

  // Half-up at the boundary digit.
  mpq_class half(545, 10);
  half.canonicalize();
  EXPECT_EQ(numval::render_scinot(half, 2), "5.5e1");

  // Rounding can carry into the next decade.
  EXPECT_EQ(numval::render_scinot(mpq_class(999), 2), "1.0e3");

  // Trailing zeros are kept: exactly k significant figures.
  mpq_class z(5396, 100);
  z.canonicalize();
  EXPECT_EQ(numval::render_scinot(z, 3), "5.40e1");

  EXPECT_THROW(numval::render_scinot(mpq_class(5), 1), numval::ContractError);
}

TEST(Parsing, RoundTripsCanonicalLiterals) {
  auto rt = [](const std::string& lit, Format f) {
    auto x = numval::parse_exact(lit, f);
    return canonicalize(x);
  };
  EXPECT_EQ(rt("830", Format::Int), "830");
  EXPECT_EQ(rt("-46", Format::Int), "-46");
  EXPECT_EQ(rt("87.954", Format::Float), "87.954");
  EXPECT_EQ(rt("0.5", Format::Float), "0.5");
  EXPECT_EQ(rt("4/3", Format::Fraction), "4/3");
  EXPECT_EQ(rt("9.65e42", Format::SciNot), "9.65e42");
  EXPECT_EQ(rt("1.0e-2", Format::SciNot), "1.0e-2");
}

TEST(Parsing, RejectsMalformedLiterals) {
  EXPECT_THROW(numval::parse_exact("007", Format::Int), numval::ParseError);
  EXPECT_THROW(numval::parse_exact("1.", Format::Float), numval::ParseError);
  EXPECT_THROW(numval::parse_exact(".5", Format::Float), numval::ParseError);
  EXPECT_THROW(numval::parse_exact("5/0", Format::Fraction), numval::ParseError);
  EXPECT_THROW(numval::parse_exact("12.5e3", Format::SciNot), numval::ParseError);
  EXPECT_THROW(numval::parse_exact("0.5e3", Format::SciNot), numval::ParseError);
  EXPECT_THROW(numval::parse_exact("2.5e+3", Format::SciNot), numval::ParseError);
}

TEST(Oracle, FloorSemanticsAndDomainErrors) {
  auto i = [](long v) {
    ExactNumber x;
    x.value = v;
    x.format = Format::Int;
    return x;
  };
  EXPECT_EQ(numval::oracle_eval(Group::floordiv, Format::Int, {i(912), i(3)}), "304");
  EXPECT_EQ(numval::oracle_eval(Group::floordiv, Format::Int, {i(7), i(2)}), "3");
  EXPECT_EQ(numval::oracle_eval(Group::modulo, Format::Int, {i(617), i(193)}), "38");
  EXPECT_THROW(numval::oracle_eval(Group::floordiv, Format::Int, {i(7), i(0)}),
               numval::DomainError);
  EXPECT_THROW(numval::oracle_eval(Group::add, Format::Int, {i(7)}), numval::ContractError);
  EXPECT_THROW(numval::oracle_eval(Group::floordiv, Format::Float, {i(7), i(2)}),
               numval::DomainError);
}

TEST(Oracle, CountHandlesAbsentDigit) {
  ExactNumber x;
  x.value = 60939;
  x.format = Format::Int;
  EXPECT_EQ(numval::oracle_eval(Group::count, Format::Int, {x}, 9), "2");
  EXPECT_EQ(numval::oracle_eval(Group::count, Format::Int, {x}, 7), "0");
}

TEST(Generator, SupportedMatrixCoversEveryGoldenRow) {
  // All four formats for add/subtract/multiply/max, plus the format-restricted
  // groups, plus count/sig on both int and float (mirroring length).
  EXPECT_EQ(numval::supported_tasks().size(), 28u);
  for (const auto& row : kGolden)
    EXPECT_TRUE(numval::task_supported(row.group, row.format))
        << numval::group_name(row.group) << "/" << numval::format_name(row.format);
  numval::Rng rng(1);
  EXPECT_THROW(numval::gen_sample(Group::floordiv, Format::Float, 1, 3, rng),
               numval::DomainError);
  EXPECT_THROW(numval::gen_sample(Group::add, Format::Int, 0, 3, rng), numval::DomainError);
  EXPECT_THROW(numval::gen_sample(Group::add, Format::Int, 1, 8, rng), numval::DomainError);
}

TEST(Generator, EverySampleValidatesAgainstOracle) {
  numval::Rng rng(7);
  for (const auto& [g, f] : numval::supported_tasks()) {
    for (int rep = 0; rep < 40; ++rep) {
      Sample s = numval::gen_sample(g, f, 1, 7, rng);
      EXPECT_EQ(eval_prompt(s.prompt, s.group, s.format), s.answer) << s.prompt;
      EXPECT_GE(s.digits, 1);
      EXPECT_LE(s.digits, 7);
    }
  }
}

TEST(Generator, DigitRangeIsRespected) {
  numval::Rng rng(8);
  for (const auto& [g, f] : numval::supported_tasks()) {
    for (int rep = 0; rep < 25; ++rep) {
      Sample s = numval::gen_sample(g, f, 3, 5, rng);
      auto parsed = numval::parse_prompt(s.prompt, g, f);
      int max_d = 0;
      for (const auto& lit : parsed.literals) {
        int d = numval::literal_digit_count(lit, f);
        EXPECT_GE(d, 3) << s.prompt;
        EXPECT_LE(d, 5) << s.prompt;
        max_d = std::max(max_d, d);
      }
      EXPECT_EQ(s.digits, max_d);
    }
  }
}

TEST(Generator, FormatMinimumLiftsTinyRanges) {
  numval::Rng rng(9);
  for (int rep = 0; rep < 25; ++rep) {
    Sample s = numval::gen_sample(Group::add, Format::Float, 1, 1, rng);
    auto parsed = numval::parse_prompt(s.prompt, Group::add, Format::Float);
    for (const auto& lit : parsed.literals)
      EXPECT_EQ(numval::literal_digit_count(lit, Format::Float), 2) << s.prompt;
  }
}

TEST(Generator, FractionAnswersAreReducedAndNonIntegral) {
  numval::Rng rng(10);
  for (int rep = 0; rep < 300; ++rep) {
    Sample s = numval::gen_sample(Group::truediv, rep % 2 ? Format::Fraction : Format::Int, 1,
                                  5, rng);
    auto slash = s.answer.find('/');
    ASSERT_NE(slash, std::string::npos) << s.answer;
    std::size_t start = s.answer[0] == '-' ? 1 : 0;
    mpz_class p(s.answer.substr(start, slash - start), 10), q(s.answer.substr(slash + 1), 10);
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), p.get_mpz_t(), q.get_mpz_t());
    EXPECT_EQ(g, 1) << s.answer;
    EXPECT_GT(q, 1) << s.answer;
  }
}

TEST(Generator, SciNotAnswersStayNormalized) {
  numval::Rng rng(11);
  for (int rep = 0; rep < 300; ++rep) {
    Group g = rep % 3 == 0 ? Group::add : rep % 3 == 1 ? Group::subtract : Group::multiply;
    Sample s = numval::gen_sample(g, Format::SciNot, 1, 7, rng);
    std::string a = s.answer;
    if (a[0] == '-') a = a.substr(1);
    ASSERT_GE(a.size(), 5u) << s.answer;  // d.fe0 at minimum
    EXPECT_GE(a[0], '1');
    EXPECT_LE(a[0], '9');
    EXPECT_EQ(a[1], '.');
    EXPECT_NE(a.find('e'), std::string::npos);
    EXPECT_EQ(a.find('+'), std::string::npos);
  }
}

TEST(Generator, DeterministicUnderSeed) {
  numval::Rng a(42), b(42);
  for (int rep = 0; rep < 50; ++rep) {
    Sample sa = numval::gen_sample(Group::multiply, Format::Float, 1, 7, a);
    Sample sb = numval::gen_sample(Group::multiply, Format::Float, 1, 7, b);
    EXPECT_EQ(sa.prompt, sb.prompt);
    EXPECT_EQ(sa.answer, sb.answer);
  }
}

TEST(Dataset, RoundTripPreservesFields) {
  numval::Rng rng(12);
  std::vector<Sample> samples;
  for (const auto& [g, f] : numval::supported_tasks())
    samples.push_back(numval::gen_sample(g, f, 1, 4, rng));
  std::string path = testing::TempDir() + "taskgen_roundtrip.jsonl";
  numval::write_dataset(samples, path);
  auto back = numval::read_dataset(path, true);
  ASSERT_EQ(back.size(), samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].prompt, samples[i].prompt);
    EXPECT_EQ(back[i].answer, samples[i].answer);
    EXPECT_EQ(back[i].group, samples[i].group);
    EXPECT_EQ(back[i].format, samples[i].format);
    EXPECT_EQ(back[i].digits, samples[i].digits);
  }
  std::remove(path.c_str());
}

TEST(Dataset, CorruptedAnswerIsCaughtWithLineNumber) {
  numval::Rng rng(13);
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(numval::gen_sample(Group::add, Format::Int, 2, 4, rng));
  // Nudge one digit of the middle answer.
  char& c = samples[1].answer.back();
  c = c == '9' ? '8' : c + 1;
  std::string path = testing::TempDir() + "taskgen_corrupt.jsonl";
  numval::write_dataset(samples, path);
  try {
    numval::read_dataset(path, true);
    FAIL() << "expected IntegrityError";
  } catch (const numval::IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_EQ(numval::read_dataset(path, false).size(), 3u);
  std::remove(path.c_str());
}

TEST(Dataset, TenThousandSamplesSelfValidate) {
  numval::Rng rng(99);
  const auto& tasks = numval::supported_tasks();
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto& [g, f] = tasks[i % tasks.size()];
    Sample s = numval::gen_sample(g, f, 1, 7, rng);
    if (eval_prompt(s.prompt, s.group, s.format) != s.answer) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

}  // namespace
