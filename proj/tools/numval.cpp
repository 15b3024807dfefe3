// Command-line entry point: dataset generation, training, evaluation, one-off
// generation, and value-embedding inspection. Exit codes: 0 success, 1 runtime
// failure, 2 usage, 3 I/O, 4 integrity/compatibility.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <numval/pipeline.hpp>

namespace fs = std::filesystem;
using namespace numval;

namespace {

constexpr const char* kUsage = R"(usage: numval <command> [flags]

commands:
  gen-data    --out DIR [--count N] [--val-count N] [--test-count N] [--seed S]
              [--stages 3,5,7 | --digits LO..HI] [--groups g1,g2,...]
              [--formats int,float,fraction,scinot]
  train       --config FILE [--resume CKPT] [--variant mlp|rnn|none|numerologic]
              [--seed S] [--out DIR] [--data DIR]
  eval        --ckpt FILE --data FILE [--out DIR] [--max-new N]
  generate    --ckpt FILE --prompt STR [--max-new N]
  inspect-num --ckpt FILE --values v1,v2,...
)";

// Flags are --name value pairs; repeated flags are usage errors.
std::map<std::string, std::string> parse_flags(int argc, char** argv, int from,
                                               const std::set<std::string>& known) {
  std::map<std::string, std::string> flags;
  for (int i = from; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    std::string name = arg.substr(2);
    if (!known.count(name)) throw ConfigError("unknown flag --" + name);
    if (i + 1 >= argc) throw ConfigError("flag --" + name + " needs a value");
    if (flags.count(name)) throw ConfigError("flag --" + name + " given twice");
    flags[name] = argv[++i];
  }
  return flags;
}

long flag_long(const std::map<std::string, std::string>& flags, const std::string& name,
               long fallback) {
  auto it = flags.find(name);
  if (it == flags.end()) return fallback;
  try {
    std::size_t used = 0;
    long v = std::stol(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("flag --" + name + " expects an integer, got '" + it->second + "'");
}

std::string flag_str(const std::map<std::string, std::string>& flags, const std::string& name,
                     const std::string& fallback = "") {
  auto it = flags.find(name);
  return it == flags.end() ? fallback : it->second;
}

std::string require_flag(const std::map<std::string, std::string>& flags,
                         const std::string& name) {
  auto it = flags.find(name);
  if (it == flags.end()) throw ConfigError("missing required flag --" + name);
  return it->second;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw IoError("failed writing " + path);
}

Format format_from_flag(const std::string& s) {
  if (s == "int") return Format::Int;
  if (s == "float") return Format::Float;
  if (s == "fraction") return Format::Fraction;
  if (s == "scinot") return Format::SciNot;
  throw ConfigError("unknown format '" + s + "' (expect int|float|fraction|scinot)");
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const std::map<std::string, std::string>& flags) {
  std::string out_dir = require_flag(flags, "out");
  long count = flag_long(flags, "count", 10000);
  long val_count = flag_long(flags, "val-count", std::max<long>(1, count / 10));
  long test_count = flag_long(flags, "test-count", std::max<long>(1, count / 10));
  std::uint64_t seed = static_cast<std::uint64_t>(flag_long(flags, "seed", 0));
  if (count <= 0 || val_count <= 0 || test_count <= 0)
    throw ConfigError("sample counts must be positive");

  int digits_lo = 1;
  std::vector<int> ceilings = {3, 5, 7};
  if (flags.count("digits") && flags.count("stages"))
    throw ConfigError("--digits and --stages are mutually exclusive");
  if (flags.count("digits")) {
    std::string d = flags.at("digits");
    std::size_t dots = d.find("..");
    int lo = 0, hi = 0;
    try {
      if (dots == std::string::npos) throw std::invalid_argument("");
      lo = std::stoi(d.substr(0, dots));
      hi = std::stoi(d.substr(dots + 2));
    } catch (const std::exception&) {
      throw ConfigError("--digits expects LO..HI, got '" + d + "'");
    }
    if (lo < 1 || hi < lo || hi > 7) throw ConfigError("--digits range must satisfy 1 <= LO <= HI <= 7");
    digits_lo = lo;
    ceilings = {hi};
  } else if (flags.count("stages")) {
    ceilings.clear();
    for (const std::string& part : split(flags.at("stages"), ','))
      ceilings.push_back(static_cast<int>(std::stol(trim(part))));
    int prev = 0;
    for (int c : ceilings) {
      if (c <= prev || c > 7) throw ConfigError("--stages must be strictly increasing, at most 7");
      prev = c;
    }
  }

  std::vector<std::pair<Group, Format>> tasks = supported_tasks();
  if (flags.count("groups")) {
    std::set<Group> keep;
    for (const std::string& part : split(flags.at("groups"), ','))
      keep.insert(group_from_name(trim(part)));
    std::erase_if(tasks, [&](const auto& t) { return !keep.count(t.first); });
  }
  if (flags.count("formats")) {
    std::set<Format> keep;
    for (const std::string& part : split(flags.at("formats"), ','))
      keep.insert(format_from_flag(trim(part)));
    std::erase_if(tasks, [&](const auto& t) { return !keep.count(t.second); });
  }
  if (tasks.empty()) throw ConfigError("--groups/--formats filtered out every task");

  fs::create_directories(out_dir);
  const char* splits[] = {"train", "val", "test"};
  long counts[] = {count, val_count, test_count};
  std::uint64_t stream = 0;
  for (std::size_t ci = 0; ci < ceilings.size(); ++ci) {
    for (int si = 0; si < 3; ++si) {
      Rng rng = Rng::derive(seed, ++stream);
      std::vector<Sample> samples;
      samples.reserve(static_cast<std::size_t>(counts[si]));
      for (long i = 0; i < counts[si]; ++i) {
        const auto& [g, f] =
            tasks[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tasks.size()) - 1))];
        samples.push_back(gen_sample(g, f, digits_lo, ceilings[ci], rng));
      }
      std::string path = dataset_path(out_dir, splits[si], ceilings[ci]);
      write_dataset(samples, path);
      std::printf("%s: %ld samples\n", path.c_str(), static_cast<long>(samples.size()));
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::map<std::string, std::string>& flags) {
  RunConfig cfg = RunConfig::from_toml(read_file(require_flag(flags, "config")));
  if (flags.count("variant")) cfg.variant = flags.at("variant");
  if (flags.count("seed")) cfg.seed = static_cast<std::uint64_t>(flag_long(flags, "seed", 0));
  if (flags.count("out")) cfg.out_dir = flags.at("out");
  if (flags.count("data")) cfg.data_dir = flags.at("data");

  Vocab v = Vocab::build();
  cfg.resolve(v.size());
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/resolved.toml", cfg.to_toml());

  std::vector<std::vector<Sample>> pools = load_stage_pools(cfg);

  TrainerState<float> st = TrainerState<float>::fresh(cfg.model, cfg.seed);
  bool resumed = flags.count("resume") > 0;
  if (resumed) {
    st = checkpoint_load<float>(flags.at("resume"));
    nlohmann::json want, got;
    to_json(want, cfg.model);
    to_json(got, st.model.cfg);
    if (want != got)
      throw IntegrityError("checkpoint model config does not match the resolved run config");
  }

  std::string log_path = cfg.out_dir + "/log.jsonl";
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path + " for writing");

  TrainOutcome out =
      run_training(cfg, v, st, pools, log, cfg.out_dir + "/ckpt_latest.bin");
  log.flush();
  if (out.aborted) {
    checkpoint_save(cfg.out_dir + "/ckpt_aborted.bin", st);
    std::fprintf(stderr, "training aborted: %s\n", out.diagnostic.c_str());
    return 1;
  }
  checkpoint_save(cfg.out_dir + "/ckpt_final.bin", st);
  std::printf("trained %ld steps (%ld applied); total loss %.4f -> %.4f\n", out.steps_attempted,
              out.applied_steps, out.first_total, out.last_total);
  std::printf("final checkpoint: %s/ckpt_final.bin\n", cfg.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::map<std::string, std::string>& flags) {
  TrainerState<float> st = checkpoint_load<float>(require_flag(flags, "ckpt"));
  Vocab v = Vocab::build();
  if (st.model.cfg.vocab_size != v.size())
    throw IntegrityError("checkpoint vocabulary size " +
                         std::to_string(st.model.cfg.vocab_size) +
                         " does not match this build's vocabulary (" + std::to_string(v.size()) +
                         ")");
  std::vector<Sample> samples = read_dataset(require_flag(flags, "data"));
  long max_new = flag_long(flags, "max-new", 24);
  if (max_new <= 0) throw ConfigError("--max-new must be positive");

  auto [report, records] = run_eval(v, st.model, samples, st.model.cfg.numerologic, max_new);

  std::string out_dir = flag_str(flags, "out", ".");
  fs::create_directories(out_dir);
  write_file(out_dir + "/report.json", report_json(report).dump(2) + "\n");
  std::string text = report_text(report);
  write_file(out_dir + "/report.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const std::map<std::string, std::string>& flags) {
  TrainerState<float> st = checkpoint_load<float>(require_flag(flags, "ckpt"));
  Vocab v = Vocab::build();
  long max_new = flag_long(flags, "max-new", 24);
  if (max_new <= 0) throw ConfigError("--max-new must be positive");
  std::string completion = generate(v, st.model, require_flag(flags, "prompt"), max_new);
  std::printf("%s\n", completion.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// inspect-num
// ---------------------------------------------------------------------------

int cmd_inspect_num(const std::map<std::string, std::string>& flags) {
  TrainerState<float> st = checkpoint_load<float>(require_flag(flags, "ckpt"));
  if (st.model.cfg.variant == Variant::none)
    throw ConfigError("this checkpoint has no value encoder (variant none)");
  std::vector<std::string> values;
  for (const std::string& part : split(require_flag(flags, "values"), ','))
    values.push_back(trim(part));
  if (values.size() < 2) throw ConfigError("--values needs at least two comma-separated literals");

  NumInspection<float> ins = inspect_values(st.model, values);
  std::printf("pairwise cosine similarity of f(x):\n");
  for (const auto& p : ins.pairs)
    std::printf("  cos(f(%s), f(%s)) = %+.6f\n", ins.raws[static_cast<std::size_t>(p.i)].c_str(),
                ins.raws[static_cast<std::size_t>(p.j)].c_str(), p.cos);
  std::printf("nearest neighbors (descending similarity):\n");
  for (std::size_t i = 0; i < ins.neighbors.size(); ++i) {
    std::printf("  %s:", ins.raws[i].c_str());
    for (int j : ins.neighbors[i]) std::printf(" %s", ins.raws[static_cast<std::size_t>(j)].c_str());
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fputs(kUsage, stderr);
    return 2;
  }
  std::string cmd = argv[1];
  try {
    if (cmd == "gen-data")
      return cmd_gen_data(parse_flags(argc, argv, 2,
                                      {"out", "count", "val-count", "test-count", "seed", "stages",
                                       "digits", "groups", "formats"}));
    if (cmd == "train")
      return cmd_train(
          parse_flags(argc, argv, 2, {"config", "resume", "variant", "seed", "out", "data"}));
    if (cmd == "eval")
      return cmd_eval(parse_flags(argc, argv, 2, {"ckpt", "data", "out", "max-new"}));
    if (cmd == "generate")
      return cmd_generate(parse_flags(argc, argv, 2, {"ckpt", "prompt", "max-new"}));
    if (cmd == "inspect-num")
      return cmd_inspect_num(parse_flags(argc, argv, 2, {"ckpt", "values"}));
    std::fprintf(stderr, "unknown command '%s'\n%s", cmd.c_str(), kUsage);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const VocabError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
