#pragma once

// Run configuration: a TOML subset parsed into JSON, validated against the
// full schema (unknown keys are errors), and re-emitted as a "resolved" copy
// next to every run's outputs.
//
// Supported TOML subset: `[section]` headers one level deep, `key = value`
// pairs, `#` comments, and scalar values (quoted strings, integers, floats,
// booleans) plus single-line arrays of integers. That covers every setting
// this project has; nested tables and multi-line syntax are rejected loudly.

#include <cctype>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <numval/common.hpp>
#include <numval/model.hpp>
#include <numval/train.hpp>

namespace numval {

namespace toml {

inline ConfigError err(std::size_t line, const std::string& msg) {
  return ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline nlohmann::json parse_scalar(const std::string& raw, std::size_t line) {
  std::string s = trim(raw);
  if (s.empty()) throw err(line, "missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw err(line, "unterminated string");
    return s.substr(1, s.size() - 2);
  }
  if (s == "true") return true;
  if (s == "false") return false;
  bool has_dot_or_exp = s.find_first_of(".eE") != std::string::npos;
  try {
    std::size_t used = 0;
    if (!has_dot_or_exp) {
      long long v = std::stoll(s, &used);
      if (used == s.size()) return v;
    } else {
      double v = std::stod(s, &used);
      if (used == s.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw err(line, "cannot parse value '" + s + "'");
}

inline nlohmann::json parse_value(const std::string& raw, std::size_t line) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw err(line, "unterminated array");
    nlohmann::json arr = nlohmann::json::array();
    std::string body = s.substr(1, s.size() - 2);
    if (trim(body).empty()) return arr;
    for (const std::string& part : split(body, ','))
      arr.push_back(parse_scalar(part, line));
    return arr;
  }
  return parse_scalar(s, line);
}

// Parses into a two-level JSON object: top-level keys plus one object per
// section. Comments start at an unquoted '#'.
inline nlohmann::json parse(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* scope = &root;
  std::size_t line_no = 0;
  for (const std::string& raw_line : split(text, '\n')) {
    ++line_no;
    std::string line;
    bool in_string = false;
    for (char c : raw_line) {
      if (c == '"') in_string = !in_string;
      if (c == '#' && !in_string) break;
      line += c;
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw err(line_no, "unterminated section header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty() || name.find('.') != std::string::npos)
        throw err(line_no, "bad section name '" + name + "'");
      if (!root.contains(name)) root[name] = nlohmann::json::object();
      scope = &root[name];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw err(line_no, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw err(line_no, "empty key");
    if (scope->contains(key)) throw err(line_no, "duplicate key '" + key + "'");
    (*scope)[key] = parse_value(line.substr(eq + 1), line_no);
  }
  return root;
}

// Typed reads that remember which keys were consumed, so the loader can
// reject anything the schema does not know about.
class Reader {
 public:
  explicit Reader(nlohmann::json root) : root_(std::move(root)) {}

  template <class T>
  void get(const std::string& section, const std::string& key, T& out) {
    const nlohmann::json* v = find(section, key);
    if (!v) return;
    read(*v, section.empty() ? key : section + "." + key, out);
  }

  void check_unknown() const {
    for (auto it = root_.begin(); it != root_.end(); ++it) {
      if (!it.value().is_object()) {
        if (!used_.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
        continue;
      }
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
        std::string full = it.key() + "." + jt.key();
        if (!used_.count(full)) throw ConfigError("unknown config key '" + full + "'");
      }
    }
  }

 private:
  const nlohmann::json* find(const std::string& section, const std::string& key) {
    const nlohmann::json* scope = &root_;
    std::string full = key;
    if (!section.empty()) {
      if (!root_.contains(section)) return nullptr;
      scope = &root_[section];
      full = section + "." + key;
    }
    used_.insert(full);
    if (!scope->is_object() || !scope->contains(key)) return nullptr;
    return &(*scope)[key];
  }

  static void read(const nlohmann::json& v, const std::string& at, std::string& out) {
    if (!v.is_string()) throw ConfigError("'" + at + "' must be a string");
    out = v.get<std::string>();
  }
  static void read(const nlohmann::json& v, const std::string& at, bool& out) {
    if (!v.is_boolean()) throw ConfigError("'" + at + "' must be a boolean");
    out = v.get<bool>();
  }
  static void read(const nlohmann::json& v, const std::string& at, double& out) {
    if (!v.is_number()) throw ConfigError("'" + at + "' must be a number");
    out = v.get<double>();
  }
  template <class Int>
    requires std::integral<Int>
  static void read(const nlohmann::json& v, const std::string& at, Int& out) {
    if (!v.is_number_integer()) throw ConfigError("'" + at + "' must be an integer");
    const auto raw = v.get<long long>();
    if (!std::in_range<Int>(raw)) throw ConfigError("'" + at + "' is out of range");
    out = static_cast<Int>(raw);
  }
  static void read(const nlohmann::json& v, const std::string& at, std::vector<int>& out) {
    if (!v.is_array()) throw ConfigError("'" + at + "' must be an array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError("'" + at + "' must be an array of integers");
      out.push_back(e.get<int>());
    }
  }

  nlohmann::json root_;
  std::set<std::string> used_;
};

}  // namespace toml

// Everything one run needs. `variant` keeps the surface name (including
// "numerologic", which resolves to encoder none plus answer augmentation);
// the model's vocab_size is filled from the vocabulary at run time.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string data_dir = "data";

  std::string variant = "rnn";  // mlp | rnn | none | numerologic
  ModelConfig model;

  double lambda = 0.5;
  long batch_size = 32;
  long steps_per_stage = 1000;
  std::vector<int> stage_ceilings = {3, 5, 7};
  double retain = 0.2;
  std::string loss_mask = "full";  // full | answer_only
  long checkpoint_every = 500;
  long log_every = 10;
  long max_new = 24;

  OptimConfig optim;
  ScheduleConfig sched;

  bool numerologic() const { return variant == "numerologic"; }
  bool value_variant() const { return variant == "mlp" || variant == "rnn"; }

  LossMask mask() const {
    if (loss_mask == "full") return LossMask::full;
    if (loss_mask == "answer_only") return LossMask::answer_only;
    throw ConfigError("loss_mask must be 'full' or 'answer_only', got '" + loss_mask + "'");
  }

  // Applies cross-field rules: the variant string drives the encoder fields,
  // and the schedule's shape peak is the base learning rate.
  void resolve(int vocab_size) {
    if (variant == "mlp")
      model.variant = Variant::mlp;
    else if (variant == "rnn")
      model.variant = Variant::rnn;
    else if (variant == "none" || variant == "numerologic")
      model.variant = Variant::none;
    else
      throw ConfigError("variant must be mlp|rnn|none|numerologic, got '" + variant + "'");
    model.numerologic = numerologic();
    model.vocab_size = vocab_size;
    sched.peak = optim.base_peak;
    model.validate();
    sched.validate();
    (void)mask();
    if (batch_size <= 0 || steps_per_stage <= 0 || checkpoint_every <= 0 || log_every <= 0 ||
        max_new <= 0)
      throw ConfigError("batch_size, steps_per_stage, checkpoint_every, log_every and max_new "
                        "must be positive");
    if (lambda < 0) throw ConfigError("lambda must be nonnegative");
    if (retain < 0 || retain >= 1) throw ConfigError("retain must lie in [0, 1)");
    if (stage_ceilings.empty()) throw ConfigError("stage_ceilings must be nonempty");
    int prev = 0;
    for (int c : stage_ceilings) {
      if (c <= prev || c > 7)
        throw ConfigError("stage_ceilings must be strictly increasing and at most 7");
      prev = c;
    }
  }

  static RunConfig from_toml(const std::string& text) {
    toml::Reader r(toml::parse(text));
    RunConfig c;
    r.get("", "seed", c.seed);
    r.get("", "out_dir", c.out_dir);
    r.get("", "data_dir", c.data_dir);

    r.get("model", "variant", c.variant);
    r.get("model", "layers", c.model.layers);
    r.get("model", "d_model", c.model.d_model);
    r.get("model", "n_heads", c.model.n_heads);
    r.get("model", "d_ff", c.model.d_ff);
    r.get("model", "max_len", c.model.max_len);
    r.get("model", "rnn_digit_dim", c.model.rnn_digit_dim);
    r.get("model", "rnn_hidden", c.model.rnn_hidden);
    r.get("model", "proj_ff", c.model.proj_ff);

    r.get("train", "lambda", c.lambda);
    r.get("train", "batch_size", c.batch_size);
    r.get("train", "steps_per_stage", c.steps_per_stage);
    r.get("train", "stage_ceilings", c.stage_ceilings);
    r.get("train", "retain", c.retain);
    r.get("train", "loss_mask", c.loss_mask);
    r.get("train", "checkpoint_every", c.checkpoint_every);
    r.get("train", "log_every", c.log_every);
    r.get("train", "max_new", c.max_new);

    r.get("optim", "base_peak", c.optim.base_peak);
    r.get("optim", "num_peak", c.optim.num_peak);
    r.get("optim", "beta1", c.optim.beta1);
    r.get("optim", "beta2", c.optim.beta2);
    r.get("optim", "eps", c.optim.eps);
    r.get("optim", "weight_decay", c.optim.weight_decay);
    r.get("optim", "clip", c.optim.clip);

    r.get("schedule", "warmup_frac", c.sched.warmup_frac);
    r.get("schedule", "floor", c.sched.floor_lr);
    r.get("schedule", "restart_each_epoch", c.sched.restart_each_epoch);

    r.check_unknown();
    return c;
  }

  // Every field, current values, valid as input. Floats print with enough
  // digits to round-trip.
  std::string to_toml() const {
    char buf[64];
    auto num = [&buf](double x) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      std::string s = buf;
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      return s;
    };
    std::string ceilings;
    for (std::size_t i = 0; i < stage_ceilings.size(); ++i)
      ceilings += (i ? ", " : "") + std::to_string(stage_ceilings[i]);
    std::string out;
    out += "seed = " + std::to_string(seed) + "\n";
    out += "out_dir = \"" + out_dir + "\"\n";
    out += "data_dir = \"" + data_dir + "\"\n";
    out += "\n[model]\n";
    out += "variant = \"" + variant + "\"\n";
    out += "layers = " + std::to_string(model.layers) + "\n";
    out += "d_model = " + std::to_string(model.d_model) + "\n";
    out += "n_heads = " + std::to_string(model.n_heads) + "\n";
    out += "d_ff = " + std::to_string(model.d_ff) + "\n";
    out += "max_len = " + std::to_string(model.max_len) + "\n";
    out += "rnn_digit_dim = " + std::to_string(model.rnn_digit_dim) + "\n";
    out += "rnn_hidden = " + std::to_string(model.rnn_hidden) + "\n";
    out += "proj_ff = " + std::to_string(model.proj_ff) + "\n";
    out += "\n[train]\n";
    out += "lambda = " + num(lambda) + "\n";
    out += "batch_size = " + std::to_string(batch_size) + "\n";
    out += "steps_per_stage = " + std::to_string(steps_per_stage) + "\n";
    out += "stage_ceilings = [" + ceilings + "]\n";
    out += "retain = " + num(retain) + "\n";
    out += "loss_mask = \"" + loss_mask + "\"\n";
    out += "checkpoint_every = " + std::to_string(checkpoint_every) + "\n";
    out += "log_every = " + std::to_string(log_every) + "\n";
    out += "max_new = " + std::to_string(max_new) + "\n";
    out += "\n[optim]\n";
    out += "base_peak = " + num(optim.base_peak) + "\n";
    out += "num_peak = " + num(optim.num_peak) + "\n";
    out += "beta1 = " + num(optim.beta1) + "\n";
    out += "beta2 = " + num(optim.beta2) + "\n";
    out += "eps = " + num(optim.eps) + "\n";
    out += "weight_decay = " + num(optim.weight_decay) + "\n";
    out += "clip = " + num(optim.clip) + "\n";
    out += "\n[schedule]\n";
    out += "warmup_frac = " + num(sched.warmup_frac) + "\n";
    out += "floor = " + num(sched.floor_lr) + "\n";
    out += std::string("restart_each_epoch = ") + (sched.restart_each_epoch ? "true" : "false") +
           "\n";
    return out;
  }
};

}  // namespace numval
