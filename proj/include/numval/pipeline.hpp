#pragma once

// Run orchestration: the staged training loop (curriculum pools, JSONL loss
// log, periodic checkpoints, non-finite abort), greedy evaluation against a
// dataset, and value-embedding inspection.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <numval/checkpoint.hpp>
#include <numval/config.hpp>
#include <numval/metrics.hpp>
#include <numval/model.hpp>
#include <numval/taskgen.hpp>
#include <numval/text.hpp>
#include <numval/train.hpp>

namespace numval {

inline std::string dataset_path(const std::string& dir, const std::string& split, int ceiling) {
  return dir + "/" + split + "_c" + std::to_string(ceiling) + ".jsonl";
}

// One training pool per curriculum stage, loaded with oracle validation.
inline std::vector<std::vector<Sample>> load_stage_pools(const RunConfig& cfg) {
  std::vector<std::vector<Sample>> pools;
  for (int c : cfg.stage_ceilings)
    pools.push_back(read_dataset(dataset_path(cfg.data_dir, "train", c)));
  return pools;
}

inline std::vector<CurriculumStage> build_stages(const RunConfig& cfg) {
  std::vector<CurriculumStage> stages;
  for (std::size_t i = 0; i < cfg.stage_ceilings.size(); ++i)
    stages.push_back(
        {static_cast<int>(i) + 1, cfg.stage_ceilings[i], i == 0 ? 0.0 : cfg.retain});
  return stages;
}

struct TrainOutcome {
  long steps_attempted = 0;
  long applied_steps = 0;
  bool aborted = false;
  std::string diagnostic;
  double first_total = 0, last_total = 0;
};

// Runs (or resumes) the curriculum from the state's counters. Applied steps
// log a JSONL row every `log_every` steps plus at stage ends; skipped steps
// never reach the log, and five in a row abort the run. The schedule restarts
// at each stage boundary because step_in_stage resets there.
template <class Real>
TrainOutcome run_training(const RunConfig& cfg, const Vocab& v, TrainerState<Real>& st,
                          const std::vector<std::vector<Sample>>& pools, std::ostream& log,
                          const std::string& latest_ckpt_path = "") {
  std::vector<CurriculumStage> stages = build_stages(cfg);
  TrainOutcome out;
  bool have_first = false;
  while (st.stage <= static_cast<int>(stages.size())) {
    const CurriculumStage& cs = stages[static_cast<std::size_t>(st.stage - 1)];
    while (st.step_in_stage < cfg.steps_per_stage) {
      std::vector<EncodedSequence> seqs;
      seqs.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (long k = 0; k < cfg.batch_size; ++k) {
        Sample s = sample_curriculum(cs, pools, st.rng);
        if (cfg.numerologic()) s = numerologic_augment(std::move(s));
        seqs.push_back(encode_example(v, s.prompt, s.answer, cfg.value_variant()));
      }
      Batch b = make_batch(v, seqs, cfg.mask());
      StepReport rep = train_step(b, st.model, st.opt, cfg.optim, cfg.sched, st.step_in_stage,
                                  cfg.steps_per_stage, cfg.lambda);
      ++st.global_step;
      ++st.step_in_stage;
      ++out.steps_attempted;
      if (!rep.applied) {
        ++st.consecutive_skips;
        if (st.consecutive_skips >= 5) {
          out.aborted = true;
          out.diagnostic = "step " + std::to_string(st.global_step) + " (stage " +
                           std::to_string(st.stage) + "): " +
                           std::to_string(st.consecutive_skips) +
                           " consecutive non-finite steps; last grad norm " +
                           std::to_string(rep.grad_norm);
          return out;
        }
      } else {
        st.consecutive_skips = 0;
        ++out.applied_steps;
        if (!have_first) {
          out.first_total = rep.loss.total;
          have_first = true;
        }
        out.last_total = rep.loss.total;
        if (st.global_step % cfg.log_every == 0 || st.step_in_stage == cfg.steps_per_stage) {
          nlohmann::json row{{"step", st.global_step},     {"stage", st.stage},
                             {"lr", rep.lr_base},          {"lr_num", rep.lr_num},
                             {"l_emb", rep.loss.l_emb},    {"l_proj", rep.loss.l_proj},
                             {"l_rec", rep.loss.l_rec},    {"total", rep.loss.total}};
          log << row.dump() << "\n";
        }
      }
      if (!latest_ckpt_path.empty() && st.global_step % cfg.checkpoint_every == 0)
        checkpoint_save(latest_ckpt_path, st);
    }
    ++st.stage;
    st.step_in_stage = 0;
  }
  return out;
}

// Greedy generation over a dataset, scored with the benchmark metrics.
// Deterministic: records keep dataset order.
template <class Real>
std::pair<Report, std::vector<EvalRecord>> run_eval(const Vocab& v, ModelParams<Real>& mp,
                                                    const std::vector<Sample>& samples,
                                                    bool strip_annotations, long max_new) {
  if (samples.empty()) throw ContractError("run_eval: empty dataset");
  std::vector<EvalRecord> records;
  records.reserve(samples.size());
  for (const Sample& s : samples) {
    std::string pred = generate(v, mp, s.prompt, max_new);
    records.push_back(score_sample(s, pred, strip_annotations));
  }
  Report rep = aggregate(records);
  return {std::move(rep), std::move(records)};
}

// Pairwise cosine geometry of f(x) over user-supplied literals, for checking
// whether embedding proximity tracks numerical proximity.
template <class Real>
struct NumInspection {
  std::vector<std::string> raws;
  Tensor<Real> encodings;  // [n x d_model]
  struct Pair {
    int i, j;
    double cos;
  };
  std::vector<Pair> pairs;                 // all i < j, input order
  std::vector<std::vector<int>> neighbors;  // per value, others by descending cos
};

template <class Real>
NumInspection<Real> inspect_values(ModelParams<Real>& mp,
                                   const std::vector<std::string>& raw_values) {
  if (mp.cfg.variant == Variant::none)
    throw ContractError("value inspection needs an encoder variant (mlp or rnn)");
  if (raw_values.size() < 2) throw ContractError("need at least two values to compare");
  NumInspection<Real> out;
  std::vector<NumberValue> vals;
  for (const std::string& raw : raw_values) {
    std::string s = trim(raw);
    std::vector<NumberLiteral> lits = scan_numerals(s);
    if (lits.size() != 1 || lits[0].begin != 0 || lits[0].end != s.size())
      throw ParseError("'" + s + "' is not a single numeric literal");
    vals.push_back(parse_value(lits[0]));
    out.raws.push_back(s);
  }
  out.encodings = mp.encode_values(nullptr, vals);
  long n = out.encodings.rows();
  long d = out.encodings.cols();
  auto cos_rows = [&](long a, long b) {
    double dot = 0, na = 0, nb = 0;
    for (long k = 0; k < d; ++k) {
      double x = out.encodings.at(a * d + k);
      double y = out.encodings.at(b * d + k);
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
  };
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j)
      out.pairs.push_back({static_cast<int>(i), static_cast<int>(j), cos_rows(i, j)});
  for (long i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> by_sim;
    for (long j = 0; j < n; ++j)
      if (j != i) by_sim.emplace_back(-cos_rows(i, j), static_cast<int>(j));
    std::stable_sort(by_sim.begin(), by_sim.end());
    std::vector<int> order;
    for (const auto& [neg, j] : by_sim) order.push_back(j);
    out.neighbors.push_back(std::move(order));
  }
  return out;
}

}  // namespace numval
