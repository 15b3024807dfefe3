#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "numval/model.hpp"
#include "numval/taskgen.hpp"

namespace numval {

// ---------------------------------------------------------------------------
// Batch assembly. Sequences are padded to the longest member; loss targets
// are next-token ids with -1 marking ignored slots (pad tail, and prompt
// tokens when the mask is answers-only).
// ---------------------------------------------------------------------------

enum class LossMask { full, answer_only };

struct Batch {
  std::vector<int> ids;      // [batch * seq_len], row-major, <pad> filled
  std::vector<int> targets;  // same layout; -1 = ignored
  long batch = 0;
  long seq_len = 0;
  std::vector<long> num_rows;          // packed row of every <num> token
  std::vector<NumberValue> num_vals;   // aligned with num_rows
};

inline Batch make_batch(const Vocab& v, const std::vector<EncodedSequence>& seqs,
                        LossMask mask = LossMask::full) {
  if (seqs.empty()) throw ContractError("make_batch: empty batch");
  Batch b;
  b.batch = static_cast<long>(seqs.size());
  for (const EncodedSequence& s : seqs)
    b.seq_len = std::max(b.seq_len, static_cast<long>(s.ids.size()));
  b.ids.assign(static_cast<std::size_t>(b.batch * b.seq_len), v.pad);
  b.targets.assign(static_cast<std::size_t>(b.batch * b.seq_len), -1);

  for (long r = 0; r < b.batch; ++r) {
    const EncodedSequence& s = seqs[static_cast<std::size_t>(r)];
    long len = static_cast<long>(s.ids.size());
    for (long t = 0; t < len; ++t) {
      b.ids[static_cast<std::size_t>(r * b.seq_len + t)] = s.ids[static_cast<std::size_t>(t)];
      bool in_scope = mask == LossMask::full ||
                      static_cast<std::size_t>(t + 1) >= s.answer_start;
      if (t + 1 < len && in_scope)
        b.targets[static_cast<std::size_t>(r * b.seq_len + t)] =
            s.ids[static_cast<std::size_t>(t + 1)];
    }
    for (const auto& [p, value] : s.nums) {
      long row = r * b.seq_len + static_cast<long>(p);
      if (b.ids[static_cast<std::size_t>(row)] != v.num)
        throw ContractError("make_batch: recorded <num> position holds another token");
      b.num_rows.push_back(row);
      b.num_vals.push_back(value);
    }
  }
  return b;
}

// Token + position embedding for a packed batch; positions restart at every
// sequence boundary. `replacements` rows substitute the token embedding at
// num_rows (f(x) on pass 1, proj(h) on pass 2); null keeps plain tokens.
template <class Real>
Tensor<Real> embed_batch(Tape<Real>* tape, const Batch& b, ModelParams<Real>& mp,
                         const Tensor<Real>* replacements = nullptr) {
  if (b.seq_len > mp.cfg.max_len)
    throw DimensionError("batch length " + std::to_string(b.seq_len) + " exceeds max_len " +
                         std::to_string(mp.cfg.max_len));
  std::vector<int> pos(b.ids.size());
  for (long r = 0; r < b.batch; ++r)
    for (long t = 0; t < b.seq_len; ++t)
      pos[static_cast<std::size_t>(r * b.seq_len + t)] = static_cast<int>(t);
  std::vector<long> replaced = replacements ? b.num_rows : std::vector<long>{};
  return compose_embeddings(tape, mp.token_table, mp.pos_table, b.ids, pos, replaced,
                            replacements);
}

// ---------------------------------------------------------------------------
// Three-component objective.
//   l_emb : cross-entropy with f(x) injected at <num> positions
//   l_rec : 1 - cos(proj(sg(h_prev)), sg(f(x))), averaged over <num> positions
//   l_proj: cross-entropy with proj(sg(h_prev)) substituted instead of f(x)
// total = l_emb + l_proj + lambda * l_rec. The stop-gradients keep l_rec on
// the projection module alone and stop pass 2 from back-propagating into the
// pass-1 hidden states.
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double l_emb = 0, l_proj = 0, l_rec = 0, total = 0;
};

template <class Real>
Tensor<Real> compute_losses(Tape<Real>* tape, const Batch& b, ModelParams<Real>& mp,
                            double lambda, LossBreakdown& out) {
  if (mp.cfg.variant == Variant::none)
    throw ContractError("compute_losses: the baseline trains on plain cross-entropy");

  if (b.num_rows.empty()) {
    // Without <num> positions the two passes are the same forward; run it
    // once and count it twice.
    Tensor<Real> emb = embed_batch(tape, b, mp);
    auto trace = forward(tape, emb, mp, b.seq_len);
    Tensor<Real> l_emb = softmax_cross_entropy(tape, trace.logits, b.targets, -1);
    out.l_emb = out.l_proj = static_cast<double>(l_emb.item());
    out.l_rec = 0;
    out.total = out.l_emb + out.l_proj;
    return scale(tape, l_emb, Real(2));
  }

  // Pass 1: f(x) injection.
  Tensor<Real> fx = mp.encode_values(tape, b.num_vals);
  Tensor<Real> emb1 = embed_batch(tape, b, mp, &fx);
  auto trace1 = forward(tape, emb1, mp, b.seq_len, b.num_rows);
  Tensor<Real> l_emb = softmax_cross_entropy(tape, trace1.logits, b.targets, -1);

  // Reconstruction: project detached hidden states onto detached targets.
  Tensor<Real> prev_sg = trace1.prev_hidden.detach();
  Tensor<Real> fx_sg = fx.detach();
  Tensor<Real> projected = project_hidden(tape, prev_sg, mp.proj);
  long n = static_cast<long>(b.num_rows.size());
  long d = mp.cfg.d_model;
  Tensor<Real> rec_sum = Tensor<Real>::scalar(Real(0));
  for (long r = 0; r < n; ++r) {
    Tensor<Real> pr = block(tape, projected, r, r + 1, 0, d);
    Tensor<Real> tr = block(tape, fx_sg, r, r + 1, 0, d);
    rec_sum = add(tape, rec_sum, affine(tape, cosine_similarity(tape, pr, tr), Real(-1), Real(1)));
  }
  Tensor<Real> l_rec = scale(tape, rec_sum, Real(1) / static_cast<Real>(n));

  // Pass 2: the projection's output is what the model would see at inference.
  Tensor<Real> emb2 = embed_batch(tape, b, mp, &projected);
  auto trace2 = forward(tape, emb2, mp, b.seq_len);
  Tensor<Real> l_proj = softmax_cross_entropy(tape, trace2.logits, b.targets, -1);

  Tensor<Real> total =
      add(tape, add(tape, l_emb, l_proj), scale(tape, l_rec, static_cast<Real>(lambda)));
  out.l_emb = static_cast<double>(l_emb.item());
  out.l_proj = static_cast<double>(l_proj.item());
  out.l_rec = static_cast<double>(l_rec.item());
  out.total = static_cast<double>(total.item());
  return total;
}

// Plain next-token cross-entropy; the objective for variant none.
template <class Real>
Tensor<Real> compute_lm_loss(Tape<Real>* tape, const Batch& b, ModelParams<Real>& mp,
                             LossBreakdown& out) {
  Tensor<Real> emb = embed_batch(tape, b, mp);
  auto trace = forward(tape, emb, mp, b.seq_len);
  Tensor<Real> l = softmax_cross_entropy(tape, trace.logits, b.targets, -1);
  out.l_emb = out.total = static_cast<double>(l.item());
  out.l_proj = out.l_rec = 0;
  return l;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule: per epoch, linear warmup over the first 30% of
// steps, cosine decay to the floor over the next 60%, flat floor for the
// rest. Stage boundaries reset the step counter (each curriculum stage is
// one epoch).
// ---------------------------------------------------------------------------

struct ScheduleConfig {
  double warmup_frac = 0.30;
  double peak = 5e-5;
  double floor_lr = 0;  // 0 means peak / 10
  bool restart_each_epoch = true;

  void validate() const {
    if (!(warmup_frac > 0 && warmup_frac < 1))
      throw ConfigError("warmup fraction must lie in (0, 1)");
    if (peak <= 0) throw ConfigError("peak learning rate must be positive");
  }
};

inline double lr_at(long step, long epoch_steps, const ScheduleConfig& sched) {
  sched.validate();
  if (epoch_steps <= 0) throw ContractError("lr_at: epoch_steps must be positive");
  double floor_lr = sched.floor_lr > 0 ? sched.floor_lr : sched.peak / 10.0;
  double s = static_cast<double>(sched.restart_each_epoch ? step % epoch_steps : step);
  double warm_end = sched.warmup_frac * static_cast<double>(epoch_steps);
  double decay_end = 0.9 * static_cast<double>(epoch_steps);
  if (s < warm_end) return sched.peak * (s / warm_end);
  if (s >= decay_end) return floor_lr;
  double progress = (s - warm_end) / (decay_end - warm_end);
  return floor_lr + (sched.peak - floor_lr) * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

// ---------------------------------------------------------------------------
// Curriculum: stage 1 trains on operands of up to 3 digits; later stages
// raise the ceiling (5, then 7) while replaying a fraction r of draws from
// the previous stage's pool.
// ---------------------------------------------------------------------------

struct CurriculumStage {
  int id = 1;
  int digit_ceiling = 3;
  double retain = 0.0;  // fraction of draws taken from the previous stage
};

inline std::vector<CurriculumStage> curriculum_plan(double retain = 0.2) {
  return {{1, 3, 0.0}, {2, 5, retain}, {3, 7, retain}};
}

// Pools indexed by stage (pools[0] = stage 1). Draws are uniform within the
// chosen pool.
inline const Sample& sample_curriculum(const CurriculumStage& stage,
                                       const std::vector<std::vector<Sample>>& pools, Rng& rng) {
  if (stage.id < 1 || static_cast<std::size_t>(stage.id) > pools.size())
    throw ContractError("sample_curriculum: stage " + std::to_string(stage.id) +
                        " has no pool");
  int pool_idx = stage.id - 1;
  if (stage.id > 1 && stage.retain > 0 && rng.coin(stage.retain)) pool_idx = stage.id - 2;
  const std::vector<Sample>& pool = pools[static_cast<std::size_t>(pool_idx)];
  if (pool.empty())
    throw IoError("sample_curriculum: empty pool for stage " + std::to_string(pool_idx + 1));
  return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
}

// ---------------------------------------------------------------------------
// AdamW with two parameter groups: everything under "num." steps at its own
// peak rate (1e-3 against the base 5e-5), both following the same schedule
// shape. Decoupled weight decay; global gradient-norm clip.
// ---------------------------------------------------------------------------

struct OptimConfig {
  double base_peak = 5e-5;
  double num_peak = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip = 1.0;
};

template <class Real>
struct OptimState {
  struct Slot {
    std::string name;
    std::vector<Real> m, v;
    bool num_group = false;
  };
  std::vector<Slot> slots;
  long t = 0;  // applied updates, drives bias correction

  static OptimState init(ModelParams<Real>& mp) {
    OptimState st;
    mp.visit([&](const std::string& name, Tensor<Real>& p) {
      Slot s;
      s.name = name;
      s.m.assign(static_cast<std::size_t>(p.size()), Real(0));
      s.v.assign(static_cast<std::size_t>(p.size()), Real(0));
      s.num_group = name.rfind("num.", 0) == 0;
      st.slots.push_back(std::move(s));
    });
    return st;
  }
};

// ---------------------------------------------------------------------------
// One optimization step. Non-finite totals skip the update (and count toward
// an abort threshold handled by the caller via `applied`).
// ---------------------------------------------------------------------------

struct StepReport {
  LossBreakdown loss;
  bool applied = false;
  double lr_base = 0, lr_num = 0;
  double grad_norm = 0;
};

template <class Real>
StepReport train_step(const Batch& batch, ModelParams<Real>& mp, OptimState<Real>& opt,
                      const OptimConfig& oc, const ScheduleConfig& sched, long sched_step,
                      long epoch_steps, double lambda) {
  StepReport rep;
  std::vector<Tensor<Real>*> params;
  mp.visit([&](const std::string&, Tensor<Real>& p) { params.push_back(&p); });
  if (params.size() != opt.slots.size())
    throw ContractError("train_step: optimizer state does not match the model");

  Tape<Real> tape;
  for (auto* p : params) tape.watch(*p);
  Tensor<Real> total = mp.cfg.variant == Variant::none
                           ? compute_lm_loss(&tape, batch, mp, rep.loss)
                           : compute_losses(&tape, batch, mp, lambda, rep.loss);
  if (!std::isfinite(rep.loss.total)) return rep;  // skipped, applied stays false

  tape.backward(total);

  // Collect gradients (missing = parameter untouched this step = zeros).
  std::vector<const std::vector<Real>*> grads(params.size(), nullptr);
  double norm2 = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads[i] = tape.grad(*params[i]);
    if (!grads[i]) continue;
    for (Real g : *grads[i]) norm2 += static_cast<double>(g) * static_cast<double>(g);
  }
  rep.grad_norm = std::sqrt(norm2);
  if (!std::isfinite(rep.grad_norm)) return rep;
  double clip_scale = rep.grad_norm > oc.clip ? oc.clip / rep.grad_norm : 1.0;

  double shape = lr_at(sched_step, epoch_steps, sched) / sched.peak;
  rep.lr_base = oc.base_peak * shape;
  rep.lr_num = oc.num_peak * shape;

  ++opt.t;
  double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(opt.t));
  double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& slot = opt.slots[i];
    Tensor<Real>& p = *params[i];
    double lr = slot.num_group ? rep.lr_num : rep.lr_base;
    for (long j = 0; j < p.size(); ++j) {
      double g = grads[i] ? static_cast<double>((*grads[i])[static_cast<std::size_t>(j)]) *
                                clip_scale
                          : 0.0;
      double m = oc.beta1 * static_cast<double>(slot.m[static_cast<std::size_t>(j)]) +
                 (1.0 - oc.beta1) * g;
      double v = oc.beta2 * static_cast<double>(slot.v[static_cast<std::size_t>(j)]) +
                 (1.0 - oc.beta2) * g * g;
      slot.m[static_cast<std::size_t>(j)] = static_cast<Real>(m);
      slot.v[static_cast<std::size_t>(j)] = static_cast<Real>(v);
      double update = (m / bc1) / (std::sqrt(v / bc2) + oc.eps) + oc.weight_decay *
                                                                      static_cast<double>(p.at(j));
      p.at(j) = static_cast<Real>(static_cast<double>(p.at(j)) - lr * update);
    }
  }
  rep.applied = true;
  return rep;
}

}  // namespace numval
