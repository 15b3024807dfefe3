#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "numval/encoder.hpp"
#include "numval/ops.hpp"
#include "numval/tensor.hpp"
#include "numval/text.hpp"

namespace numval {

// ---------------------------------------------------------------------------
// Decoder-only transformer (pre-norm GPT-2 shape) with a value-injection hook
// at <num> positions. Desk-scale defaults; the mechanism does not depend on
// the dimensions.
// ---------------------------------------------------------------------------

enum class Variant { none, mlp, rnn };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::none: return "none";
    case Variant::mlp: return "mlp";
    case Variant::rnn: return "rnn";
  }
  throw ContractError("bad variant");
}

inline Variant variant_from(const std::string& s) {
  if (s == "none") return Variant::none;
  if (s == "mlp") return Variant::mlp;
  if (s == "rnn") return Variant::rnn;
  throw ConfigError("unknown encoder variant '" + s + "'");
}

struct ModelConfig {
  int layers = 4;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  int max_len = 160;
  int vocab_size = 0;
  Variant variant = Variant::none;
  bool numerologic = false;
  int rnn_digit_dim = 16;
  int rnn_hidden = 64;
  int proj_ff = 0;  // 0 means 4 * d_model

  void validate() const {
    if (layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_len < 1)
      throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0)
      throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                        std::to_string(n_heads));
    if (vocab_size < 5) throw ConfigError("vocabulary too small; build it from Vocab");
    if (numerologic && variant != Variant::none)
      throw ConfigError("the digit-count baseline uses encoder variant none");
  }
};

template <class Real>
struct LayerParams {
  Tensor<Real> ln1_g, ln1_b;  // [d]
  Tensor<Real> qkv_w;         // [d x 3d]
  Tensor<Real> qkv_b;         // [3d]
  Tensor<Real> out_w;         // [d x d]
  Tensor<Real> out_b;         // [d]
  Tensor<Real> ln2_g, ln2_b;  // [d]
  Tensor<Real> ff_in_w;       // [d x d_ff]
  Tensor<Real> ff_in_b;       // [d_ff]
  Tensor<Real> ff_out_w;      // [d_ff x d]
  Tensor<Real> ff_out_b;      // [d]

  static LayerParams init(int d, int d_ff, Rng& rng) {
    LayerParams l;
    l.ln1_g = Tensor<Real>::full({d}, Real(1));
    l.ln1_b = Tensor<Real>::zeros({d});
    l.qkv_w = detail::init_normal<Real>({d, 3 * d}, rng);
    l.qkv_b = Tensor<Real>::zeros({3 * d});
    l.out_w = detail::init_normal<Real>({d, d}, rng);
    l.out_b = Tensor<Real>::zeros({d});
    l.ln2_g = Tensor<Real>::full({d}, Real(1));
    l.ln2_b = Tensor<Real>::zeros({d});
    l.ff_in_w = detail::init_normal<Real>({d, d_ff}, rng);
    l.ff_in_b = Tensor<Real>::zeros({d_ff});
    l.ff_out_w = detail::init_normal<Real>({d_ff, d}, rng);
    l.ff_out_b = Tensor<Real>::zeros({d});
    return l;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".ln1.g", ln1_g);
    f(prefix + ".ln1.b", ln1_b);
    f(prefix + ".qkv.w", qkv_w);
    f(prefix + ".qkv.b", qkv_b);
    f(prefix + ".out.w", out_w);
    f(prefix + ".out.b", out_b);
    f(prefix + ".ln2.g", ln2_g);
    f(prefix + ".ln2.b", ln2_b);
    f(prefix + ".ff_in.w", ff_in_w);
    f(prefix + ".ff_in.b", ff_in_b);
    f(prefix + ".ff_out.w", ff_out_w);
    f(prefix + ".ff_out.b", ff_out_b);
  }
};

template <class Real>
struct ModelParams {
  ModelConfig cfg;
  Tensor<Real> token_table;  // [V x d]; the output head is its transpose (tied)
  Tensor<Real> pos_table;    // [max_len x d]
  std::vector<LayerParams<Real>> layers;
  Tensor<Real> lnf_g, lnf_b;  // final layer norm
  // Value modules; allocated only when variant != none.
  MlpEncoderParams<Real> mlp_enc;
  RnnEncoderParams<Real> rnn_enc;
  ProjectionParams<Real> proj;

  static ModelParams init(ModelConfig cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    p.token_table = detail::init_normal<Real>({cfg.vocab_size, cfg.d_model}, rng);
    p.pos_table = detail::init_normal<Real>({cfg.max_len, cfg.d_model}, rng);
    for (int l = 0; l < cfg.layers; ++l)
      p.layers.push_back(LayerParams<Real>::init(cfg.d_model, cfg.d_ff, rng));
    p.lnf_g = Tensor<Real>::full({cfg.d_model}, Real(1));
    p.lnf_b = Tensor<Real>::zeros({cfg.d_model});
    if (cfg.variant == Variant::mlp)
      p.mlp_enc = MlpEncoderParams<Real>::init(cfg.d_model, rng);
    if (cfg.variant == Variant::rnn)
      p.rnn_enc = RnnEncoderParams<Real>::init(cfg.d_model, rng, cfg.rnn_digit_dim,
                                               cfg.rnn_hidden);
    if (cfg.variant != Variant::none)
      p.proj = ProjectionParams<Real>::init(cfg.d_model, rng, cfg.proj_ff);
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("token_table", token_table);
    f("pos_table", pos_table);
    for (std::size_t l = 0; l < layers.size(); ++l)
      layers[l].visit("layer." + std::to_string(l), f);
    f("lnf.g", lnf_g);
    f("lnf.b", lnf_b);
    if (cfg.variant == Variant::mlp) mlp_enc.visit(f);
    if (cfg.variant == Variant::rnn) rnn_enc.visit(f);
    if (cfg.variant != Variant::none) proj.visit(f);
  }

  long param_count() {
    long n = 0;
    visit([&](const std::string&, Tensor<Real>& t) { n += t.size(); });
    return n;
  }

  // f(x) for a batch of parsed values, per the configured encoder.
  Tensor<Real> encode_values(Tape<Real>* tape, const std::vector<NumberValue>& vals) {
    switch (cfg.variant) {
      case Variant::mlp: return encode_values_mlp(tape, vals, mlp_enc);
      case Variant::rnn: return encode_values_rnn(tape, vals, rnn_enc);
      case Variant::none: break;
    }
    throw ContractError("baseline variant has no value encoder");
  }
};

// ---------------------------------------------------------------------------
// Input embedding with the <num> hook. Token + position everywhere; at <num>
// positions the token embedding is replaced by f(x) (value mode) or a caller-
// supplied vector (override mode), the positional embedding still added.
// ---------------------------------------------------------------------------

enum class NumMode { baseline, value, override_vectors };

template <class Real>
Tensor<Real> embed_inputs(Tape<Real>* tape, const EncodedSequence& seq, ModelParams<Real>& mp,
                          NumMode mode, const Tensor<Real>* overrides = nullptr,
                          long pos_offset = 0) {
  long t = static_cast<long>(seq.ids.size());
  if (pos_offset + t > mp.cfg.max_len)
    throw DimensionError("sequence of length " + std::to_string(pos_offset + t) +
                         " exceeds max_len " + std::to_string(mp.cfg.max_len));
  std::vector<int> pos_ids(static_cast<std::size_t>(t));
  for (long i = 0; i < t; ++i) pos_ids[static_cast<std::size_t>(i)] = static_cast<int>(pos_offset + i);

  std::vector<long> replaced;
  Tensor<Real> repl;
  const Tensor<Real>* repl_ptr = nullptr;
  if (mode != NumMode::baseline && !seq.nums.empty()) {
    for (const auto& [p, v] : seq.nums) replaced.push_back(static_cast<long>(p));
    if (mode == NumMode::value) {
      std::vector<NumberValue> vals;
      vals.reserve(seq.nums.size());
      for (const auto& [p, v] : seq.nums) vals.push_back(v);
      repl = mp.encode_values(tape, vals);
      repl_ptr = &repl;
    } else {
      if (!overrides)
        throw ContractError("override mode requires one vector per <num> position");
      repl_ptr = overrides;
    }
  }
  return compose_embeddings(tape, mp.token_table, mp.pos_table, seq.ids, pos_ids, replaced,
                            repl_ptr);
}

// ---------------------------------------------------------------------------
// Forward pass over a packed batch of equal-length sequences ([B*T x d]).
// Records the final hidden state preceding every <num> position so the
// training losses can project it.
// ---------------------------------------------------------------------------

template <class Real>
struct ForwardTrace {
  Tensor<Real> hidden;       // [B*T x d], post final layer norm
  Tensor<Real> logits;       // [B*T x V]
  Tensor<Real> prev_hidden;  // [N x d], rows aligned with num_rows
  std::vector<long> num_rows;  // packed row index of each <num> token
};

template <class Real>
ForwardTrace<Real> forward(Tape<Real>* tape, const Tensor<Real>& emb, ModelParams<Real>& mp,
                           long seq_len, const std::vector<long>& num_rows = {}) {
  const ModelConfig& cfg = mp.cfg;
  long rows = emb.rows();
  long d = cfg.d_model;
  if (emb.cols() != d) throw DimensionError("forward: embedding width " + shape_str(emb.shape));
  if (seq_len < 1 || rows % seq_len != 0)
    throw DimensionError("forward: " + std::to_string(rows) + " rows not a batch of length " +
                         std::to_string(seq_len));
  if (seq_len > cfg.max_len)
    throw DimensionError("sequence of length " + std::to_string(seq_len) + " exceeds max_len " +
                         std::to_string(cfg.max_len));
  long batch = rows / seq_len;
  long dh = d / cfg.n_heads;
  Real inv_sqrt = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));

  Tensor<Real> x = emb;
  for (LayerParams<Real>& L : mp.layers) {
    Tensor<Real> a = layer_norm(tape, x, L.ln1_g, L.ln1_b);
    Tensor<Real> qkv = add(tape, matmul(tape, a, L.qkv_w), L.qkv_b);
    std::vector<Tensor<Real>> ctx_rows;
    ctx_rows.reserve(static_cast<std::size_t>(batch));
    for (long b = 0; b < batch; ++b) {
      long r0 = b * seq_len, r1 = (b + 1) * seq_len;
      std::vector<Tensor<Real>> heads;
      heads.reserve(static_cast<std::size_t>(cfg.n_heads));
      for (int h = 0; h < cfg.n_heads; ++h) {
        Tensor<Real> q = block(tape, qkv, r0, r1, h * dh, (h + 1) * dh);
        Tensor<Real> k = block(tape, qkv, r0, r1, d + h * dh, d + (h + 1) * dh);
        Tensor<Real> v = block(tape, qkv, r0, r1, 2 * d + h * dh, 2 * d + (h + 1) * dh);
        Tensor<Real> att = causal_softmax(tape, scale(tape, matmul(tape, q, k, false, true),
                                                      inv_sqrt));
        heads.push_back(matmul(tape, att, v));
      }
      ctx_rows.push_back(concat_cols(tape, heads));
    }
    Tensor<Real> ctx = batch == 1 ? ctx_rows[0] : concat_rows(tape, ctx_rows);
    x = add(tape, x, add(tape, matmul(tape, ctx, L.out_w), L.out_b));
    Tensor<Real> m = layer_norm(tape, x, L.ln2_g, L.ln2_b);
    Tensor<Real> ff = add(tape, matmul(tape, gelu(tape, add(tape, matmul(tape, m, L.ff_in_w),
                                                            L.ff_in_b)),
                                       L.ff_out_w),
                          L.ff_out_b);
    x = add(tape, x, ff);
  }

  ForwardTrace<Real> trace;
  trace.hidden = layer_norm(tape, x, mp.lnf_g, mp.lnf_b);
  trace.logits = matmul(tape, trace.hidden, mp.token_table, false, true);
  trace.num_rows = num_rows;
  if (!num_rows.empty()) {
    std::vector<int> prev;
    prev.reserve(num_rows.size());
    for (long p : num_rows) {
      if (p % seq_len == 0)
        throw ContractError("<num> at sequence start has no preceding hidden state");
      if (p < 0 || p >= rows) throw ContractError("<num> row outside the batch");
      prev.push_back(static_cast<int>(p - 1));
    }
    trace.prev_hidden = gather_rows(tape, trace.hidden, prev);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Greedy generation with an incremental KV cache. Prompt <num> tokens embed
// f(x) from the scanned literal; when the model itself emits <num>, the
// embedding consumed at that position is proj of the hidden state that
// produced the <num> logit. The baseline never sees <num>: its logit is
// masked. <pad> and <bos> are always masked out of the argmax.
// ---------------------------------------------------------------------------

template <class Real>
struct GenerationResult {
  std::vector<int> ids;      // generated tokens, <eos> excluded
  bool hit_eos = false;
  std::vector<Tensor<Real>> num_inputs;  // embedding used for each emitted <num>
};

namespace detail {

// Per-layer KV rows for one stream; buffers sized [max_len x d].
template <class Real>
struct KvCache {
  std::vector<Tensor<Real>> k, v;
  long t = 0;
  KvCache(int layers, long max_len, long d) {
    for (int l = 0; l < layers; ++l) {
      k.push_back(Tensor<Real>::zeros({max_len, d}));
      v.push_back(Tensor<Real>::zeros({max_len, d}));
    }
  }
};

// One decoder step on a single embedded row; returns the post-final-norm
// hidden row. Linear algebra matches forward() exactly (same ops, untracked).
template <class Real>
Tensor<Real> kv_step(ModelParams<Real>& mp, KvCache<Real>& cache, const Tensor<Real>& emb_row) {
  const ModelConfig& cfg = mp.cfg;
  long d = cfg.d_model;
  long dh = d / cfg.n_heads;
  Real inv_sqrt = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
  long t = cache.t;
  Tensor<Real> x = emb_row;  // [1 x d]
  for (std::size_t li = 0; li < mp.layers.size(); ++li) {
    LayerParams<Real>& L = mp.layers[li];
    Tensor<Real> a = layer_norm<Real>(nullptr, x, L.ln1_g, L.ln1_b);
    Tensor<Real> qkv = add<Real>(nullptr, matmul<Real>(nullptr, a, L.qkv_w), L.qkv_b);
    std::copy_n(qkv.ptr() + d, d, cache.k[li].ptr() + t * d);
    std::copy_n(qkv.ptr() + 2 * d, d, cache.v[li].ptr() + t * d);
    Tensor<Real> ctx = Tensor<Real>::zeros({1, d});
    const Real* kp = cache.k[li].ptr();
    const Real* vp = cache.v[li].ptr();
    std::vector<Real> w(static_cast<std::size_t>(t + 1));
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Real* q = qkv.ptr() + h * dh;
      Real m = std::numeric_limits<Real>::lowest();
      for (long j = 0; j <= t; ++j) {
        Real s = 0;
        const Real* kr = kp + j * d + h * dh;
        for (long c = 0; c < dh; ++c) s += q[c] * kr[c];
        w[static_cast<std::size_t>(j)] = s * inv_sqrt;
        m = std::max(m, w[static_cast<std::size_t>(j)]);
      }
      Real z = 0;
      for (long j = 0; j <= t; ++j) {
        Real e = std::exp(w[static_cast<std::size_t>(j)] - m);
        w[static_cast<std::size_t>(j)] = e;
        z += e;
      }
      Real* out = ctx.ptr() + h * dh;
      for (long j = 0; j <= t; ++j) {
        Real coef = w[static_cast<std::size_t>(j)] / z;
        const Real* vr = vp + j * d + h * dh;
        for (long c = 0; c < dh; ++c) out[c] += coef * vr[c];
      }
    }
    x = add<Real>(nullptr, x, add<Real>(nullptr, matmul<Real>(nullptr, ctx, L.out_w), L.out_b));
    Tensor<Real> mft = layer_norm<Real>(nullptr, x, L.ln2_g, L.ln2_b);
    Tensor<Real> ff = add<Real>(
        nullptr,
        matmul<Real>(nullptr,
                     gelu<Real>(nullptr, add<Real>(nullptr, matmul<Real>(nullptr, mft, L.ff_in_w),
                                                   L.ff_in_b)),
                     L.ff_out_w),
        L.ff_out_b);
    x = add<Real>(nullptr, x, ff);
  }
  ++cache.t;
  return layer_norm<Real>(nullptr, x, mp.lnf_g, mp.lnf_b);
}

// Token + position row, or replacement + position when `repl` is given.
template <class Real>
Tensor<Real> embed_row(ModelParams<Real>& mp, int token_id, long pos, const Tensor<Real>* repl) {
  long d = mp.cfg.d_model;
  Tensor<Real> e = Tensor<Real>::zeros({1, d});
  const Real* src = repl ? repl->ptr() : mp.token_table.ptr() + token_id * d;
  const Real* pp = mp.pos_table.ptr() + pos * d;
  for (long j = 0; j < d; ++j) e.ptr()[j] = src[j] + pp[j];
  return e;
}

}  // namespace detail

// `num_overrides`, when given, supplies the substitute embedding for emitted
// <num> tokens in order (in place of proj(h)); used to verify substitution
// identities.
template <class Real>
GenerationResult<Real> generate_tokens(const Vocab& vocab, ModelParams<Real>& mp,
                                       const std::string& prompt, int max_new,
                                       const std::vector<Tensor<Real>>* num_overrides = nullptr) {
  const ModelConfig& cfg = mp.cfg;
  bool value_variant = cfg.variant != Variant::none;
  EncodedSequence seq = encode_prompt(vocab, prompt, value_variant);
  long t0 = static_cast<long>(seq.ids.size());
  if (t0 >= cfg.max_len) throw DimensionError("prompt exceeds max_len");

  detail::KvCache<Real> cache(cfg.layers, cfg.max_len, cfg.d_model);
  Tensor<Real> prompt_fx;
  std::size_t next_num = 0;
  if (value_variant && !seq.nums.empty()) {
    std::vector<NumberValue> vals;
    for (const auto& [p, v] : seq.nums) vals.push_back(v);
    prompt_fx = mp.encode_values(nullptr, vals);
  }

  GenerationResult<Real> res;
  Tensor<Real> hidden;
  for (long i = 0; i < t0; ++i) {
    const Tensor<Real>* repl = nullptr;
    Tensor<Real> fx_row;
    if (next_num < seq.nums.size() && seq.nums[next_num].first == static_cast<std::size_t>(i)) {
      fx_row = block<Real>(nullptr, prompt_fx, static_cast<long>(next_num),
                           static_cast<long>(next_num) + 1, 0, cfg.d_model);
      repl = &fx_row;
      ++next_num;
    }
    hidden = detail::kv_step(mp, cache, detail::embed_row(mp, seq.ids[static_cast<std::size_t>(i)],
                                                          i, repl));
  }

  std::size_t override_used = 0;
  Tensor<Real> pending_num_input;  // embedding for a just-emitted <num>
  for (int step = 0; step < max_new; ++step) {
    long pos = t0 + step;
    if (pos >= cfg.max_len) break;
    // Argmax over the tied head for the latest hidden row.
    Tensor<Real> logits = matmul<Real>(nullptr, hidden, mp.token_table, false, true);
    int best = -1;
    Real best_v = std::numeric_limits<Real>::lowest();
    for (int id = 0; id < cfg.vocab_size; ++id) {
      if (id == vocab.pad || id == vocab.bos) continue;
      if (id == vocab.num && !value_variant) continue;
      Real v = logits.ptr()[id];
      if (v > best_v) {
        best_v = v;
        best = id;
      }
    }
    if (best == vocab.eos) {
      res.hit_eos = true;
      break;
    }
    res.ids.push_back(best);
    const Tensor<Real>* repl = nullptr;
    if (best == vocab.num) {
      if (num_overrides && override_used < num_overrides->size())
        pending_num_input = (*num_overrides)[override_used++];
      else
        pending_num_input = project_hidden<Real>(nullptr, hidden, mp.proj);
      res.num_inputs.push_back(pending_num_input);
      repl = &pending_num_input;
    }
    hidden = detail::kv_step(mp, cache, detail::embed_row(mp, best, pos, repl));
  }
  return res;
}

template <class Real>
std::string generate(const Vocab& vocab, ModelParams<Real>& mp, const std::string& prompt,
                     int max_new) {
  return decode(vocab, generate_tokens(vocab, mp, prompt, max_new).ids);
}

}  // namespace numval
