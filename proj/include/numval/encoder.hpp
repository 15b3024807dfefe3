#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "numval/ops.hpp"
#include "numval/tensor.hpp"
#include "numval/text.hpp"

namespace numval {

// Digit caps of the fixed-width value encoder: 18 integer slots, 22
// fractional slots, plus the 3 auxiliary features.
inline constexpr int kMaxIntDigits = 18;
inline constexpr int kMaxFracDigits = 22;

// Sign, integer-digit count, fractional-digit count, the counts normalized by
// the caps so every feature is in [-1, 1] for in-range values.
template <class Real>
std::array<Real, 3> aux_features(const NumberValue& v) {
  return {static_cast<Real>(v.sign),
          static_cast<Real>(v.int_digits.size()) / Real(kMaxIntDigits),
          static_cast<Real>(v.frac_digits.size()) / Real(kMaxFracDigits)};
}

namespace detail {

template <class Real>
Tensor<Real> init_normal(Shape s, Rng& rng, double dev = 0.02) {
  Tensor<Real> t = Tensor<Real>::zeros(std::move(s));
  for (long i = 0; i < t.size(); ++i) t.at(i) = static_cast<Real>(rng.normal() * dev);
  return t;
}

template <class Real>
Tensor<Real> init_uniform(Shape s, Rng& rng, double bound) {
  Tensor<Real> t = Tensor<Real>::zeros(std::move(s));
  for (long i = 0; i < t.size(); ++i)
    t.at(i) = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
  return t;
}

// Digit slots hold d/9 in [0, 1]; unused slots hold -1 so padding is
// distinguishable from digit zero. Aux features fill the last three columns.
template <class Real>
void fill_value_row(const NumberValue& v, Real* row) {
  if (static_cast<int>(v.int_digits.size()) > kMaxIntDigits)
    throw CapacityError("value has " + std::to_string(v.int_digits.size()) +
                        " integer digits; the fixed-width encoder caps at " +
                        std::to_string(kMaxIntDigits));
  if (static_cast<int>(v.frac_digits.size()) > kMaxFracDigits)
    throw CapacityError("value has " + std::to_string(v.frac_digits.size()) +
                        " fractional digits; the fixed-width encoder caps at " +
                        std::to_string(kMaxFracDigits));
  for (int i = 0; i < kMaxIntDigits; ++i)
    row[i] = i < static_cast<int>(v.int_digits.size()) ? Real(v.int_digits[i]) / Real(9)
                                                       : Real(-1);
  for (int i = 0; i < kMaxFracDigits; ++i)
    row[kMaxIntDigits + i] =
        i < static_cast<int>(v.frac_digits.size()) ? Real(v.frac_digits[i]) / Real(9) : Real(-1);
  std::array<Real, 3> aux = aux_features<Real>(v);
  for (int i = 0; i < 3; ++i) row[kMaxIntDigits + kMaxFracDigits + i] = aux[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed-width feed-forward value encoder: digit slots + aux through an affine
// map and tanh.
// ---------------------------------------------------------------------------

template <class Real>
struct MlpEncoderParams {
  static constexpr int kInputWidth = kMaxIntDigits + kMaxFracDigits + 3;
  Tensor<Real> weight;  // [kInputWidth x d_model]
  Tensor<Real> bias;    // [d_model]

  static MlpEncoderParams init(int d_model, Rng& rng) {
    MlpEncoderParams p;
    p.weight = detail::init_normal<Real>({kInputWidth, d_model}, rng);
    p.bias = Tensor<Real>::zeros({d_model});
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("num.mlp.weight", weight);
    f("num.mlp.bias", bias);
  }
};

template <class Real>
Tensor<Real> encode_values_mlp(Tape<Real>* tape, const std::vector<NumberValue>& vals,
                               MlpEncoderParams<Real>& p) {
  if (vals.empty()) throw ContractError("encode_values_mlp: no values");
  constexpr int w = MlpEncoderParams<Real>::kInputWidth;
  Tensor<Real> x = Tensor<Real>::zeros({static_cast<long>(vals.size()), w});
  for (std::size_t i = 0; i < vals.size(); ++i) detail::fill_value_row(vals[i], x.ptr() + i * w);
  return tanh_op(tape, add(tape, matmul(tape, x, p.weight), p.bias));
}

template <class Real>
Tensor<Real> encode_value_mlp(Tape<Real>* tape, const NumberValue& v, MlpEncoderParams<Real>& p) {
  return encode_values_mlp(tape, std::vector<NumberValue>{v}, p);
}

// ---------------------------------------------------------------------------
// Recurrent value encoder: independent GRUs over the integer part (most-
// significant digit first) and the fractional part (left to right), final
// hidden states concatenated with the aux features and mapped to d_model.
// No digit cap: any literal length encodes.
// ---------------------------------------------------------------------------

template <class Real>
struct GruParams {
  // Gate order (reset, update, candidate), input-stacked layout: row block g*H
  // of w_ih maps the input, of w_hh the previous hidden state.
  Tensor<Real> w_ih;  // [3H x input]
  Tensor<Real> w_hh;  // [3H x H]
  Tensor<Real> b_ih;  // [3H]
  Tensor<Real> b_hh;  // [3H]

  static GruParams init(int input, int hidden, Rng& rng) {
    GruParams g;
    double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    g.w_ih = detail::init_uniform<Real>({3 * hidden, input}, rng, bound);
    g.w_hh = detail::init_uniform<Real>({3 * hidden, hidden}, rng, bound);
    g.b_ih = Tensor<Real>::zeros({3 * hidden});
    g.b_hh = Tensor<Real>::zeros({3 * hidden});
    return g;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_ih", w_ih);
    f(prefix + ".w_hh", w_hh);
    f(prefix + ".b_ih", b_ih);
    f(prefix + ".b_hh", b_hh);
  }
};

namespace detail {

template <class Real>
Tensor<Real> gru_step(Tape<Real>* tape, GruParams<Real>& g, const Tensor<Real>& x,
                      const Tensor<Real>& h, long H) {
  Tensor<Real> xh = add(tape, matmul(tape, x, g.w_ih, false, true), g.b_ih);
  Tensor<Real> hh = add(tape, matmul(tape, h, g.w_hh, false, true), g.b_hh);
  Tensor<Real> r =
      sigmoid(tape, add(tape, block(tape, xh, 0, 1, 0, H), block(tape, hh, 0, 1, 0, H)));
  Tensor<Real> z = sigmoid(
      tape, add(tape, block(tape, xh, 0, 1, H, 2 * H), block(tape, hh, 0, 1, H, 2 * H)));
  Tensor<Real> n =
      tanh_op(tape, add(tape, block(tape, xh, 0, 1, 2 * H, 3 * H),
                        mul(tape, r, block(tape, hh, 0, 1, 2 * H, 3 * H))));
  // h' = (1 - z) n + z h, written without a ones tensor.
  return add(tape, n, mul(tape, z, sub(tape, h, n)));
}

template <class Real>
Tensor<Real> gru_run(Tape<Real>* tape, GruParams<Real>& g, Tensor<Real>& digit_table,
                     const std::vector<int>& digits, long H) {
  Tensor<Real> h = Tensor<Real>::zeros({1, H});  // empty input keeps the zero state
  for (int d : digits) {
    Tensor<Real> x = gather_rows(tape, digit_table, {d});
    h = gru_step(tape, g, x, h, H);
  }
  return h;
}

}  // namespace detail

template <class Real>
struct RnnEncoderParams {
  int d_digit = 16;
  int hidden = 64;
  Tensor<Real> digit_table;  // [10 x d_digit]
  GruParams<Real> int_gru;
  GruParams<Real> frac_gru;
  Tensor<Real> out_weight;  // [(2 hidden + 3) x d_model]
  Tensor<Real> out_bias;    // [d_model]

  static RnnEncoderParams init(int d_model, Rng& rng, int d_digit = 16, int hidden = 64) {
    RnnEncoderParams p;
    p.d_digit = d_digit;
    p.hidden = hidden;
    p.digit_table = detail::init_normal<Real>({10, d_digit}, rng);
    p.int_gru = GruParams<Real>::init(d_digit, hidden, rng);
    p.frac_gru = GruParams<Real>::init(d_digit, hidden, rng);
    p.out_weight = detail::init_normal<Real>({2 * hidden + 3, d_model}, rng);
    p.out_bias = Tensor<Real>::zeros({d_model});
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("num.rnn.digit_table", digit_table);
    int_gru.visit("num.rnn.int_gru", f);
    frac_gru.visit("num.rnn.frac_gru", f);
    f("num.rnn.out_weight", out_weight);
    f("num.rnn.out_bias", out_bias);
  }
};

template <class Real>
Tensor<Real> encode_values_rnn(Tape<Real>* tape, const std::vector<NumberValue>& vals,
                               RnnEncoderParams<Real>& p) {
  if (vals.empty()) throw ContractError("encode_values_rnn: no values");
  std::vector<Tensor<Real>> rows;
  rows.reserve(vals.size());
  for (const NumberValue& v : vals) {
    Tensor<Real> h_int = detail::gru_run(tape, p.int_gru, p.digit_table, v.int_digits, p.hidden);
    Tensor<Real> h_frac =
        detail::gru_run(tape, p.frac_gru, p.digit_table, v.frac_digits, p.hidden);
    std::array<Real, 3> a = aux_features<Real>(v);
    Tensor<Real> aux = Tensor<Real>::from({1, 3}, {a[0], a[1], a[2]});
    rows.push_back(concat_cols(tape, {h_int, h_frac, aux}));
  }
  Tensor<Real> cat = rows.size() == 1 ? rows[0] : concat_rows(tape, rows);
  return tanh_op(tape, add(tape, matmul(tape, cat, p.out_weight), p.out_bias));
}

template <class Real>
Tensor<Real> encode_value_rnn(Tape<Real>* tape, const NumberValue& v, RnnEncoderParams<Real>& p) {
  return encode_values_rnn(tape, std::vector<NumberValue>{v}, p);
}

// ---------------------------------------------------------------------------
// Projection head mapping a hidden state back into the embedding space:
// down(tanh(gate(h)) * up(h)), all maps bias-free. Rows of h project
// independently, so a batch of hidden states goes through in one call.
// ---------------------------------------------------------------------------

template <class Real>
struct ProjectionParams {
  Tensor<Real> gate;  // [d_model x d_ff]
  Tensor<Real> up;    // [d_model x d_ff]
  Tensor<Real> down;  // [d_ff x d_model]

  static ProjectionParams init(int d_model, Rng& rng, int d_ff = 0) {
    if (d_ff <= 0) d_ff = 4 * d_model;
    ProjectionParams p;
    p.gate = detail::init_normal<Real>({d_model, d_ff}, rng);
    p.up = detail::init_normal<Real>({d_model, d_ff}, rng);
    p.down = detail::init_normal<Real>({d_ff, d_model}, rng);
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("num.proj.gate", gate);
    f("num.proj.up", up);
    f("num.proj.down", down);
  }
};

template <class Real>
Tensor<Real> project_hidden(Tape<Real>* tape, const Tensor<Real>& h, ProjectionParams<Real>& p) {
  Tensor<Real> gated = tanh_op(tape, matmul(tape, h, p.gate));
  return matmul(tape, mul(tape, gated, matmul(tape, h, p.up)), p.down);
}

}  // namespace numval
