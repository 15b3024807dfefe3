#pragma once

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "numval/tensor.hpp"

// Differentiable kernels over Tensor<Real>. Each op computes its forward
// result eagerly and, when a tape is supplied and an input is tracked,
// records a closure that accumulates input gradients from the output
// gradient. Kernels are deterministic; matmul is backed by OpenBLAS, which
// is run-to-run reproducible for a fixed thread count.

namespace numval {

// ---------------------------------------------------------------------------
// BLAS-backed GEMM, row-major. C = alpha * op(A) * op(B) + beta * C.
// ---------------------------------------------------------------------------

inline void gemm_raw(bool ta, bool tb, long m, long n, long k, float alpha, const float* a,
                     long lda, const float* b, long ldb, float beta, float* c, long ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline void gemm_raw(bool ta, bool tb, long m, long n, long k, double alpha, const double* a,
                     long lda, const double* b, long ldb, double beta, double* c, long ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

namespace detail {

template <class Real>
bool want_tape(Tape<Real>* tape, std::initializer_list<const Tensor<Real>*> ins) {
  if (!tape) return false;
  for (const auto* t : ins)
    if (t->node_on(tape->id()) >= 0) return true;
  return false;
}

template <class Real>
void require_matrix(const Tensor<Real>& t, const char* who) {
  if (!t.is_matrix())
    throw DimensionError(std::string(who) + ": expected a matrix, got " + shape_str(t.shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: C[m x n] = op(A) * op(B), with optional transposes.
// Backward (no transposes): dA = dC * B^T, dB = A^T * dC.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b,
                    bool trans_a = false, bool trans_b = false) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  long m = trans_a ? a.shape[1] : a.shape[0];
  long ka = trans_a ? a.shape[0] : a.shape[1];
  long kb = trans_b ? b.shape[1] : b.shape[0];
  long n = trans_b ? b.shape[0] : b.shape[1];
  if (ka != kb)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape) +
                         (trans_a ? "^T" : "") + " * " + shape_str(b.shape) +
                         (trans_b ? "^T" : ""));

  Tensor<Real> c = Tensor<Real>::zeros({m, n});
  gemm_raw(trans_a, trans_b, m, n, ka, Real(1), a.ptr(), a.shape[1], b.ptr(), b.shape[1], Real(0),
           c.ptr(), n);

  if (detail::want_tape(tape, {&a, &b})) {
    auto ad = a.data, bd = b.data;
    Shape as = a.shape, bs = b.shape;
    int an = a.node_on(tape->id()), bn = b.node_on(tape->id());
    tape->record(
        c, {an, bn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
          long k = ka;
          if (an >= 0) {
            Real* ga = tp.grad_buf(an).data();
            if (!trans_a && !trans_b)  // dA += dC * B^T
              gemm_raw(false, true, m, k, n, Real(1), g.data(), n, bd->data(), bs[1], Real(1), ga, as[1]);
            else if (!trans_a && trans_b)  // dA += dC * B
              gemm_raw(false, false, m, k, n, Real(1), g.data(), n, bd->data(), bs[1], Real(1), ga, as[1]);
            else if (trans_a && !trans_b)  // dA += B * dC^T
              gemm_raw(false, true, k, m, n, Real(1), bd->data(), bs[1], g.data(), n, Real(1), ga, as[1]);
            else  // dA += B^T * dC^T
              gemm_raw(true, true, k, m, n, Real(1), bd->data(), bs[1], g.data(), n, Real(1), ga, as[1]);
          }
          if (bn >= 0) {
            Real* gb = tp.grad_buf(bn).data();
            if (!trans_a && !trans_b)  // dB += A^T * dC
              gemm_raw(true, false, k, n, m, Real(1), ad->data(), as[1], g.data(), n, Real(1), gb, bs[1]);
            else if (!trans_a && trans_b)  // dB += dC^T * A
              gemm_raw(true, false, n, k, m, Real(1), g.data(), n, ad->data(), as[1], Real(1), gb, bs[1]);
            else if (trans_a && !trans_b)  // dB += A * dC
              gemm_raw(false, false, k, n, m, Real(1), ad->data(), as[1], g.data(), n, Real(1), gb, bs[1]);
            else  // dB += dC^T * A^T
              gemm_raw(true, true, n, k, m, Real(1), g.data(), n, ad->data(), as[1], Real(1), gb, bs[1]);
          }
        });
  }
  return c;
}

// ---------------------------------------------------------------------------
// Elementwise binary ops. Identical shapes, or a rank-1 right operand of
// length cols(a) broadcast over the rows of a (bias add).
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { Add, Sub, Mul };

template <class Real>
Tensor<Real> binary(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b, BinKind kind) {
  bool rowvec = (b.shape.size() == 1 && a.shape.size() == 2 && b.shape[0] == a.shape[1]);
  if (!rowvec && a.shape != b.shape)
    throw DimensionError("elementwise: incompatible shapes " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));

  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  long n = a.size();
  long c = a.cols();
  const Real* pa = a.ptr();
  const Real* pb = b.ptr();
  Real* po = out.ptr();
  for (long i = 0; i < n; ++i) {
    Real rhs = rowvec ? pb[i % c] : pb[i];
    switch (kind) {
      case BinKind::Add: po[i] = pa[i] + rhs; break;
      case BinKind::Sub: po[i] = pa[i] - rhs; break;
      case BinKind::Mul: po[i] = pa[i] * rhs; break;
    }
  }

  if (want_tape(tape, {&a, &b})) {
    int an = a.node_on(tape->id()), bn = b.node_on(tape->id());
    auto ad = a.data, bd = b.data;
    tape->record(out, {an, bn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      if (an >= 0) {
        auto& ga = tp.grad_buf(an);
        for (long i = 0; i < n; ++i) {
          Real gi = g[i];
          if (kind == BinKind::Mul) gi *= rowvec ? (*bd)[i % c] : (*bd)[i];
          ga[i] += gi;
        }
      }
      if (bn >= 0) {
        auto& gb = tp.grad_buf(bn);
        for (long i = 0; i < n; ++i) {
          Real gi = g[i];
          if (kind == BinKind::Sub) gi = -gi;
          if (kind == BinKind::Mul) gi *= (*ad)[i];
          gb[rowvec ? i % c : i] += gi;
        }
      }
    });
  }
  return out;
}

}  // namespace detail

template <class Real>
Tensor<Real> add(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary(tape, a, b, detail::BinKind::Add);
}

template <class Real>
Tensor<Real> sub(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary(tape, a, b, detail::BinKind::Sub);
}

template <class Real>
Tensor<Real> mul(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary(tape, a, b, detail::BinKind::Mul);
}

// y = scale * x + shift, elementwise with scalar coefficients.
template <class Real>
Tensor<Real> affine(Tape<Real>* tape, const Tensor<Real>& x, Real scale, Real shift = Real(0)) {
  Tensor<Real> out = Tensor<Real>::zeros(x.shape);
  long n = x.size();
  for (long i = 0; i < n; ++i) out.at(i) = scale * x.at(i) + shift;
  if (detail::want_tape(tape, {&x})) {
    int xn = x.node_on(tape->id());
    tape->record(out, {xn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      auto& gx = tp.grad_buf(xn);
      for (long i = 0; i < n; ++i) gx[i] += scale * g[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> scale(Tape<Real>* tape, const Tensor<Real>& x, Real s) {
  return affine(tape, x, s, Real(0));
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

namespace detail {

template <class Real, class Fwd, class Bwd>
Tensor<Real> unary(Tape<Real>* tape, const Tensor<Real>& x, Fwd fwd, Bwd bwd_from_saved,
                   bool save_output) {
  Tensor<Real> out = Tensor<Real>::zeros(x.shape);
  long n = x.size();
  for (long i = 0; i < n; ++i) out.at(i) = fwd(x.at(i));
  if (want_tape(tape, {&x})) {
    int xn = x.node_on(tape->id());
    auto saved = save_output ? out.data : x.data;
    tape->record(out, {xn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
          auto& gx = tp.grad_buf(xn);
          for (long i = 0; i < n; ++i) gx[i] += g[i] * bwd_from_saved((*saved)[i]);
        });
  }
  return out;
}

}  // namespace detail

template <class Real>
Tensor<Real> tanh_op(Tape<Real>* tape, const Tensor<Real>& x) {
  return detail::unary(
      tape, x, [](Real v) { return std::tanh(v); },
      [](Real y) { return Real(1) - y * y; }, /*save_output=*/true);
}

template <class Real>
Tensor<Real> sigmoid(Tape<Real>* tape, const Tensor<Real>& x) {
  return detail::unary(
      tape, x, [](Real v) { return Real(1) / (Real(1) + std::exp(-v)); },
      [](Real y) { return y * (Real(1) - y); }, /*save_output=*/true);
}

// Exact GELU, x * Phi(x).
template <class Real>
Tensor<Real> gelu(Tape<Real>* tape, const Tensor<Real>& x) {
  constexpr Real kInvSqrt2 = Real(0.7071067811865475244);
  constexpr Real kInvSqrt2Pi = Real(0.3989422804014326779);
  return detail::unary(
      tape, x,
      [=](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * kInvSqrt2)); },
      [=](Real v) {
        Real phi = kInvSqrt2Pi * std::exp(Real(-0.5) * v * v);
        return Real(0.5) * (Real(1) + std::erf(v * kInvSqrt2)) + v * phi;
      },
      /*save_output=*/false);
}

// ---------------------------------------------------------------------------
// layer_norm: per-row standardization then affine. Zero-variance rows map to
// the bias (x_hat = 0 there thanks to eps).
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> layer_norm(Tape<Real>* tape, const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, Real eps = Real(1e-5)) {
  detail::require_matrix(x, "layer_norm");
  long r = x.shape[0], c = x.shape[1];
  if (gain.size() != c || bias.size() != c)
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape) + "/" +
                         shape_str(bias.shape) + " do not match row width " + std::to_string(c));

  Tensor<Real> out = Tensor<Real>::zeros(x.shape);
  auto xhat = std::make_shared<std::vector<Real>>(r * c);
  auto inv_std = std::make_shared<std::vector<Real>>(r);
  for (long i = 0; i < r; ++i) {
    const Real* row = x.ptr() + i * c;
    Real mean = 0;
    for (long j = 0; j < c; ++j) mean += row[j];
    mean /= Real(c);
    Real var = 0;
    for (long j = 0; j < c; ++j) {
      Real d = row[j] - mean;
      var += d * d;
    }
    var /= Real(c);
    Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (long j = 0; j < c; ++j) {
      Real xh = (row[j] - mean) * is;
      (*xhat)[i * c + j] = xh;
      out.at(i, j) = xh * gain.at(j) + bias.at(j);
    }
  }

  if (detail::want_tape(tape, {&x, &gain, &bias})) {
    int xn = x.node_on(tape->id()), gn = gain.node_on(tape->id()), bn = bias.node_on(tape->id());
    auto gd = gain.data;
    tape->record(
        out, {xn, gn, bn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
          for (long i = 0; i < r; ++i) {
            const Real* grow = g.data() + i * c;
            const Real* xh = xhat->data() + i * c;
            if (xn >= 0) {
              Real* gx = tp.grad_buf(xn).data() + i * c;
              Real mean_dxhat = 0, mean_dxhat_xhat = 0;
              for (long j = 0; j < c; ++j) {
                Real dxh = grow[j] * (*gd)[j];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xh[j];
              }
              mean_dxhat /= Real(c);
              mean_dxhat_xhat /= Real(c);
              for (long j = 0; j < c; ++j) {
                Real dxh = grow[j] * (*gd)[j];
                gx[j] += (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat) * (*inv_std)[i];
              }
            }
            if (gn >= 0) {
              auto& gg = tp.grad_buf(gn);
              for (long j = 0; j < c; ++j) gg[j] += grow[j] * xh[j];
            }
            if (bn >= 0) {
              auto& gb = tp.grad_buf(bn);
              for (long j = 0; j < c; ++j) gb[j] += grow[j];
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax_cross_entropy: mean NLL over positions whose target != ignore_id,
// with row-max subtraction. All-ignored input yields zero loss and gradient.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> softmax_cross_entropy(Tape<Real>* tape, const Tensor<Real>& logits,
                                   const std::vector<int>& targets, int ignore_id = -1) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  long t = logits.shape[0], v = logits.shape[1];
  if (static_cast<long>(targets.size()) != t)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(t) + " rows");
  for (int id : targets)
    if (id != ignore_id && (id < 0 || id >= v))
      throw ContractError("softmax_cross_entropy: target id " + std::to_string(id) +
                          " outside [0, " + std::to_string(v) + ")");

  auto probs = std::make_shared<std::vector<Real>>(t * v);
  long count = 0;
  Real loss = 0;
  for (long i = 0; i < t; ++i) {
    const Real* row = logits.ptr() + i * v;
    Real mx = row[0];
    for (long j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real denom = 0;
    for (long j = 0; j < v; ++j) {
      Real e = std::exp(row[j] - mx);
      (*probs)[i * v + j] = e;
      denom += e;
    }
    for (long j = 0; j < v; ++j) (*probs)[i * v + j] /= denom;
    if (targets[i] != ignore_id) {
      ++count;
      loss -= std::log(std::max((*probs)[i * v + targets[i]], std::numeric_limits<Real>::min()));
    }
  }
  Tensor<Real> out = Tensor<Real>::scalar(count > 0 ? loss / Real(count) : Real(0));

  if (detail::want_tape(tape, {&logits})) {
    int ln = logits.node_on(tape->id());
    auto tgt = targets;
    tape->record(out, {ln}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      if (count == 0) return;
      auto& gl = tp.grad_buf(ln);
      Real w = g[0] / Real(count);
      for (long i = 0; i < t; ++i) {
        if (tgt[i] == ignore_id) continue;
        Real* grow = gl.data() + i * v;
        const Real* p = probs->data() + i * v;
        for (long j = 0; j < v; ++j) grow[j] += w * p[j];
        grow[tgt[i]] -= w;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// cosine_similarity over flattened tensors, norms clamped below by eps.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> cosine_similarity(Tape<Real>* tape, const Tensor<Real>& u, const Tensor<Real>& v,
                               Real eps = Real(1e-8)) {
  if (u.size() != v.size())
    throw DimensionError("cosine_similarity: sizes disagree, " + shape_str(u.shape) + " vs " +
                         shape_str(v.shape));
  long n = u.size();
  Real dot = 0, nu2 = 0, nv2 = 0;
  for (long i = 0; i < n; ++i) {
    dot += u.at(i) * v.at(i);
    nu2 += u.at(i) * u.at(i);
    nv2 += v.at(i) * v.at(i);
  }
  Real nu = std::max(std::sqrt(nu2), eps);
  Real nv = std::max(std::sqrt(nv2), eps);
  Real cosv = dot / (nu * nv);
  Tensor<Real> out = Tensor<Real>::scalar(cosv);

  if (detail::want_tape(tape, {&u, &v})) {
    int un = u.node_on(tape->id()), vn = v.node_on(tape->id());
    auto ud = u.data, vd = v.data;
    bool clamp_u = std::sqrt(nu2) < eps, clamp_v = std::sqrt(nv2) < eps;
    tape->record(out, {un, vn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      Real w = g[0];
      if (un >= 0) {
        auto& gu = tp.grad_buf(un);
        for (long i = 0; i < n; ++i) {
          Real d = (*vd)[i] / (nu * nv);
          if (!clamp_u) d -= dot * (*ud)[i] / (nu * nu * nu * nv);
          gu[i] += w * d;
        }
      }
      if (vn >= 0) {
        auto& gv = tp.grad_buf(vn);
        for (long i = 0; i < n; ++i) {
          Real d = (*ud)[i] / (nu * nv);
          if (!clamp_v) d -= dot * (*vd)[i] / (nv * nv * nv * nu);
          gv[i] += w * d;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops: block slicing, row concatenation, row gather, sum.
// ---------------------------------------------------------------------------

// Copy of the sub-matrix rows [r0, r1) x cols [c0, c1).
template <class Real>
Tensor<Real> block(Tape<Real>* tape, const Tensor<Real>& x, long r0, long r1, long c0, long c1) {
  detail::require_matrix(x, "block");
  long r = x.shape[0], c = x.shape[1];
  if (r0 < 0 || r1 > r || c0 < 0 || c1 > c || r0 >= r1 || c0 >= c1)
    throw DimensionError("block: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") outside " + shape_str(x.shape));
  long br = r1 - r0, bc = c1 - c0;
  Tensor<Real> out = Tensor<Real>::zeros({br, bc});
  for (long i = 0; i < br; ++i)
    std::copy_n(x.ptr() + (r0 + i) * c + c0, bc, out.ptr() + i * bc);

  if (detail::want_tape(tape, {&x})) {
    int xn = x.node_on(tape->id());
    tape->record(out, {xn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      auto& gx = tp.grad_buf(xn);
      for (long i = 0; i < br; ++i)
        for (long j = 0; j < bc; ++j) gx[(r0 + i) * c + c0 + j] += g[i * bc + j];
    });
  }
  return out;
}

// Stack matrices (or row vectors) with equal column counts.
template <class Real>
Tensor<Real> concat_rows(Tape<Real>* tape, const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  long c = parts[0].cols();
  long r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape));
    r += p.rows();
  }
  Tensor<Real> out = Tensor<Real>::zeros({r, c});
  long off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.ptr(), p.size(), out.ptr() + off * c);
    off += p.rows();
  }

  bool tracked = false;
  if (tape)
    for (const auto& p : parts)
      if (p.node_on(tape->id()) >= 0) tracked = true;
  if (tracked) {
    std::vector<int> pnodes;
    std::vector<long> prows;
    for (const auto& p : parts) {
      pnodes.push_back(p.node_on(tape->id()));
      prows.push_back(p.rows());
    }
    tape->record(out, pnodes, [=](Tape<Real>& tp, const std::vector<Real>& g) {
          long row = 0;
          for (size_t k = 0; k < pnodes.size(); ++k) {
            if (pnodes[k] >= 0) {
              auto& gp = tp.grad_buf(pnodes[k]);
              for (long i = 0; i < prows[k] * c; ++i) gp[i] += g[row * c + i];
            }
            row += prows[k];
          }
        });
  }
  return out;
}

// Concatenate matrices (or row vectors) with equal row counts side by side.
template <class Real>
Tensor<Real> concat_cols(Tape<Real>* tape, const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  long r = parts[0].rows();
  long c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r)
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape));
    c += p.cols();
  }
  Tensor<Real> out = Tensor<Real>::zeros({r, c});
  long off = 0;
  for (const auto& p : parts) {
    long pc = p.cols();
    for (long i = 0; i < r; ++i)
      std::copy_n(p.ptr() + i * pc, pc, out.ptr() + i * c + off);
    off += pc;
  }

  bool tracked = false;
  if (tape)
    for (const auto& p : parts)
      if (p.node_on(tape->id()) >= 0) tracked = true;
  if (tracked) {
    std::vector<int> pnodes;
    std::vector<long> pcols;
    for (const auto& p : parts) {
      pnodes.push_back(p.node_on(tape->id()));
      pcols.push_back(p.cols());
    }
    tape->record(out, pnodes, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      long col = 0;
      for (size_t k = 0; k < pnodes.size(); ++k) {
        if (pnodes[k] >= 0) {
          auto& gp = tp.grad_buf(pnodes[k]);
          for (long i = 0; i < r; ++i)
            for (long j = 0; j < pcols[k]; ++j) gp[i * pcols[k] + j] += g[i * c + col + j];
        }
        col += pcols[k];
      }
    });
  }
  return out;
}

// Rows of `table` selected by index; backward scatter-adds.
template <class Real>
Tensor<Real> gather_rows(Tape<Real>* tape, const Tensor<Real>& table, const std::vector<int>& ids) {
  detail::require_matrix(table, "gather_rows");
  long r = table.shape[0], c = table.shape[1];
  for (int id : ids)
    if (id < 0 || id >= r)
      throw ContractError("gather_rows: index " + std::to_string(id) + " outside [0, " +
                          std::to_string(r) + ")");
  Tensor<Real> out = Tensor<Real>::zeros({static_cast<long>(ids.size()), c});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.ptr() + ids[i] * c, c, out.ptr() + i * c);

  if (detail::want_tape(tape, {&table})) {
    int tn = table.node_on(tape->id());
    auto idv = ids;
    tape->record(out, {tn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      auto& gt = tp.grad_buf(tn);
      for (size_t i = 0; i < idv.size(); ++i)
        for (long j = 0; j < c; ++j) gt[idv[i] * c + j] += g[i * c + j];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sum(Tape<Real>* tape, const Tensor<Real>& x) {
  Real s = 0;
  for (long i = 0; i < x.size(); ++i) s += x.at(i);
  Tensor<Real> out = Tensor<Real>::scalar(s);
  if (detail::want_tape(tape, {&x})) {
    int xn = x.node_on(tape->id());
    long n = x.size();
    tape->record(out, {xn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      auto& gx = tp.grad_buf(xn);
      for (long i = 0; i < n; ++i) gx[i] += g[0];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// causal_softmax: row i of a square score matrix is softmaxed over columns
// 0..i; masked columns are exactly zero.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> causal_softmax(Tape<Real>* tape, const Tensor<Real>& scores) {
  detail::require_matrix(scores, "causal_softmax");
  if (scores.shape[0] != scores.shape[1])
    throw DimensionError("causal_softmax: square matrix required, got " + shape_str(scores.shape));
  long t = scores.shape[0];
  Tensor<Real> out = Tensor<Real>::zeros({t, t});
  for (long i = 0; i < t; ++i) {
    const Real* row = scores.ptr() + i * t;
    Real mx = row[0];
    for (long j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    Real denom = 0;
    for (long j = 0; j <= i; ++j) {
      Real e = std::exp(row[j] - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (long j = 0; j <= i; ++j) out.at(i, j) /= denom;
  }

  if (detail::want_tape(tape, {&scores})) {
    int sn = scores.node_on(tape->id());
    auto pd = out.data;
    tape->record(out, {sn}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
      auto& gs = tp.grad_buf(sn);
      for (long i = 0; i < t; ++i) {
        const Real* p = pd->data() + i * t;
        const Real* grow = g.data() + i * t;
        Real dot = 0;
        for (long j = 0; j <= i; ++j) dot += p[j] * grow[j];
        for (long j = 0; j <= i; ++j) gs[i * t + j] += p[j] * (grow[j] - dot);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// compose_embeddings: the <num> injection point. Row i of the result is
//   pos_table[pos_ids[i]] + (token_table[token_ids[i]]   at ordinary rows,
//                            replacement_rows[k]          at <num> rows).
// The token table receives no gradient at replaced rows.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> compose_embeddings(Tape<Real>* tape, const Tensor<Real>& token_table,
                                const Tensor<Real>& pos_table, const std::vector<int>& token_ids,
                                const std::vector<int>& pos_ids,
                                const std::vector<long>& replaced_rows,
                                const Tensor<Real>* replacements) {
  detail::require_matrix(token_table, "compose_embeddings");
  detail::require_matrix(pos_table, "compose_embeddings");
  long t = static_cast<long>(token_ids.size());
  long d = token_table.shape[1];
  if (pos_table.shape[1] != d)
    throw DimensionError("compose_embeddings: table widths disagree");
  if (pos_ids.size() != token_ids.size())
    throw ContractError("compose_embeddings: one position index per token required");
  if (!replaced_rows.empty()) {
    if (!replacements)
      throw ContractError("compose_embeddings: replacement rows named but no vectors supplied");
    if (replacements->rows() != static_cast<long>(replaced_rows.size()) ||
        replacements->cols() != d)
      throw ContractError("compose_embeddings: expected " +
                          std::to_string(replaced_rows.size()) + " replacement rows of width " +
                          std::to_string(d) + ", got " + shape_str(replacements->shape));
  }
  for (int id : token_ids)
    if (id < 0 || id >= token_table.shape[0])
      throw ContractError("compose_embeddings: token id " + std::to_string(id) + " out of range");
  for (int p : pos_ids)
    if (p < 0 || p >= pos_table.shape[0])
      throw ContractError("compose_embeddings: position " + std::to_string(p) + " out of range");

  std::vector<long> repl_at(t, -1);
  for (size_t k = 0; k < replaced_rows.size(); ++k) {
    long r = replaced_rows[k];
    if (r < 0 || r >= t) throw ContractError("compose_embeddings: replaced row out of range");
    repl_at[r] = static_cast<long>(k);
  }

  Tensor<Real> out = Tensor<Real>::zeros({t, d});
  for (long i = 0; i < t; ++i) {
    const Real* src = repl_at[i] >= 0 ? replacements->ptr() + repl_at[i] * d
                                      : token_table.ptr() + token_ids[i] * d;
    const Real* pos = pos_table.ptr() + pos_ids[i] * d;
    Real* dst = out.ptr() + i * d;
    for (long j = 0; j < d; ++j) dst[j] = src[j] + pos[j];
  }

  bool tracked = tape && (token_table.node_on(tape->id()) >= 0 || pos_table.node_on(tape->id()) >= 0 ||
                          (replacements && replacements->node_on(tape->id()) >= 0));
  if (tracked) {
    int tok_n = token_table.node_on(tape->id()), pos_n = pos_table.node_on(tape->id());
    int rep_n = replacements ? replacements->node_on(tape->id()) : -1;
    auto tok_ids = token_ids;
    auto pids = pos_ids;
    tape->record(
        out, {tok_n, pos_n, rep_n}, [=](Tape<Real>& tp, const std::vector<Real>& g) {
          for (long i = 0; i < t; ++i) {
            const Real* grow = g.data() + i * d;
            if (repl_at[i] >= 0) {
              if (rep_n >= 0) {
                Real* gr = tp.grad_buf(rep_n).data() + repl_at[i] * d;
                for (long j = 0; j < d; ++j) gr[j] += grow[j];
              }
            } else if (tok_n >= 0) {
              Real* gt = tp.grad_buf(tok_n).data() + tok_ids[i] * d;
              for (long j = 0; j < d; ++j) gt[j] += grow[j];
            }
            if (pos_n >= 0) {
              Real* gp = tp.grad_buf(pos_n).data() + pids[i] * d;
              for (long j = 0; j < d; ++j) gp[j] += grow[j];
            }
          }
        });
  }
  return out;
}

}  // namespace numval
