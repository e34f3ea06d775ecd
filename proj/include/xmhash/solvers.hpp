/*
 * Copyright 2026 The xmhash Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "xmhash/dataset.hpp"
#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/objective.hpp"
#include "xmhash/rng.hpp"

namespace xmhash {

/// Element-wise sign with sign(0) = -1: only strictly positive maps to +1.
inline double sign_of(double x) { return x > 0.0 ? 1.0 : -1.0; }

/// n×k matrix of ±1 codes, held both as reals and as packed 64-bit words
/// (bit j of word j/64 set iff the entry is +1).
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(std::size_t n, std::size_t k)
      : real_(n, k, -1.0), words_per_row_((k + 63) / 64),
        packed_(n * words_per_row_, 0) {}

  static CodeMatrix from_real(const Matrix& b) {
    CodeMatrix out(b.rows(), b.cols());
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) {
        const double x = b(i, j);
        detail::require(x == 1.0 || x == -1.0, "CodeMatrix: entries must be +-1");
        out.set(i, j, x);
      }
    return out;
  }

  std::size_t n() const { return real_.rows(); }
  std::size_t k() const { return real_.cols(); }
  std::size_t words_per_row() const { return words_per_row_; }

  const Matrix& real() const { return real_; }
  double operator()(std::size_t i, std::size_t j) const { return real_(i, j); }

  void set(std::size_t i, std::size_t j, double value) {
    real_(i, j) = value;
    std::uint64_t& word = packed_[i * words_per_row_ + j / 64];
    const std::uint64_t bit = std::uint64_t{1} << (j % 64);
    if (value > 0.0)
      word |= bit;
    else
      word &= ~bit;
  }

  std::span<const std::uint64_t> packed_row(std::size_t i) const {
    return {packed_.data() + i * words_per_row_, words_per_row_};
  }
  std::span<const std::uint64_t> packed() const { return packed_; }

  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

 private:
  Matrix real_;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> packed_;
};

/// Code export: u64 n, u64 k (little-endian), then ceil(k/64) little-endian
/// words per row.
inline void write_codes(std::ostream& os, const CodeMatrix& codes) {
  detail::write_u64_le(os, codes.n());
  detail::write_u64_le(os, codes.k());
  for (std::uint64_t w : codes.packed()) detail::write_u64_le(os, w);
  if (!os) throw IoError("write_codes: stream error");
}

inline CodeMatrix read_codes(std::istream& is) {
  const std::uint64_t n = detail::read_u64_le(is);
  const std::uint64_t k = detail::read_u64_le(is);
  if (k == 0 || k > 65536 || n > (std::uint64_t{1} << 32))
    throw ParseError("read_codes: implausible header");
  CodeMatrix codes(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t w = 0; w < codes.words_per_row(); ++w) {
      const std::uint64_t word = detail::read_u64_le(is);
      for (std::size_t b = 0; b < 64 && w * 64 + b < k; ++b)
        codes.set(i, w * 64 + b, ((word >> b) & 1u) ? 1.0 : -1.0);
    }
  }
  return codes;
}

/// B entries i.i.d. uniform on {-1, +1}.
inline CodeMatrix random_codes(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  CodeMatrix b(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) b.set(i, j, rng.coin() ? 1.0 : -1.0);
  return b;
}

/// Encoder outputs scattered to their database rows, zero elsewhere.
struct MaskedOutputs {
  Matrix v_ring;  // n×k
  Matrix t_ring;  // n×k
};

inline MaskedOutputs mask_outputs(const Matrix& v, const Matrix& t,
                                  const SimilarityView& sim) {
  detail::require(v.rows() == sim.m() && t.rows() == sim.m() &&
                      v.cols() == t.cols(),
                  "mask_outputs: V/T shape mismatch");
  MaskedOutputs out{Matrix(sim.n(), v.cols()), Matrix(sim.n(), t.cols())};
  for (std::size_t i = 0; i < sim.m(); ++i) {
    std::ranges::copy(v.row(i), out.v_ring.row(sim.query_index[i]).begin());
    std::ranges::copy(t.row(i), out.t_ring.row(sim.query_index[i]).begin());
  }
  return out;
}

/// Linear coefficient matrix of the B-subproblem (k×n):
/// D = γV̊ᵀ + γT̊ᵀ + 2kVᵀS̃ + 2kTᵀS̃ + 2βWLᵀ, where S̃ is S^Φ with each −1
/// entry scaled by the imbalance weight.
inline Matrix build_d_matrix(const Matrix& v, const Matrix& t,
                             const MaskedOutputs& masked, const Matrix& w,
                             const Matrix& labels, const SimilarityView& sim,
                             const HyperParams& hp) {
  const std::size_t m = sim.m(), n = sim.n(), k = hp.k;
  detail::require(v.rows() == m && v.cols() == k && t.rows() == m &&
                      t.cols() == k,
                  "build_d_matrix: V/T must be m x k");
  detail::require(masked.v_ring.rows() == n && masked.v_ring.cols() == k &&
                      masked.t_ring.rows() == n && masked.t_ring.cols() == k,
                  "build_d_matrix: masked outputs must be n x k");
  detail::require(w.rows() == k && labels.rows() == n && w.cols() == labels.cols(),
                  "build_d_matrix: W/labels shape mismatch");

  Matrix s_weighted(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s_weighted(i, j) = sim.weight(i, j) * sim.values(i, j);

  Matrix vt_sum = v;
  axpy(1.0, t, vt_sum);
  Matrix d = matmul_tn(vt_sum, s_weighted);  // (V+T)ᵀS̃
  for (double& x : d.data()) x *= 2.0 * static_cast<double>(k);

  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p)
      d(p, j) += hp.gamma * (masked.v_ring(j, p) + masked.t_ring(j, p));

  if (hp.beta != 0.0) {
    const Matrix wl = matmul_nt(w, labels);  // k×n
    axpy(2.0 * hp.beta, wl, d);
  }
  return d;
}

/// Quadratic-plus-linear B-subproblem:
/// Σ w(VBᵀ)² + Σ w(TBᵀ)² + β‖BW‖² − tr(BD). Differs from the full objective
/// at fixed V, T, W by a constant independent of B.
inline double b_subproblem_objective(const Matrix& b, const Matrix& v,
                                     const Matrix& t, const Matrix& w,
                                     const Matrix& d, const SimilarityView& sim,
                                     const HyperParams& hp) {
  const Matrix vb = matmul_nt(v, b);
  const Matrix tb = matmul_nt(t, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < sim.m(); ++i)
    for (std::size_t j = 0; j < sim.n(); ++j)
      acc += sim.weight(i, j) * (vb(i, j) * vb(i, j) + tb(i, j) * tb(i, j));
  acc += hp.beta * frobenius_sq(matmul(b, w));
  for (std::size_t j = 0; j < b.rows(); ++j)
    for (std::size_t p = 0; p < b.cols(); ++p) acc -= b(j, p) * d(p, j);
  return acc;
}

/// Scratch state for a DCC sweep: current inner products VBᵀ and TBᵀ and
/// the Gram matrix WWᵀ.
struct DccWorkspace {
  Matrix vb;
  Matrix tb;
  Matrix wwt;

  DccWorkspace(const CodeMatrix& b, const Matrix& v, const Matrix& t,
               const Matrix& w)
      : vb(matmul_nt(v, b.real())), tb(matmul_nt(t, b.real())),
        wwt(matmul_nt(w, w)) {}
};

namespace detail {

/// Replaces column `col` by its exact minimizer with all other columns
/// fixed: b_{j,col} = −sign(g_j), where g_j is the coefficient of b_{j,col}
/// in the B-subproblem. Keeps the workspace inner products current.
inline void dcc_column(CodeMatrix& b, std::size_t col, const Matrix& v,
                       const Matrix& t, const Matrix& d,
                       const SimilarityView& sim, const HyperParams& hp,
                       DccWorkspace& ws) {
  const std::size_t m = sim.m(), n = sim.n(), k = hp.k;
  for (std::size_t j = 0; j < n; ++j) {
    const double old = b(j, col);
    double quad = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double wt = sim.weight(i, j);
      const double vi = v(i, col), ti = t(i, col);
      quad += wt * (vi * (ws.vb(i, j) - vi * old) + ti * (ws.tb(i, j) - ti * old));
    }
    double cls = 0.0;
    for (std::size_t q = 0; q < k; ++q)
      if (q != col) cls += ws.wwt(col, q) * b(j, q);
    const double g = 2.0 * quad + 2.0 * hp.beta * cls - d(col, j);
    const double updated = -sign_of(g);
    if (updated != old) {
      b.set(j, col, updated);
      const double delta = updated - old;
      for (std::size_t i = 0; i < m; ++i) {
        ws.vb(i, j) += v(i, col) * delta;
        ws.tb(i, j) += t(i, col) * delta;
      }
    }
  }
}

inline void check_dcc_shapes(const CodeMatrix& b, const Matrix& v,
                             const Matrix& t, const Matrix& w, const Matrix& d,
                             const SimilarityView& sim, const HyperParams& hp) {
  require(b.n() == sim.n() && b.k() == hp.k, "dcc: B must be n x k");
  require(v.rows() == sim.m() && v.cols() == hp.k && t.rows() == sim.m() &&
              t.cols() == hp.k,
          "dcc: V/T must be m x k");
  require(w.rows() == hp.k, "dcc: W must have k rows");
  require(d.rows() == hp.k && d.cols() == sim.n(), "dcc: D must be k x n");
}

}  // namespace detail

/// One discrete coordinate step on column `col` of B.
inline CodeMatrix dcc_update_bit(CodeMatrix b, std::size_t col, const Matrix& v,
                                 const Matrix& t, const Matrix& w,
                                 const Matrix& d, const SimilarityView& sim,
                                 const HyperParams& hp) {
  detail::check_dcc_shapes(b, v, t, w, d, sim, hp);
  detail::require(col < hp.k, "dcc_update_bit: column out of range");
  DccWorkspace ws(b, v, t, w);
  detail::dcc_column(b, col, v, t, d, sim, hp, ws);
  return b;
}

/// One full DCC sweep over columns 0..k−1; each column sees the latest
/// values of the others. `after_column`, if given, is called after each
/// column update (used for monotonicity checks).
template <typename Callback>
CodeMatrix update_b(CodeMatrix b, const Matrix& v, const Matrix& t,
                    const Matrix& w, const Matrix& d, const SimilarityView& sim,
                    const HyperParams& hp, Callback&& after_column) {
  detail::check_dcc_shapes(b, v, t, w, d, sim, hp);
  DccWorkspace ws(b, v, t, w);
  for (std::size_t col = 0; col < hp.k; ++col) {
    detail::dcc_column(b, col, v, t, d, sim, hp, ws);
    after_column(col, static_cast<const CodeMatrix&>(b));
  }
  return b;
}

inline CodeMatrix update_b(CodeMatrix b, const Matrix& v, const Matrix& t,
                           const Matrix& w, const Matrix& d,
                           const SimilarityView& sim, const HyperParams& hp) {
  return update_b(std::move(b), v, t, w, d, sim, hp,
                  [](std::size_t, const CodeMatrix&) {});
}

/// α‖VW − L^Φ‖² + α‖TW − L^Φ‖² + β‖BW − L‖² + η‖W‖².
inline double w_subproblem_objective(const Matrix& w, const Matrix& v,
                                     const Matrix& t, const Matrix& b,
                                     const Matrix& labels,
                                     const SimilarityView& sim,
                                     const HyperParams& hp) {
  const Matrix lphi = gather_rows(labels, sim.query_index);
  Matrix rv = matmul(v, w);
  axpy(-1.0, lphi, rv);
  Matrix rt = matmul(t, w);
  axpy(-1.0, lphi, rt);
  Matrix rb = matmul(b, w);
  axpy(-1.0, labels, rb);
  return hp.alpha * (frobenius_sq(rv) + frobenius_sq(rt)) +
         hp.beta * frobenius_sq(rb) + hp.eta * frobenius_sq(w);
}

/// Normal-equation system of the W-subproblem:
/// (αVᵀV + αTᵀT + βBᵀB + ηI) W = (αV̊ + αT̊ + βB)ᵀ L.
struct WSystem {
  Matrix lhs;  // k×k
  Matrix rhs;  // k×c
};

inline WSystem w_normal_equations(const Matrix& v, const Matrix& t,
                                  const MaskedOutputs& masked, const Matrix& b,
                                  const Matrix& labels, const HyperParams& hp) {
  const std::size_t k = hp.k, n = b.rows();
  detail::require(v.cols() == k && t.cols() == k && b.cols() == k,
                  "solve_w: V/T/B must have k columns");
  detail::require(labels.rows() == n && masked.v_ring.rows() == n &&
                      masked.t_ring.rows() == n,
                  "solve_w: database row counts disagree");
  WSystem sys{Matrix(k, k), Matrix()};
  axpy(hp.alpha, matmul_tn(v, v), sys.lhs);
  axpy(hp.alpha, matmul_tn(t, t), sys.lhs);
  axpy(hp.beta, matmul_tn(b, b), sys.lhs);
  for (std::size_t p = 0; p < k; ++p) sys.lhs(p, p) += hp.eta;

  Matrix combined(n, k);
  axpy(hp.alpha, masked.v_ring, combined);
  axpy(hp.alpha, masked.t_ring, combined);
  axpy(hp.beta, b, combined);
  sys.rhs = matmul_tn(combined, labels);
  return sys;
}

/// Closed-form ridge solution of the W-subproblem.
inline Matrix solve_w(const Matrix& v, const Matrix& t,
                      const MaskedOutputs& masked, const CodeMatrix& b,
                      const Matrix& labels, const HyperParams& hp) {
  if (!(hp.eta > 0.0))
    throw SingularSystemError("solve_w: eta must be positive");
  const WSystem sys = w_normal_equations(v, t, masked, b.real(), labels, hp);
  return solve_spd(sys.lhs, sys.rhs);
}

}  // namespace xmhash
