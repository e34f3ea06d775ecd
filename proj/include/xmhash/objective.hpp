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
#include <span>
#include <vector>

#include <json.hpp>

#include "xmhash/dataset.hpp"
#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"

namespace xmhash {

struct HyperParams {
  double alpha = 50.0;   // query-side classification
  double beta = 1.0;     // database-side classification
  double gamma = 200.0;  // code/output consistency
  double eta = 50.0;     // ridge on W
  double mu = 50.0;      // image-text inner products
  std::size_t k = 16;
  std::size_t m = 2000;
  std::size_t t_out = 30;
  std::size_t t_in = 3;
  std::size_t batch = 64;
  double lr_img = 1e-4;
  double lr_txt = 4e-3;
  std::size_t hidden_img = 256;
  std::size_t hidden_txt = 512;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HyperParams, alpha, beta, gamma,
                                                eta, mu, k, m, t_out, t_in,
                                                batch, lr_img, lr_txt,
                                                hidden_img, hidden_txt)

inline void validate(const HyperParams& hp) {
  detail::require(hp.alpha >= 0 && hp.beta >= 0 && hp.gamma >= 0 &&
                      hp.mu >= 0,
                  "hyper-parameters alpha, beta, gamma, mu must be >= 0");
  detail::require(hp.eta > 0, "hyper-parameter eta must be > 0");
  detail::require(hp.k >= 1, "code length k must be >= 1");
  detail::require(hp.m >= 1, "query sample size m must be >= 1");
  detail::require(hp.batch >= 1, "batch size must be >= 1");
  detail::require(hp.lr_img >= 0 && hp.lr_txt >= 0,
                  "learning rates must be >= 0");
  detail::require(hp.hidden_img >= 1 && hp.hidden_txt >= 1,
                  "hidden widths must be >= 1");
}

/// Raw (unscaled) addends of the relaxed objective plus the weighted total.
struct LossBreakdown {
  double total = 0.0;
  double vb_term = 0.0;      // Σ w (v_i·b_j − kS_ij)²
  double tb_term = 0.0;      // Σ w (t_i·b_j − kS_ij)²
  double vt_term = 0.0;      // Σ w (v_i·t_j − kS_{Φi,Φj})², scaled by mu
  double cls_v = 0.0;        // ‖VW − L^Φ‖², scaled by alpha
  double cls_t = 0.0;        // ‖TW − L^Φ‖², scaled by alpha
  double cls_b = 0.0;        // ‖BW − L‖², scaled by beta
  double w_reg = 0.0;        // ‖W‖², scaled by eta
  double consistency = 0.0;  // ‖B^Φ − (V+T)/2‖², scaled by gamma

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossBreakdown, total, vb_term, tb_term,
                                   vt_term, cls_v, cls_t, cls_b, w_reg,
                                   consistency)

inline double weighted_total(const LossBreakdown& l, const HyperParams& hp) {
  return l.vb_term + l.tb_term + hp.mu * l.vt_term +
         hp.alpha * (l.cls_v + l.cls_t) + hp.beta * l.cls_b + hp.eta * l.w_reg +
         hp.gamma * l.consistency;
}

namespace detail {

inline void check_objective_shapes(const Matrix& v, const Matrix& t,
                                   const Matrix& b, const Matrix& w,
                                   const SimilarityView& sim,
                                   const Matrix& labels, const HyperParams& hp) {
  const std::size_t m = sim.m(), n = sim.n(), k = hp.k;
  require(sim.values.rows() == m, "objective: similarity rows != |Phi|");
  require(v.rows() == m && v.cols() == k, "objective: V must be m x k");
  require(t.rows() == m && t.cols() == k, "objective: T must be m x k");
  require(b.rows() == n && b.cols() == k, "objective: B must be n x k");
  require(labels.rows() == n, "objective: labels must have n rows");
  require(w.rows() == k && w.cols() == labels.cols(),
          "objective: W must be k x c");
}

/// Gradient of the objective w.r.t. one query output row, shared by
/// both modalities: `self` is the modality being differentiated and
/// `other` the opposite modality (T for grad_v, V for grad_t).
inline std::vector<double> query_row_gradient(std::size_t i, const Matrix& self,
                                              const Matrix& other,
                                              const Matrix& b, const Matrix& w,
                                              const SimilarityView& sim,
                                              const Matrix& labels,
                                              const HyperParams& hp) {
  require(i < sim.m(), "gradient: query row out of range");
  const std::size_t k = hp.k;
  const double kd = static_cast<double>(k);
  const auto s_i = self.row(i);
  std::vector<double> g(k, 0.0);

  for (std::size_t j = 0; j < sim.n(); ++j) {
    const auto b_j = b.row(j);
    const double r = dot(s_i, b_j) - kd * sim.values(i, j);
    const double coef = 2.0 * sim.weight(i, j) * r;
    for (std::size_t p = 0; p < k; ++p) g[p] += coef * b_j[p];
  }

  if (hp.mu != 0.0) {
    for (std::size_t j = 0; j < sim.m(); ++j) {
      const auto o_j = other.row(j);
      const double s = sim.query_query(i, j);
      const double wgt = s < 0.0 ? sim.neg_weight : 1.0;
      const double coef = 2.0 * hp.mu * wgt * (dot(s_i, o_j) - kd * s);
      for (std::size_t p = 0; p < k; ++p) g[p] += coef * o_j[p];
    }
  }

  if (hp.alpha != 0.0) {
    // 2α·W(Wᵀs_i − l_i)
    const std::size_t c = w.cols();
    const auto l_i = labels.row(sim.query_index[i]);
    for (std::size_t q = 0; q < c; ++q) {
      double u = -l_i[q];
      for (std::size_t p = 0; p < k; ++p) u += w(p, q) * s_i[p];
      for (std::size_t p = 0; p < k; ++p) g[p] += 2.0 * hp.alpha * u * w(p, q);
    }
  }

  const auto o_i = other.row(i);
  const auto b_i = b.row(sim.query_index[i]);
  for (std::size_t p = 0; p < k; ++p)
    g[p] += hp.gamma * (s_i[p] + o_i[p] - 2.0 * b_i[p]);
  return g;
}

}  // namespace detail

/// Relaxed joint objective at (V, T, B, W) with class-imbalance weights on
/// every dissimilar-pair residual.
inline LossBreakdown eval_objective(const Matrix& v, const Matrix& t,
                                    const Matrix& b, const Matrix& w,
                                    const SimilarityView& sim,
                                    const Matrix& labels,
                                    const HyperParams& hp) {
  detail::check_objective_shapes(v, t, b, w, sim, labels, hp);
  for (double x : b.data())
    detail::require(x == 1.0 || x == -1.0, "objective: B entries must be +-1");
  const std::size_t m = sim.m(), n = sim.n(), k = hp.k;
  const double kd = static_cast<double>(k);
  LossBreakdown out;

  const Matrix vb = matmul_nt(v, b);
  const Matrix tb = matmul_nt(t, b);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double ks = kd * sim.values(i, j);
      const double wt = sim.weight(i, j);
      const double rv = vb(i, j) - ks;
      const double rt = tb(i, j) - ks;
      out.vb_term += wt * rv * rv;
      out.tb_term += wt * rt * rt;
    }

  const Matrix vt = matmul_nt(v, t);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double s = sim.query_query(i, j);
      const double r = vt(i, j) - kd * s;
      out.vt_term += (s < 0.0 ? sim.neg_weight : 1.0) * r * r;
    }

  const Matrix lphi = gather_rows(labels, sim.query_index);
  Matrix rv = matmul(v, w);
  axpy(-1.0, lphi, rv);
  out.cls_v = frobenius_sq(rv);
  Matrix rt = matmul(t, w);
  axpy(-1.0, lphi, rt);
  out.cls_t = frobenius_sq(rt);
  Matrix rb = matmul(b, w);
  axpy(-1.0, labels, rb);
  out.cls_b = frobenius_sq(rb);
  out.w_reg = frobenius_sq(w);

  for (std::size_t i = 0; i < m; ++i) {
    const auto b_i = b.row(sim.query_index[i]);
    for (std::size_t p = 0; p < k; ++p) {
      const double r = b_i[p] - 0.5 * (v(i, p) + t(i, p));
      out.consistency += r * r;
    }
  }

  out.total = weighted_total(out, hp);
  return out;
}

/// dL/dv_i for query row i (image modality).
inline std::vector<double> grad_v(std::size_t i, const Matrix& v, const Matrix& t,
                                  const Matrix& b, const Matrix& w,
                                  const SimilarityView& sim,
                                  const Matrix& labels, const HyperParams& hp) {
  detail::check_objective_shapes(v, t, b, w, sim, labels, hp);
  return detail::query_row_gradient(i, v, t, b, w, sim, labels, hp);
}

/// dL/dt_i for query row i (text modality).
inline std::vector<double> grad_t(std::size_t i, const Matrix& v, const Matrix& t,
                                  const Matrix& b, const Matrix& w,
                                  const SimilarityView& sim,
                                  const Matrix& labels, const HyperParams& hp) {
  detail::check_objective_shapes(v, t, b, w, sim, labels, hp);
  return detail::query_row_gradient(i, t, v, b, w, sim, labels, hp);
}

/// The output-space gradients use γ(v_i + t_i − 2b_i) for the consistency
/// term, which is the exact derivative of the objective whose consistency
/// weight is 2γ. Returns those hyper-parameters, for derivative checks.
inline HyperParams gradient_consistent_params(HyperParams hp) {
  hp.gamma *= 2.0;
  return hp;
}

}  // namespace xmhash
