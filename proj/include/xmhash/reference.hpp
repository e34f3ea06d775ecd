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

// Naive reference implementations. They share no code with the optimized
// paths they check beyond the Matrix container: everything is scalar loops
// over the definitions.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <numeric>
#include <utility>
#include <vector>

#include "xmhash/dataset.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/objective.hpp"
#include "xmhash/rng.hpp"

namespace xmhash::reference {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  return out;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

// ---------------------------------------------------------------------------
// Objective.

struct TinyInstance {
  std::size_t n = 0, m = 0, k = 0, c = 0;
  std::vector<std::vector<std::uint8_t>> labels;  // n × c
  Matrix label_matrix;
  SimilarityView sim;
  Matrix v, t, b, w;
  HyperParams hp;
};

/// Random small problem; every instance has at least one label, neg_weight
/// is computed by pair counting.
inline TinyInstance random_tiny_instance(std::uint64_t seed, std::size_t n,
                                         std::size_t m, std::size_t k,
                                         std::size_t c) {
  Rng rng(seed);
  TinyInstance ti;
  ti.n = n; ti.m = m; ti.k = k; ti.c = c;
  ti.labels.assign(n, std::vector<std::uint8_t>(c, 0));
  for (auto& l : ti.labels) {
    l[rng.below(c)] = 1;
    for (auto& bit : l)
      if (rng.uniform() < 0.2) bit = 1;
  }
  ti.label_matrix = Matrix(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) ti.label_matrix(i, j) = ti.labels[i][j];

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  perm.resize(m);

  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      bool share = false;
      for (std::size_t q = 0; q < c; ++q) share |= ti.labels[i][q] && ti.labels[j][q];
      (share ? pos : neg) += 1;
    }
  ti.sim.query_index = perm;
  ti.sim.neg_weight = neg == 0 ? 1.0 : static_cast<double>(pos) / static_cast<double>(neg);
  ti.sim.values = Matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      bool share = false;
      for (std::size_t q = 0; q < c; ++q)
        share |= ti.labels[perm[i]][q] && ti.labels[j][q];
      ti.sim.values(i, j) = share ? 1.0 : -1.0;
    }

  ti.v = Matrix(m, k);
  ti.t = Matrix(m, k);
  for (double& x : ti.v.data()) x = rng.uniform(-0.99, 0.99);
  for (double& x : ti.t.data()) x = rng.uniform(-0.99, 0.99);
  ti.b = Matrix(n, k);
  for (double& x : ti.b.data()) x = rng.coin() ? 1.0 : -1.0;
  ti.w = Matrix(k, c);
  for (double& x : ti.w.data()) x = 0.3 * rng.normal();
  ti.hp.k = k;
  ti.hp.m = m;
  return ti;
}

/// Term-by-term scalar evaluation of the weighted relaxed objective.
inline LossBreakdown objective(const Matrix& v, const Matrix& t, const Matrix& b,
                               const Matrix& w, const SimilarityView& sim,
                               const Matrix& labels, const HyperParams& hp) {
  const std::size_t m = sim.query_index.size(), n = b.rows(), k = hp.k,
                    c = w.cols();
  const double kd = static_cast<double>(k);
  auto wt = [&](double s) { return s < 0 ? sim.neg_weight : 1.0; };
  LossBreakdown l;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double vb = 0, tb = 0;
      for (std::size_t p = 0; p < k; ++p) {
        vb += v(i, p) * b(j, p);
        tb += t(i, p) * b(j, p);
      }
      const double s = sim.values(i, j);
      l.vb_term += wt(s) * (vb - kd * s) * (vb - kd * s);
      l.tb_term += wt(s) * (tb - kd * s) * (tb - kd * s);
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double vt = 0;
      for (std::size_t p = 0; p < k; ++p) vt += v(i, p) * t(j, p);
      const double s = sim.values(i, sim.query_index[j]);
      l.vt_term += wt(s) * (vt - kd * s) * (vt - kd * s);
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t q = 0; q < c; ++q) {
      double pv = 0, pt = 0;
      for (std::size_t p = 0; p < k; ++p) {
        pv += v(i, p) * w(p, q);
        pt += t(i, p) * w(p, q);
      }
      const double y = labels(sim.query_index[i], q);
      l.cls_v += (pv - y) * (pv - y);
      l.cls_t += (pt - y) * (pt - y);
    }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t q = 0; q < c; ++q) {
      double pb = 0;
      for (std::size_t p = 0; p < k; ++p) pb += b(j, p) * w(p, q);
      l.cls_b += (pb - labels(j, q)) * (pb - labels(j, q));
    }
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t q = 0; q < c; ++q) l.w_reg += w(p, q) * w(p, q);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double r = b(sim.query_index[i], p) - 0.5 * (v(i, p) + t(i, p));
      l.consistency += r * r;
    }
  l.total = l.vb_term + l.tb_term + hp.mu * l.vt_term +
            hp.alpha * (l.cls_v + l.cls_t) + hp.beta * l.cls_b +
            hp.eta * l.w_reg + hp.gamma * l.consistency;
  return l;
}

/// Central-difference gradient of eval_objective w.r.t. row i of V (or T).
inline std::vector<double> fd_gradient(std::size_t i, bool wrt_v, Matrix v,
                                       Matrix t, const Matrix& b,
                                       const Matrix& w, const SimilarityView& sim,
                                       const Matrix& labels,
                                       const HyperParams& hp, double h) {
  std::vector<double> g(hp.k);
  Matrix& target = wrt_v ? v : t;
  for (std::size_t p = 0; p < hp.k; ++p) {
    const double orig = target(i, p);
    target(i, p) = orig + h;
    const double up = eval_objective(v, t, b, w, sim, labels, hp).total;
    target(i, p) = orig - h;
    const double down = eval_objective(v, t, b, w, sim, labels, hp).total;
    target(i, p) = orig;
    g[p] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Scalar-loop D matrix (k × n).
inline Matrix d_matrix(const Matrix& v, const Matrix& t, const Matrix& w,
                       const Matrix& labels, const SimilarityView& sim,
                       const HyperParams& hp) {
  const std::size_t m = sim.query_index.size(), n = labels.rows(), k = hp.k;
  Matrix d(k, n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double s = sim.values(i, j);
        const double ws = (s < 0 ? sim.neg_weight : 1.0) * s;
        acc += 2.0 * static_cast<double>(k) * (v(i, p) + t(i, p)) * ws;
        if (sim.query_index[i] == j) acc += hp.gamma * (v(i, p) + t(i, p));
      }
      for (std::size_t q = 0; q < w.cols(); ++q)
        acc += 2.0 * hp.beta * w(p, q) * labels(j, q);
      d(p, j) = acc;
    }
  return d;
}

/// Full objective restricted to the terms that depend on B.
inline double b_dependent_objective(const Matrix& b, const Matrix& v,
                                    const Matrix& t, const Matrix& w,
                                    const SimilarityView& sim,
                                    const Matrix& labels, const HyperParams& hp) {
  const LossBreakdown l = objective(v, t, b, w, sim, labels, hp);
  return l.vb_term + l.tb_term + hp.beta * l.cls_b + hp.gamma * l.consistency;
}

/// Decodes an integer in [0, 2^(n·k)) into an n×k ±1 matrix.
inline Matrix code_from_bits(std::uint64_t bits, std::size_t n, std::size_t k) {
  Matrix b(n, k);
  for (std::size_t e = 0; e < n * k; ++e)
    b.data()[e] = ((bits >> e) & 1u) ? 1.0 : -1.0;
  return b;
}

/// Enumerates every n×k code matrix; returns objective values indexed by the
/// bit pattern of code_from_bits.
inline std::vector<double> enumerate_codes(
    std::size_t n, std::size_t k, const std::function<double(const Matrix&)>& f) {
  const std::uint64_t total = std::uint64_t{1} << (n * k);
  std::vector<double> values(total);
  for (std::uint64_t bits = 0; bits < total; ++bits)
    values[bits] = f(code_from_bits(bits, n, k));
  return values;
}

inline std::uint64_t bits_of(const Matrix& b) {
  std::uint64_t bits = 0;
  for (std::size_t e = 0; e < b.size(); ++e)
    if (b.data()[e] > 0) bits |= std::uint64_t{1} << e;
  return bits;
}

/// True when no change restricted to a single column lowers the tabulated
/// objective below its value at `b` (beyond `tol`).
inline bool columnwise_optimal(const Matrix& b, const std::vector<double>& table,
                               double tol) {
  const std::size_t n = b.rows(), k = b.cols();
  const std::uint64_t here = bits_of(b);
  for (std::size_t col = 0; col < k; ++col) {
    std::uint64_t col_mask = 0;
    for (std::size_t r = 0; r < n; ++r) col_mask |= std::uint64_t{1} << (r * k + col);
    for (std::uint64_t sub = 0; sub < (std::uint64_t{1} << n); ++sub) {
      std::uint64_t pattern = 0;
      for (std::size_t r = 0; r < n; ++r)
        if ((sub >> r) & 1u) pattern |= std::uint64_t{1} << (r * k + col);
      const std::uint64_t other = (here & ~col_mask) | pattern;
      if (table[other] < table[here] - tol) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Retrieval metrics by brute force over ±1 codes.

struct RefQuery {
  std::vector<double> code;  // ±1
  std::vector<std::uint8_t> labels;
};

inline int hamming_pm1(const std::vector<double>& a, const std::vector<double>& b) {
  double ip = 0;
  for (std::size_t p = 0; p < a.size(); ++p) ip += a[p] * b[p];
  return static_cast<int>(std::lround((static_cast<double>(a.size()) - ip) / 2.0));
}

inline bool shares_label(const std::vector<std::uint8_t>& a,
                         const std::vector<std::uint8_t>& b) {
  for (std::size_t q = 0; q < a.size(); ++q)
    if (a[q] && b[q]) return true;
  return false;
}

/// Ranking by std::stable_sort on distance (ties keep index order).
inline std::vector<std::size_t> rank(const std::vector<std::vector<double>>& db,
                                     const std::vector<double>& q) {
  std::vector<std::size_t> order(db.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return hamming_pm1(db[a], q) < hamming_pm1(db[b], q);
  });
  return order;
}

inline double mean_average_precision(
    const std::vector<std::vector<double>>& db,
    const std::vector<std::vector<std::uint8_t>>& db_labels,
    const std::vector<RefQuery>& queries) {
  double acc = 0.0;
  for (const auto& q : queries) {
    const auto order = rank(db, q.code);
    std::vector<double> precisions;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r)
      if (shares_label(q.labels, db_labels[order[r]])) {
        ++hits;
        precisions.push_back(static_cast<double>(hits) / static_cast<double>(r + 1));
      }
    if (!precisions.empty())
      acc += std::accumulate(precisions.begin(), precisions.end(), 0.0) /
             static_cast<double>(precisions.size());
  }
  return acc / static_cast<double>(queries.size());
}

inline double precision_at(const std::vector<std::vector<double>>& db,
                           const std::vector<std::vector<std::uint8_t>>& db_labels,
                           const std::vector<RefQuery>& queries, std::size_t cut) {
  double acc = 0.0;
  for (const auto& q : queries) {
    const auto order = rank(db, q.code);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < cut; ++r) hits += shares_label(q.labels, db_labels[order[r]]);
    acc += static_cast<double>(hits) / static_cast<double>(cut);
  }
  return acc / static_cast<double>(queries.size());
}

/// (precision, recall) per radius 0..k by explicit set membership.
inline std::vector<std::pair<double, double>> pr_curve(
    const std::vector<std::vector<double>>& db,
    const std::vector<std::vector<std::uint8_t>>& db_labels,
    const std::vector<RefQuery>& queries, std::size_t k) {
  std::vector<std::pair<double, double>> curve(k + 1, {0.0, 0.0});
  for (const auto& q : queries) {
    for (std::size_t r = 0; r <= k; ++r) {
      std::vector<std::size_t> retrieved, relevant;
      for (std::size_t i = 0; i < db.size(); ++i) {
        if (hamming_pm1(db[i], q.code) <= static_cast<int>(r)) retrieved.push_back(i);
        if (shares_label(q.labels, db_labels[i])) relevant.push_back(i);
      }
      std::vector<std::size_t> both;
      std::set_intersection(retrieved.begin(), retrieved.end(), relevant.begin(),
                            relevant.end(), std::back_inserter(both));
      curve[r].first += retrieved.empty() ? 1.0
                                          : static_cast<double>(both.size()) /
                                                static_cast<double>(retrieved.size());
      curve[r].second += relevant.empty() ? 0.0
                                          : static_cast<double>(both.size()) /
                                                static_cast<double>(relevant.size());
    }
  }
  for (auto& [p, rc] : curve) {
    p /= static_cast<double>(queries.size());
    rc /= static_cast<double>(queries.size());
  }
  return curve;
}

}  // namespace xmhash::reference
