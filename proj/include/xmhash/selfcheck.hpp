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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "xmhash/encoders.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/objective.hpp"
#include "xmhash/reference.hpp"
#include "xmhash/retrieval.hpp"
#include "xmhash/rng.hpp"
#include "xmhash/solvers.hpp"

namespace xmhash::selfcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  /// Test hook: negate the analytic image-side gradient before comparing.
  bool flip_grad_v_sign = false;
  std::uint64_t seed = 20240607;
};

namespace detail {

/// Hyper-parameters for a tiny instance: the defaults, or random draws
/// in a moderate range so no single term dominates.
inline HyperParams tiny_params(Rng& rng, std::size_t k, std::size_t m,
                               bool randomize) {
  HyperParams hp;
  hp.k = k;
  hp.m = m;
  if (randomize) {
    hp.alpha = rng.uniform(0.0, 5.0);
    hp.beta = rng.uniform(0.0, 5.0);
    hp.gamma = rng.uniform(0.0, 10.0);
    hp.eta = rng.uniform(0.1, 5.0);
    hp.mu = rng.uniform(0.0, 5.0);
  }
  return hp;
}

}  // namespace detail

/// Analytic output-space gradients vs central differences of eval_objective
/// (consistency weight doubled, since the analytic consistency gradient is
/// gamma(v + t - 2b)).
inline CheckResult output_gradients(const Options& opt, std::size_t instances = 20) {
  Rng rng(derive_seed(opt.seed, 11));
  double worst = 0.0;
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t n = 2 + rng.below(5), m = 1 + rng.below(std::min<std::size_t>(n, 4));
    const std::size_t k = 1 + rng.below(4), c = 1 + rng.below(3);
    auto ti = reference::random_tiny_instance(rng.next_u64(), n, m, k, c);
    ti.hp = detail::tiny_params(rng, k, m, trial % 2 == 1);
    const HyperParams fd_hp = gradient_consistent_params(ti.hp);
    for (std::size_t i = 0; i < m; ++i) {
      for (bool wrt_v : {true, false}) {
        auto g = wrt_v ? grad_v(i, ti.v, ti.t, ti.b, ti.w, ti.sim, ti.label_matrix, ti.hp)
                       : grad_t(i, ti.v, ti.t, ti.b, ti.w, ti.sim, ti.label_matrix, ti.hp);
        if (wrt_v && opt.flip_grad_v_sign)
          for (double& x : g) x = -x;
        const auto fd = reference::fd_gradient(i, wrt_v, ti.v, ti.t, ti.b, ti.w,
                                               ti.sim, ti.label_matrix, fd_hp, 1e-6);
        for (std::size_t p = 0; p < k; ++p)
          worst = std::max(worst, reference::relative_error(g[p], fd[p]));
      }
    }
  }
  std::ostringstream os;
  os << instances << " instances, max relative error " << worst << " (tol 1e-6)";
  return {"output_gradient_fd", worst <= 1e-6, os.str()};
}

/// Encoder backward vs central differences (h = 1e-5) of Σ G∘F(x).
inline CheckResult encoder_gradients(const Options& opt, std::size_t networks = 10) {
  Rng rng(derive_seed(opt.seed, 12));
  double worst = 0.0;
  for (std::size_t trial = 0; trial < networks; ++trial) {
    const std::size_t d_in = 1 + rng.below(8), hidden = 1 + rng.below(8),
                      k = 1 + rng.below(8), batch = 1 + rng.below(4);
    MlpParams params = init_params(hash_encoder_spec(d_in, hidden, k), rng.next_u64());
    for (auto& l : params.layers)
      for (double& b : l.bias) b = rng.uniform(-0.5, 0.5);
    Matrix x(batch, d_in), seed_grad(batch, k);
    for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : seed_grad.data()) v = rng.uniform(-1.0, 1.0);

    auto loss = [&](const MlpParams& p) {
      const Matrix out = forward(p, x).first;
      double acc = 0.0;
      for (std::size_t e = 0; e < out.size(); ++e) acc += seed_grad.data()[e] * out.data()[e];
      return acc;
    };
    const auto trace = forward(params, x).second;
    const MlpParams grads = backward(params, trace, seed_grad);
    const double h = 1e-5;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      auto probe = [&](double& slot, double analytic) {
        const double orig = slot;
        slot = orig + h;
        const double up = loss(params);
        slot = orig - h;
        const double down = loss(params);
        slot = orig;
        worst = std::max(worst, reference::relative_error(analytic, (up - down) / (2 * h)));
      };
      auto& layer = params.layers[l];
      for (std::size_t e = 0; e < layer.weight.size(); ++e)
        probe(layer.weight.data()[e], grads.layers[l].weight.data()[e]);
      for (std::size_t e = 0; e < layer.bias.size(); ++e)
        probe(layer.bias[e], grads.layers[l].bias[e]);
    }
  }
  std::ostringstream os;
  os << networks << " networks, max relative error " << worst << " (tol 1e-5)";
  return {"encoder_backward_fd", worst <= 1e-5, os.str()};
}

/// DCC on n=4, k=3: every column update is non-increasing in the
/// B-dependent objective, and the sweep fixed point is column-wise optimal
/// against an exhaustive table of all 4096 code matrices.
inline CheckResult dcc_exhaustive(const Options& opt, std::size_t instances = 10) {
  Rng rng(derive_seed(opt.seed, 13));
  const std::size_t n = 4, k = 3;
  std::size_t increases = 0, non_optimal = 0;
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t m = 1 + rng.below(n), c = 2 + rng.below(2);
    auto ti = reference::random_tiny_instance(rng.next_u64(), n, m, k, c);
    ti.hp = detail::tiny_params(rng, k, m, trial % 2 == 1);
    auto f = [&](const Matrix& b) {
      return reference::b_dependent_objective(b, ti.v, ti.t, ti.w, ti.sim,
                                              ti.label_matrix, ti.hp);
    };
    const auto table = reference::enumerate_codes(n, k, f);
    const Matrix d = reference::d_matrix(ti.v, ti.t, ti.w, ti.label_matrix, ti.sim, ti.hp);

    CodeMatrix b = CodeMatrix::from_real(ti.b);
    double prev = table[reference::bits_of(b.real())];
    for (int sweep = 0; sweep < 64; ++sweep) {
      const CodeMatrix before = b;
      b = update_b(std::move(b), ti.v, ti.t, ti.w, d, ti.sim, ti.hp,
                   [&](std::size_t, const CodeMatrix& cur) {
                     const double now = table[reference::bits_of(cur.real())];
                     if (now > prev + 1e-9 * std::max(1.0, std::abs(prev))) ++increases;
                     prev = now;
                   });
      if (b == before) break;
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(prev));
    if (!reference::columnwise_optimal(b.real(), table, tol)) ++non_optimal;
  }
  std::ostringstream os;
  os << instances << " instances (n=4, k=3, 4096 codes each): " << increases
     << " increasing column updates, " << non_optimal << " non-optimal fixed points";
  return {"dcc_exhaustive", increases == 0 && non_optimal == 0, os.str()};
}

/// solve_w: normal-equation residual ≤ 1e-8 relative and no random
/// perturbation lowers the W-subproblem objective.
inline CheckResult w_optimality(const Options& opt, std::size_t instances = 5) {
  Rng rng(derive_seed(opt.seed, 14));
  double worst_residual = 0.0;
  std::size_t lowered = 0;
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t n = 5 + rng.below(20), m = 1 + rng.below(n);
    const std::size_t k = 1 + rng.below(8), c = 1 + rng.below(4);
    auto ti = reference::random_tiny_instance(rng.next_u64(), n, m, k, c);
    ti.hp = detail::tiny_params(rng, k, m, trial % 2 == 1);
    const MaskedOutputs masked = mask_outputs(ti.v, ti.t, ti.sim);
    const CodeMatrix b = CodeMatrix::from_real(ti.b);
    const Matrix w = solve_w(ti.v, ti.t, masked, b, ti.label_matrix, ti.hp);

    const WSystem sys = w_normal_equations(ti.v, ti.t, masked, ti.b, ti.label_matrix, ti.hp);
    Matrix resid = reference::matmul(sys.lhs, w);
    axpy(-1.0, sys.rhs, resid);
    worst_residual = std::max(worst_residual, std::sqrt(frobenius_sq(resid)) /
                                                  std::max(1e-300, std::sqrt(frobenius_sq(sys.rhs))));

    const double best = w_subproblem_objective(w, ti.v, ti.t, ti.b, ti.label_matrix, ti.sim, ti.hp);
    for (int p = 0; p < 100; ++p) {
      Matrix w2 = w;
      const double eps = std::pow(10.0, -1.0 - 4.0 * rng.uniform());
      for (double& x : w2.data()) x += eps * rng.normal();
      if (w_subproblem_objective(w2, ti.v, ti.t, ti.b, ti.label_matrix, ti.sim, ti.hp) < best)
        ++lowered;
    }
  }
  std::ostringstream os;
  os << instances << " systems, max relative residual " << worst_residual
     << " (tol 1e-8), " << lowered << " of " << 100 * instances
     << " perturbations lowered the objective";
  return {"w_normal_equations", worst_residual <= 1e-8 && lowered == 0, os.str()};
}

/// MAP, P@n and PR curve against brute-force reimplementations on random
/// 30-item indexes, plus the hand case [1, 0, 1] → 5/6.
inline CheckResult metric_oracles(const Options& opt, std::size_t instances = 5) {
  Rng rng(derive_seed(opt.seed, 15));
  double worst = 0.0;
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t n = 30, k = 4 + rng.below(13), c = 2 + rng.below(4), nq = 8;
    Matrix codes(n, k), labels(n, c);
    std::vector<std::vector<double>> ref_db(n, std::vector<double>(k));
    std::vector<std::vector<std::uint8_t>> ref_labels(n, std::vector<std::uint8_t>(c, 0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < k; ++p) ref_db[i][p] = codes(i, p) = rng.coin() ? 1.0 : -1.0;
      ref_labels[i][rng.below(c)] = 1;
      for (std::size_t q = 0; q < c; ++q) labels(i, q) = ref_labels[i][q];
    }
    const RetrievalIndex index(CodeMatrix::from_real(codes), labels);
    std::vector<Query> queries;
    std::vector<reference::RefQuery> ref_queries;
    for (std::size_t qi = 0; qi < nq; ++qi) {
      reference::RefQuery rq{std::vector<double>(k), std::vector<std::uint8_t>(c, 0)};
      for (double& x : rq.code) x = rng.coin() ? 1.0 : -1.0;
      rq.labels[rng.below(c)] = 1;
      queries.push_back({PackedCode::from_signs(rq.code), rq.labels});
      ref_queries.push_back(std::move(rq));
    }
    worst = std::max(worst, std::abs(mean_average_precision(index, queries) -
                                     reference::mean_average_precision(ref_db, ref_labels, ref_queries)));
    for (std::size_t cut : {std::size_t{1}, std::size_t{5}, std::size_t{17}, n})
      worst = std::max(worst, std::abs(precision_at(index, queries, cut) -
                                       reference::precision_at(ref_db, ref_labels, ref_queries, cut)));
    const auto curve = pr_curve(index, queries);
    const auto ref_curve = reference::pr_curve(ref_db, ref_labels, ref_queries, k);
    for (std::size_t r = 0; r <= k; ++r) {
      worst = std::max(worst, std::abs(curve[r].precision - ref_curve[r].first));
      worst = std::max(worst, std::abs(curve[r].recall - ref_curve[r].second));
    }
  }

  // Hand case: query code 0b00 against codes at distance 0, 1, 2 with
  // relevance [1, 0, 1].
  const Matrix codes{{-1, -1}, {1, -1}, {1, 1}};
  const Matrix labels{{1, 0}, {0, 1}, {1, 0}};
  const RetrievalIndex hand(CodeMatrix::from_real(codes), labels);
  const Query q{PackedCode::from_signs(std::vector<double>{-1, -1}), {1, 0}};
  const double ap = average_precision(hand, q);
  const bool hand_ok = std::abs(ap - 5.0 / 6.0) <= 1e-15;  // 1 ulp from rounding

  std::ostringstream os;
  os << instances << " random 30-item indexes, max deviation " << worst
     << " (tol 1e-12); AP[1,0,1] = " << ap << (hand_ok ? " == 5/6" : " != 5/6");
  return {"metric_oracles", worst <= 1e-12 && hand_ok, os.str()};
}

/// sign(0) = −1 for query hashing; DCC ties (zero coefficient) give +1.
inline CheckResult sign_convention(const Options&) {
  MlpParams zero = init_params(hash_encoder_spec(3, 4, 5), 1);
  for (auto& l : zero.layers)
    for (double& w : l.weight.data()) w = 0.0;
  const PackedCode code = hash_query(zero, std::vector<double>{0.3, -1.0, 2.0});
  bool ok = true;
  for (std::size_t j = 0; j < code.k; ++j) ok &= code.sign(j) == -1.0;

  // Every coefficient of the column is zero: V = T = W = D = 0.
  HyperParams hp;
  hp.k = 2;
  hp.m = 1;
  SimilarityView sim{{0}, Matrix{{1.0, -1.0, 1.0}}, 0.5};
  const Matrix zero_out(1, 2), zero_w(2, 2), zero_d(2, 3);
  CodeMatrix b = CodeMatrix::from_real(Matrix{{-1, -1}, {-1, 1}, {1, -1}});
  b = dcc_update_bit(std::move(b), 0, zero_out, zero_out, zero_w, zero_d, sim, hp);
  for (std::size_t j = 0; j < 3; ++j) ok &= b(j, 0) == 1.0;
  return {"sign_convention", ok,
          ok ? "sign(0) = -1 in hash_query; DCC tie resolves to +1"
             : "sign convention violated"};
}

inline std::vector<CheckResult> run_all(const Options& opt = {}) {
  return {output_gradients(opt), encoder_gradients(opt), dcc_exhaustive(opt),
          w_optimality(opt), metric_oracles(opt), sign_convention(opt)};
}

}  // namespace xmhash::selfcheck
