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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmhash/dataset.hpp"
#include "xmhash/encoders.hpp"
#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/objective.hpp"
#include "xmhash/rng.hpp"
#include "xmhash/solvers.hpp"

namespace xmhash {

struct ModelState {
  MlpParams theta;  // image encoder
  MlpParams psi;    // text encoder
  CodeMatrix b;     // unified database codes, n×k
  Matrix w;         // classifier, k×c
  std::uint64_t seed = 0;
  std::size_t iterations_done = 0;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// One completed outer iteration. Totals around the B and W steps are the
/// full objective at the iteration's final V and T.
struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  std::uint64_t phi_seed = 0;
  LossBreakdown objective;    // after the W step
  double total_before_b = 0.0;
  double total_after_b = 0.0;
  double total_after_w = 0.0;
  std::size_t monotonicity_violations = 0;
  double elapsed_seconds = 0.0;  // wall clock; excluded from equality and JSON
};

inline bool operator==(const IterationRecord& a, const IterationRecord& b) {
  return a.iteration == b.iteration && a.phi_seed == b.phi_seed &&
         a.objective == b.objective && a.total_before_b == b.total_before_b &&
         a.total_after_b == b.total_after_b &&
         a.total_after_w == b.total_after_w &&
         a.monotonicity_violations == b.monotonicity_violations;
}

using TrainLog = std::vector<IterationRecord>;

inline nlohmann::json to_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"phi_seed", r.phi_seed},
          {"objective", r.objective},
          {"total_before_b", r.total_before_b},
          {"total_after_b", r.total_after_b},
          {"total_after_w", r.total_after_w},
          {"monotonicity_violations", r.monotonicity_violations}};
}

inline IterationRecord record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.phi_seed = j.at("phi_seed").get<std::uint64_t>();
  r.objective = j.at("objective").get<LossBreakdown>();
  r.total_before_b = j.at("total_before_b").get<double>();
  r.total_after_b = j.at("total_after_b").get<double>();
  r.total_after_w = j.at("total_after_w").get<double>();
  r.monotonicity_violations = j.at("monotonicity_violations").get<std::size_t>();
  return r;
}

struct TrainOptions {
  /// Evaluate the B-subproblem after every column update and the full
  /// objective around the B and W steps; count any increase.
  bool check_monotonicity = true;
  /// Relative slack for the monotonicity comparison (floating-point noise).
  double monotonicity_rtol = 1e-10;
  std::function<void(const IterationRecord&)> on_iteration;
};

/// Inputs shared by every outer iteration.
struct TrainingContext {
  const Dataset& data;
  Matrix labels;      // n×c
  double neg_weight;  // from the full similarity matrix

  explicit TrainingContext(const Dataset& ds)
      : data(ds), labels(ds.label_matrix()), neg_weight(imbalance_weight(ds)) {}
};

namespace seeds {
inline std::uint64_t phi(std::uint64_t seed, std::size_t iteration) {
  return derive_seed(seed, 0x100000000ULL + iteration);
}
inline std::uint64_t epoch(std::uint64_t seed, std::size_t iteration,
                           std::size_t inner, int modality) {
  return derive_seed(seed, (std::uint64_t{iteration} << 24) ^
                               (std::uint64_t{inner} << 2) ^
                               static_cast<std::uint64_t>(modality + 1));
}
}  // namespace seeds

inline void check_dims(const Dataset& ds, const HyperParams& hp) {
  validate(hp);
  detail::require(ds.n() >= 1, "training needs a non-empty dataset");
  detail::require(hp.m <= ds.n(), "query sample size m exceeds n");
}

/// Xavier-initialized encoders, B uniform on {-1,+1}, W = 0.
inline ModelState init_state(const Dataset& ds, const HyperParams& hp,
                             std::uint64_t seed) {
  check_dims(ds, hp);
  ModelState s;
  s.seed = seed;
  s.theta = init_params(hash_encoder_spec(ds.d_x(), hp.hidden_img, hp.k),
                        derive_seed(seed, 1));
  s.psi = init_params(hash_encoder_spec(ds.d_y(), hp.hidden_txt, hp.k),
                      derive_seed(seed, 2));
  s.b = random_codes(ds.n(), hp.k, derive_seed(seed, 3));
  s.w = Matrix(hp.k, ds.c());
  return s;
}

enum class Modality { kImage = 0, kText = 1 };

/// Encoder outputs for the query rows of `sim`.
inline Matrix query_outputs(const ModelState& s, const Dataset& ds,
                            const SimilarityView& sim, Modality which) {
  if (which == Modality::kImage)
    return forward(s.theta, ds.image_matrix(sim.query_index)).first;
  return forward(s.psi, ds.text_matrix(sim.query_index)).first;
}

namespace detail {

inline std::vector<std::size_t> shuffled_rows(std::size_t m, std::uint64_t seed) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// Encoder steps descend the batch loss averaged over its query rows and
/// database columns, so learning rates do not depend on n or batch size.
inline double loss_scale(std::size_t batch_rows, std::size_t n) {
  return 1.0 / (static_cast<double>(batch_rows) * static_cast<double>(n));
}

/// One epoch of mini-batch SGD on one encoder. `self` holds the current
/// outputs of the modality being trained (rows are refreshed per batch);
/// `other` is the frozen opposite modality.
inline void train_epoch(ModelState& s, const TrainingContext& ctx,
                        const SimilarityView& sim, Matrix self,
                        const Matrix& other, const HyperParams& hp,
                        Modality which, std::uint64_t epoch_seed) {
  MlpParams& params = which == Modality::kImage ? s.theta : s.psi;
  const double lr = which == Modality::kImage ? hp.lr_img : hp.lr_txt;
  const std::vector<std::size_t> order = shuffled_rows(sim.m(), epoch_seed);

  for (std::size_t start = 0; start < order.size(); start += hp.batch) {
    const std::size_t stop = std::min(order.size(), start + hp.batch);
    const std::span<const std::size_t> rows(order.data() + start, stop - start);
    std::vector<std::size_t> db_rows(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      db_rows[r] = sim.query_index[rows[r]];

    const Matrix inputs = which == Modality::kImage
                              ? ctx.data.image_matrix(db_rows)
                              : ctx.data.text_matrix(db_rows);
    auto [outputs, trace] = forward(params, inputs);

    Matrix output_grad(rows.size(), hp.k);
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::ranges::copy(outputs.row(r), self.row(rows[r]).begin());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto g = query_row_gradient(rows[r], self, other, s.b.real(), s.w,
                                        sim, ctx.labels, hp);
      std::ranges::copy(g, output_grad.row(r).begin());
    }
    const double scale = loss_scale(rows.size(), sim.n());
    for (double& g : output_grad.data()) g *= scale;
    params = sgd_step(std::move(params), backward(params, trace, output_grad), lr);
  }
}

inline bool increased(double before, double after, double rtol) {
  return after > before + rtol * std::max(1.0, std::abs(before));
}

}  // namespace detail

/// Θ epoch with Ψ, B and W fixed; T holds the text outputs on Φ.
inline void train_epoch_image(ModelState& s, const TrainingContext& ctx,
                              const SimilarityView& sim, const Matrix& t,
                              const HyperParams& hp, std::uint64_t epoch_seed) {
  Matrix v(sim.m(), hp.k);
  detail::train_epoch(s, ctx, sim, std::move(v), t, hp, Modality::kImage,
                      epoch_seed);
}

/// Ψ epoch with Θ, B and W fixed; V holds the image outputs on Φ.
inline void train_epoch_text(ModelState& s, const TrainingContext& ctx,
                             const SimilarityView& sim, const Matrix& v,
                             const HyperParams& hp, std::uint64_t epoch_seed) {
  Matrix t(sim.m(), hp.k);
  detail::train_epoch(s, ctx, sim, std::move(t), v, hp, Modality::kText,
                      epoch_seed);
}

/// Sample Φ; t_in rounds of (image epoch, text epoch); DCC sweep on B;
/// closed-form W; log the objective after the W step.
inline IterationRecord outer_iteration(ModelState& s, const TrainingContext& ctx,
                                       const HyperParams& hp,
                                       const TrainOptions& opts = {}) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t iteration = s.iterations_done + 1;
  IterationRecord rec;
  rec.iteration = iteration;
  rec.phi_seed = seeds::phi(s.seed, iteration);

  const SimilarityView sim =
      sample_query_set(ctx.data, hp.m, rec.phi_seed, ctx.neg_weight);

  for (std::size_t inner = 0; inner < hp.t_in; ++inner) {
    const Matrix t = query_outputs(s, ctx.data, sim, Modality::kText);
    train_epoch_image(s, ctx, sim, t, hp, seeds::epoch(s.seed, iteration, inner, 0));
    const Matrix v = query_outputs(s, ctx.data, sim, Modality::kImage);
    train_epoch_text(s, ctx, sim, v, hp, seeds::epoch(s.seed, iteration, inner, 1));
  }

  const Matrix v = query_outputs(s, ctx.data, sim, Modality::kImage);
  const Matrix t = query_outputs(s, ctx.data, sim, Modality::kText);
  const MaskedOutputs masked = mask_outputs(v, t, sim);
  const Matrix d = build_d_matrix(v, t, masked, s.w, ctx.labels, sim, hp);

  rec.total_before_b = eval_objective(v, t, s.b.real(), s.w, sim, ctx.labels, hp).total;
  if (opts.check_monotonicity) {
    double prev = b_subproblem_objective(s.b.real(), v, t, s.w, d, sim, hp);
    s.b = update_b(std::move(s.b), v, t, s.w, d, sim, hp,
                   [&](std::size_t, const CodeMatrix& b) {
                     const double now =
                         b_subproblem_objective(b.real(), v, t, s.w, d, sim, hp);
                     if (detail::increased(prev, now, opts.monotonicity_rtol))
                       ++rec.monotonicity_violations;
                     prev = now;
                   });
  } else {
    s.b = update_b(std::move(s.b), v, t, s.w, d, sim, hp);
  }
  rec.total_after_b = eval_objective(v, t, s.b.real(), s.w, sim, ctx.labels, hp).total;

  s.w = solve_w(v, t, masked, s.b, ctx.labels, hp);
  rec.objective = eval_objective(v, t, s.b.real(), s.w, sim, ctx.labels, hp);
  rec.total_after_w = rec.objective.total;

  if (detail::increased(rec.total_before_b, rec.total_after_b, opts.monotonicity_rtol))
    ++rec.monotonicity_violations;
  if (detail::increased(rec.total_after_b, rec.total_after_w, opts.monotonicity_rtol))
    ++rec.monotonicity_violations;
  detail::require(all_finite(s.w), "outer_iteration: W became non-finite");

  s.iterations_done = iteration;
  rec.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return rec;
}

/// Continues from `state` until hp.t_out outer iterations are done,
/// appending to `log`.
inline void resume_training(ModelState& state, TrainLog& log, const Dataset& ds,
                            const HyperParams& hp, const TrainOptions& opts = {}) {
  check_dims(ds, hp);
  const TrainingContext ctx(ds);
  while (state.iterations_done < hp.t_out) {
    log.push_back(outer_iteration(state, ctx, hp, opts));
    if (opts.on_iteration) opts.on_iteration(log.back());
  }
}

struct TrainResult {
  ModelState state;
  TrainLog log;
};

inline TrainResult train(const Dataset& ds, const HyperParams& hp,
                         std::uint64_t seed, const TrainOptions& opts = {}) {
  TrainResult r{init_state(ds, hp, seed), {}};
  resume_training(r.state, r.log, ds, hp, opts);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint directory layout:
//   image_encoder.bin, text_encoder.bin  encoder checkpoints
//   codes.bin                            packed database codes
//   w.bin                                classifier (Matrix format)
//   db_labels.bin                        database labels (Matrix format)
//   train_log.json                       per-iteration records
//   state.json                           seed, progress, hyper-parameters

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("missing checkpoint artifact: " + p.string());
  return is;
}

}  // namespace detail

inline nlohmann::json log_to_json(const TrainLog& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : log) arr.push_back(to_json(r));
  return arr;
}

inline void save_checkpoint(const std::filesystem::path& dir,
                            const ModelState& s, const TrainLog& log,
                            const HyperParams& hp, const Matrix& db_labels) {
  std::filesystem::create_directories(dir);
  { auto os = detail::open_out(dir / "image_encoder.bin"); write_params(os, s.theta); }
  { auto os = detail::open_out(dir / "text_encoder.bin"); write_params(os, s.psi); }
  { auto os = detail::open_out(dir / "codes.bin"); write_codes(os, s.b); }
  { auto os = detail::open_out(dir / "w.bin"); write_matrix(os, s.w); }
  { auto os = detail::open_out(dir / "db_labels.bin"); write_matrix(os, db_labels); }
  {
    auto os = detail::open_out(dir / "train_log.json");
    os << log_to_json(log).dump(2) << '\n';
  }
  {
    auto os = detail::open_out(dir / "state.json");
    os << nlohmann::json{{"seed", s.seed},
                         {"iterations_done", s.iterations_done},
                         {"hyper_params", hp}}
              .dump(2)
       << '\n';
  }
}

struct Checkpoint {
  ModelState state;
  TrainLog log;
  HyperParams hp;
  Matrix db_labels;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint c;
  { auto is = detail::open_in(dir / "image_encoder.bin"); c.state.theta = read_params(is); }
  { auto is = detail::open_in(dir / "text_encoder.bin"); c.state.psi = read_params(is); }
  { auto is = detail::open_in(dir / "codes.bin"); c.state.b = read_codes(is); }
  { auto is = detail::open_in(dir / "w.bin"); c.state.w = read_matrix(is); }
  { auto is = detail::open_in(dir / "db_labels.bin"); c.db_labels = read_matrix(is); }
  try {
    auto is = detail::open_in(dir / "state.json");
    const auto j = nlohmann::json::parse(is);
    c.state.seed = j.at("seed").get<std::uint64_t>();
    c.state.iterations_done = j.at("iterations_done").get<std::size_t>();
    c.hp = j.at("hyper_params").get<HyperParams>();
    auto ls = detail::open_in(dir / "train_log.json");
    for (const auto& r : nlohmann::json::parse(ls)) c.log.push_back(record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  validate_hash_encoder(c.state.theta, c.hp.k);
  validate_hash_encoder(c.state.psi, c.hp.k);
  if (c.state.b.k() != c.hp.k || c.db_labels.rows() != c.state.b.n() ||
      c.state.w.rows() != c.hp.k || c.state.w.cols() != c.db_labels.cols())
    throw ParseError("checkpoint artifacts have inconsistent shapes");
  return c;
}

}  // namespace xmhash
