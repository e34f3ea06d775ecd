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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "xmhash/synthetic.hpp"
#include "xmhash/trainer.hpp"

namespace xmhash {
namespace {

namespace fs = std::filesystem;

SyntheticData small_data(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.per_cluster = 12;
  spec.d_x = 8;
  spec.d_y = 24;
  spec.seed = seed;
  return generate_synthetic(spec);
}

HyperParams small_params() {
  HyperParams hp;
  hp.k = 8;
  hp.m = 12;
  hp.t_out = 3;
  hp.t_in = 2;
  hp.batch = 5;
  hp.hidden_img = 10;
  hp.hidden_txt = 12;
  return hp;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xmhash_trainer_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TEST(Trainer, InitStateIsDeterministic) {
  const auto data = small_data();
  const HyperParams hp = small_params();
  const ModelState a = init_state(data.database, hp, 5);
  EXPECT_EQ(a, init_state(data.database, hp, 5));
  EXPECT_NE(a.b, init_state(data.database, hp, 6).b);
  EXPECT_EQ(a.w, Matrix(hp.k, data.database.c()));
  EXPECT_EQ(a.iterations_done, 0u);
  EXPECT_NO_THROW(validate_hash_encoder(a.theta, hp.k));
  EXPECT_NO_THROW(validate_hash_encoder(a.psi, hp.k));
  EXPECT_EQ(a.theta.input_dim(), 8u);
  EXPECT_EQ(a.psi.input_dim(), 24u);
}

TEST(Trainer, InitialCodesAreZeroCentered) {
  const std::size_t n = 10000;
  std::vector<InstanceRecord> recs(n, InstanceRecord{{0.0}, {}, {1, 0}});
  const Dataset ds(1, 1, 2, std::move(recs));
  HyperParams hp = small_params();
  hp.m = 1;
  const ModelState s = init_state(ds, hp, 3);
  for (std::size_t p = 0; p < hp.k; ++p) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += s.b(i, p);
    EXPECT_LE(std::abs(mean / n), 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST(Trainer, RejectsQuerySampleLargerThanDatabase) {
  const auto data = small_data();
  HyperParams hp = small_params();
  hp.m = data.database.n() + 1;
  EXPECT_THROW(init_state(data.database, hp, 1), ContractViolation);
}

TEST(Trainer, ZeroLearningRateLeavesEncodersUnchanged) {
  const auto data = small_data();
  HyperParams hp = small_params();
  hp.lr_img = 0.0;
  hp.lr_txt = 0.0;
  ModelState s = init_state(data.database, hp, 2);
  const ModelState before = s;
  const TrainingContext ctx(data.database);
  const SimilarityView sim = sample_query_set(data.database, hp.m, 9, ctx.neg_weight);
  const Matrix t = query_outputs(s, data.database, sim, Modality::kText);
  train_epoch_image(s, ctx, sim, t, hp, 1);
  const Matrix v = query_outputs(s, data.database, sim, Modality::kImage);
  train_epoch_text(s, ctx, sim, v, hp, 2);
  EXPECT_EQ(s, before);
}

TEST(Trainer, SingleRowStepEqualsComposedOracle) {
  const auto data = small_data();
  HyperParams hp = small_params();
  hp.m = 1;
  const TrainingContext ctx(data.database);
  const SimilarityView sim = sample_query_set(data.database, 1, 4, ctx.neg_weight);
  const std::vector<std::size_t> row{sim.query_index[0]};

  for (Modality which : {Modality::kImage, Modality::kText}) {
    ModelState s = init_state(data.database, hp, 3);
    s.w = Matrix(hp.k, 3, 0.1);
    const bool image = which == Modality::kImage;
    const MlpParams& enc = image ? s.theta : s.psi;
    const Matrix x = image ? data.database.image_matrix(row) : data.database.text_matrix(row);
    auto [self, trace] = forward(enc, x);
    const Matrix other = query_outputs(s, data.database, sim,
                                       image ? Modality::kText : Modality::kImage);
    const auto g = image ? grad_v(0, self, other, s.b.real(), s.w, sim, ctx.labels, hp)
                         : grad_t(0, other, self, s.b.real(), s.w, sim, ctx.labels, hp);
    Matrix seed(1, hp.k);
    for (std::size_t p = 0; p < hp.k; ++p) seed(0, p) = g[p] * detail::loss_scale(1, sim.n());
    const MlpParams expected =
        sgd_step(enc, backward(enc, trace, seed), image ? hp.lr_img : hp.lr_txt);

    if (image)
      train_epoch_image(s, ctx, sim, other, hp, 7);
    else
      train_epoch_text(s, ctx, sim, other, hp, 7);
    EXPECT_EQ(image ? s.theta : s.psi, expected);
  }
}

TEST(Trainer, EncoderTermsDecreaseOnSeparableInstance) {
  SyntheticSpec spec;
  spec.per_cluster = 8;
  spec.d_x = 6;
  spec.d_y = 12;
  spec.noise = 0.0;
  spec.mix_prob = 0.0;
  spec.seed = 2;
  const auto data = generate_synthetic(spec);
  HyperParams hp = small_params();
  hp.m = 8;
  ModelState s = init_state(data.database, hp, 4);
  const TrainingContext ctx(data.database);
  const SimilarityView sim = sample_query_set(data.database, hp.m, 3, ctx.neg_weight);

  auto image_terms = [&](const Matrix& v, const Matrix& t) {
    const auto l = eval_objective(v, t, s.b.real(), s.w, sim, ctx.labels, hp);
    return l.vb_term + hp.mu * l.vt_term + hp.alpha * l.cls_v + hp.gamma * l.consistency;
  };
  auto text_terms = [&](const Matrix& v, const Matrix& t) {
    const auto l = eval_objective(v, t, s.b.real(), s.w, sim, ctx.labels, hp);
    return l.tb_term + hp.mu * l.vt_term + hp.alpha * l.cls_t + hp.gamma * l.consistency;
  };

  const Matrix t = query_outputs(s, data.database, sim, Modality::kText);
  const double v_start = image_terms(query_outputs(s, data.database, sim, Modality::kImage), t);
  for (int e = 0; e < 50; ++e) train_epoch_image(s, ctx, sim, t, hp, e);
  const Matrix v = query_outputs(s, data.database, sim, Modality::kImage);
  EXPECT_LT(image_terms(v, t), v_start);

  const double t_start = text_terms(v, t);
  for (int e = 0; e < 50; ++e) train_epoch_text(s, ctx, sim, v, hp, 100 + e);
  EXPECT_LT(text_terms(v, query_outputs(s, data.database, sim, Modality::kText)), t_start);
}

TEST(Trainer, NoInnerEpochsStillUpdatesCodesAndW) {
  const auto data = small_data();
  HyperParams hp = small_params();
  hp.t_in = 0;
  hp.t_out = 1;
  const ModelState init = init_state(data.database, hp, 8);
  const auto r = train(data.database, hp, 8);
  EXPECT_EQ(r.state.theta, init.theta);
  EXPECT_EQ(r.state.psi, init.psi);
  EXPECT_NE(r.state.b, init.b);
  EXPECT_NE(r.state.w, init.w);
  ASSERT_EQ(r.log.size(), 1u);
}

TEST(Trainer, NoOuterIterationsReturnsInitialState) {
  const auto data = small_data();
  HyperParams hp = small_params();
  hp.t_out = 0;
  const auto r = train(data.database, hp, 8);
  EXPECT_EQ(r.state, init_state(data.database, hp, 8));
  EXPECT_TRUE(r.log.empty());
}

TEST(Trainer, DeterministicPerSeed) {
  const auto data = small_data();
  const HyperParams hp = small_params();
  const auto a = train(data.database, hp, 11);
  const auto b = train(data.database, hp, 11);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(log_to_json(a.log).dump(), log_to_json(b.log).dump());
  EXPECT_NE(train(data.database, hp, 12).state.b, a.state.b);
}

TEST(Trainer, BlockStepsNeverIncreaseObjective) {
  const auto data = small_data(4);
  HyperParams hp = small_params();
  hp.t_out = 6;
  const auto r = train(data.database, hp, 2);
  ASSERT_EQ(r.log.size(), 6u);
  for (const auto& rec : r.log) {
    EXPECT_EQ(rec.monotonicity_violations, 0u) << "iteration " << rec.iteration;
    EXPECT_LE(rec.total_after_b, rec.total_before_b * (1 + 1e-10));
    EXPECT_LE(rec.total_after_w, rec.total_after_b * (1 + 1e-10));
    EXPECT_EQ(rec.objective.total, rec.total_after_w);
    EXPECT_EQ(rec.phi_seed, seeds::phi(2, rec.iteration));
  }
  for (double x : r.state.b.real().data()) EXPECT_TRUE(x == 1.0 || x == -1.0);
  EXPECT_TRUE(all_finite(r.state.w));
}

TEST(Trainer, CheckpointRoundTrip) {
  const auto data = small_data();
  const HyperParams hp = small_params();
  const auto r = train(data.database, hp, 3);
  const fs::path dir = temp_dir("roundtrip");
  save_checkpoint(dir, r.state, r.log, hp, data.database.label_matrix());
  const Checkpoint c = load_checkpoint(dir);
  EXPECT_EQ(c.state, r.state);
  EXPECT_EQ(c.log, r.log);
  EXPECT_EQ(c.hp, hp);
  EXPECT_EQ(c.db_labels, data.database.label_matrix());
  fs::remove_all(dir);
}

TEST(Trainer, ResumeEqualsUninterruptedRun) {
  const auto data = small_data(6);
  HyperParams hp = small_params();
  hp.t_out = 4;
  const auto full = train(data.database, hp, 21);

  HyperParams first = hp;
  first.t_out = 2;
  const auto part = train(data.database, first, 21);
  const fs::path dir = temp_dir("resume");
  save_checkpoint(dir, part.state, part.log, first, data.database.label_matrix());
  Checkpoint c = load_checkpoint(dir);
  resume_training(c.state, c.log, data.database, hp);
  EXPECT_EQ(c.state, full.state);
  EXPECT_EQ(c.log, full.log);

  const fs::path dir_full = temp_dir("resume_full");
  const fs::path dir_resumed = temp_dir("resume_resumed");
  save_checkpoint(dir_full, full.state, full.log, hp, data.database.label_matrix());
  save_checkpoint(dir_resumed, c.state, c.log, hp, data.database.label_matrix());
  for (const char* f : {"image_encoder.bin", "text_encoder.bin", "codes.bin", "w.bin",
                        "db_labels.bin", "train_log.json", "state.json"})
    EXPECT_EQ(slurp(dir_full / f), slurp(dir_resumed / f)) << f;
  for (const auto& d : {dir, dir_full, dir_resumed}) fs::remove_all(d);
}

TEST(Trainer, MissingOrInconsistentCheckpointThrows) {
  EXPECT_THROW(load_checkpoint(temp_dir("missing")), IoError);

  const auto data = small_data();
  const HyperParams hp = small_params();
  const auto r = train(data.database, hp, 3);
  const fs::path dir = temp_dir("corrupt");
  save_checkpoint(dir, r.state, r.log, hp, data.database.label_matrix());
  {
    std::ofstream os(dir / "state.json");
    os << "{\"seed\": 3}";
  }
  EXPECT_THROW(load_checkpoint(dir), ParseError);
  save_checkpoint(dir, r.state, r.log, hp, Matrix(5, 3));
  EXPECT_THROW(load_checkpoint(dir), ParseError);
  fs::remove_all(dir);
}

TEST(Trainer, IterationCallbackSeesEveryRecord) {
  const auto data = small_data();
  const HyperParams hp = small_params();
  std::vector<std::size_t> seen;
  TrainOptions opts;
  opts.on_iteration = [&](const IterationRecord& r) {
    seen.push_back(r.iteration);
    EXPECT_GE(r.elapsed_seconds, 0.0);
  };
  train(data.database, hp, 1, opts);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
}

}  // namespace
}  // namespace xmhash
