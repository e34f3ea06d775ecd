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

// xmhash command-line driver: gen-data, train, encode, eval, selfcheck.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xmhash/selfcheck.hpp"
#include "xmhash/xmhash.hpp"

namespace fs = std::filesystem;

namespace {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  const char* env = std::getenv("XMHASH_LOG");
  if (!env) return Level::kInfo;
  const std::string v = env;
  if (v == "error" || v == "quiet") return Level::kError;
  if (v == "warn") return Level::kWarn;
  if (v == "debug") return Level::kDebug;
  return Level::kInfo;
}

void log(Level level, const std::string& msg) {
  static const Level threshold = log_level();
  if (level > threshold) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[xmhash " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

std::string default_query_path(const std::string& out) {
  fs::path p(out);
  const std::string stem = p.extension() == ".jsonl" ? p.stem().string() : p.filename().string();
  return (p.parent_path() / (stem + ".query.jsonl")).string();
}

struct HpFlags {
  xmhash::HyperParams hp;
  std::string config;
};

void add_hp_flags(CLI::App* cmd, HpFlags& f) {
  auto& hp = f.hp;
  cmd->add_option("--config", f.config, "JSON file with hyper-parameter fields");
  cmd->add_option("--k", hp.k, "code length")->default_val(hp.k);
  cmd->add_option("--alpha", hp.alpha, "query classification weight")->default_val(hp.alpha);
  cmd->add_option("--beta", hp.beta, "database classification weight")->default_val(hp.beta);
  cmd->add_option("--gamma", hp.gamma, "consistency weight")->default_val(hp.gamma);
  cmd->add_option("--eta", hp.eta, "ridge weight on W")->default_val(hp.eta);
  cmd->add_option("--mu", hp.mu, "image-text inner-product weight")->default_val(hp.mu);
  cmd->add_option("--m", hp.m, "query sample size per outer iteration")->default_val(hp.m);
  cmd->add_option("--t-out", hp.t_out, "outer iterations")->default_val(hp.t_out);
  cmd->add_option("--t-in", hp.t_in, "encoder epochs per outer iteration")->default_val(hp.t_in);
  cmd->add_option("--batch", hp.batch, "mini-batch size")->default_val(hp.batch);
  cmd->add_option("--lr-img", hp.lr_img, "image encoder learning rate")->default_val(hp.lr_img);
  cmd->add_option("--lr-txt", hp.lr_txt, "text encoder learning rate")->default_val(hp.lr_txt);
  cmd->add_option("--hidden-img", hp.hidden_img, "image encoder hidden width")->default_val(hp.hidden_img);
  cmd->add_option("--hidden-txt", hp.hidden_txt, "text encoder hidden width")->default_val(hp.hidden_txt);
}

/// Config file values first, then any flag given explicitly on the command
/// line.
xmhash::HyperParams resolve_hp(CLI::App* cmd, const HpFlags& f) {
  xmhash::HyperParams hp;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw xmhash::IoError("cannot open config: " + f.config);
    try {
      hp = nlohmann::json::parse(in).get<xmhash::HyperParams>();
    } catch (const nlohmann::json::exception& e) {
      throw xmhash::ParseError("config " + f.config + ": " + e.what());
    }
  }
  auto given = [&](const char* name) { return cmd->get_option(name)->count() > 0; };
  if (given("--k")) hp.k = f.hp.k;
  if (given("--alpha")) hp.alpha = f.hp.alpha;
  if (given("--beta")) hp.beta = f.hp.beta;
  if (given("--gamma")) hp.gamma = f.hp.gamma;
  if (given("--eta")) hp.eta = f.hp.eta;
  if (given("--mu")) hp.mu = f.hp.mu;
  if (given("--m")) hp.m = f.hp.m;
  if (given("--t-out")) hp.t_out = f.hp.t_out;
  if (given("--t-in")) hp.t_in = f.hp.t_in;
  if (given("--batch")) hp.batch = f.hp.batch;
  if (given("--lr-img")) hp.lr_img = f.hp.lr_img;
  if (given("--lr-txt")) hp.lr_txt = f.hp.lr_txt;
  if (given("--hidden-img")) hp.hidden_img = f.hp.hidden_img;
  if (given("--hidden-txt")) hp.hidden_txt = f.hp.hidden_txt;
  return hp;
}

int cmd_gen_data(const xmhash::SyntheticSpec& spec, const std::string& out,
                 std::string query_out) {
  if (query_out.empty()) query_out = default_query_path(out);
  const auto data = xmhash::generate_synthetic(spec);
  xmhash::save_dataset(out, data.database);
  xmhash::save_dataset(query_out, data.queries);
  log(Level::kInfo, "wrote " + std::to_string(data.database.n()) + " database records to " +
                        out + " and " + std::to_string(data.queries.n()) + " queries to " +
                        query_out);
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out_dir,
              xmhash::HyperParams hp, std::uint64_t seed, bool resume) {
  const xmhash::Dataset ds = xmhash::load_dataset(data_path);
  if (hp.m > ds.n()) {
    log(Level::kWarn, "m=" + std::to_string(hp.m) + " exceeds n=" + std::to_string(ds.n()) +
                          "; using m=n");
    hp.m = ds.n();
  }
  xmhash::validate(hp);

  xmhash::TrainOptions opts;
  opts.on_iteration = [&](const xmhash::IterationRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "iter %zu/%zu objective %.6g (%.2fs)%s", r.iteration,
                  hp.t_out, r.objective.total, r.elapsed_seconds,
                  r.monotonicity_violations ? " MONOTONICITY VIOLATION" : "");
    log(r.monotonicity_violations ? Level::kWarn : Level::kInfo, buf);
    log(Level::kDebug, xmhash::to_json(r).dump());
  };

  xmhash::ModelState state;
  xmhash::TrainLog train_log;
  if (resume) {
    auto ckpt = xmhash::load_checkpoint(out_dir);
    if (ckpt.hp.k != hp.k || ckpt.state.b.n() != ds.n())
      throw xmhash::ContractViolation("resume: checkpoint does not match data or k");
    state = std::move(ckpt.state);
    train_log = std::move(ckpt.log);
    log(Level::kInfo, "resuming after iteration " + std::to_string(state.iterations_done));
  } else {
    state = xmhash::init_state(ds, hp, seed);
  }
  xmhash::resume_training(state, train_log, ds, hp, opts);
  xmhash::save_checkpoint(out_dir, state, train_log, hp, ds.label_matrix());
  log(Level::kInfo, "checkpoint written to " + out_dir);
  return 0;
}

int cmd_encode(const std::string& ckpt_dir, const std::string& data_path,
               const std::string& modality, const std::string& out) {
  const auto ckpt = xmhash::load_checkpoint(ckpt_dir);
  const auto ds = xmhash::load_dataset(data_path);
  const bool image = modality == "image";
  const auto idx = ds.all_indices();
  const auto codes = xmhash::hash_batch(image ? ckpt.state.theta : ckpt.state.psi,
                                        image ? ds.image_matrix(idx) : ds.text_matrix(idx));
  xmhash::CodeMatrix out_codes(codes.size(), ckpt.hp.k);
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = 0; j < ckpt.hp.k; ++j) out_codes.set(i, j, codes[i].sign(j));
  std::ofstream os(out, std::ios::binary);
  if (!os) throw xmhash::IoError("cannot write " + out);
  xmhash::write_codes(os, out_codes);
  log(Level::kInfo, "encoded " + std::to_string(codes.size()) + " " + modality +
                        " records to " + out);
  return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& query_path,
             const std::string& out, const std::string& pr_csv,
             const std::vector<std::size_t>& cutoffs) {
  const auto ckpt = xmhash::load_checkpoint(ckpt_dir);
  const auto queries = xmhash::load_dataset(query_path);
  const xmhash::RetrievalIndex index(ckpt.state.b, ckpt.db_labels);
  const auto metrics = xmhash::evaluate_cross_modal(ckpt.state.theta, ckpt.state.psi,
                                                    index, queries, cutoffs);
  const std::string text = metrics.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw xmhash::IoError("cannot write " + out);
    os << text;
  }
  if (!pr_csv.empty()) {
    std::ofstream os(pr_csv, std::ios::binary);
    if (!os) throw xmhash::IoError("cannot write " + pr_csv);
    os << "direction,radius,precision,recall\n";
    for (const char* dir : {"i2t", "t2i"})
      for (const auto& p : metrics[dir]["pr_curve"])
        os << dir << ',' << p[0].get<int>() << ',' << p[1].dump() << ',' << p[2].dump()
           << '\n';
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "MAP i2t %.4f  t2i %.4f", metrics["i2t"]["map"].get<double>(),
                metrics["t2i"]["map"].get<double>());
  log(Level::kInfo, buf);
  return 0;
}

int cmd_selfcheck(bool flip_grad_v) {
  xmhash::selfcheck::Options opt;
  opt.flip_grad_v_sign = flip_grad_v;
  bool all = true;
  for (const auto& r : xmhash::selfcheck::run_all(opt)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all &= r.passed;
  }
  std::cout << (all ? "selfcheck passed" : "selfcheck FAILED") << '\n';
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal hashing with unified database codes"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic clustered dataset");
  xmhash::SyntheticSpec spec;
  std::string gen_out, gen_query_out;
  gen->add_option("--out", gen_out, "database JSON-lines path")->required();
  gen->add_option("--query-out", gen_query_out, "held-out query path (default <out>.query.jsonl)");
  gen->add_option("--clusters", spec.clusters)->default_val(spec.clusters);
  gen->add_option("--per-cluster", spec.per_cluster)->default_val(spec.per_cluster);
  gen->add_option("--d-x", spec.d_x)->default_val(spec.d_x);
  gen->add_option("--d-y", spec.d_y)->default_val(spec.d_y);
  gen->add_option("--c", spec.c)->default_val(spec.c);
  gen->add_option("--noise", spec.noise)->default_val(spec.noise);
  gen->add_option("--mix-prob", spec.mix_prob)->default_val(spec.mix_prob);
  gen->add_option("--holdout", spec.holdout, "query count as a fraction of n")->default_val(spec.holdout);
  gen->add_option("--doc-length", spec.doc_length)->default_val(spec.doc_length);
  gen->add_option("--seed", spec.seed)->default_val(spec.seed);

  // train
  auto* train = app.add_subcommand("train", "learn codes and encoders");
  HpFlags train_hp;
  std::string train_data, train_out;
  std::uint64_t train_seed = 0;
  bool resume = false;
  train->add_option("--data", train_data, "database JSON-lines file")->required();
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--seed", train_seed)->default_val(train_seed);
  train->add_flag("--resume", resume, "continue from the checkpoint in --out up to --t-out");
  add_hp_flags(train, train_hp);

  // encode
  auto* encode = app.add_subcommand("encode", "hash records with a trained encoder");
  std::string enc_ckpt, enc_data, enc_modality = "image", enc_out;
  encode->add_option("--ckpt", enc_ckpt, "checkpoint directory")->required();
  encode->add_option("--data", enc_data, "JSON-lines records")->required();
  encode->add_option("--modality", enc_modality)->check(CLI::IsMember({"image", "text"}))
      ->default_val(enc_modality);
  encode->add_option("--out", enc_out, "code export file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "cross-modal retrieval metrics");
  std::string ev_ckpt, ev_queries, ev_out, ev_csv;
  std::vector<std::size_t> cutoffs{1, 10, 100, 1000};
  eval->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  eval->add_option("--queries,--data", ev_queries, "held-out query records")->required();
  eval->add_option("--out", ev_out, "metrics JSON path (default stdout)");
  eval->add_option("--pr-csv", ev_csv, "also write PR curves as CSV");
  eval->add_option("--p-at", cutoffs, "P@n cut-offs (values above n are skipped)")
      ->default_str("1 10 100 1000");

  // selfcheck
  auto* check = app.add_subcommand("selfcheck", "run the built-in oracle checks");
  bool flip = false;
  check->add_flag("--flip-grad-v", flip, "test hook: negate the image gradient")
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(spec, gen_out, gen_query_out);
    if (*train) return cmd_train(train_data, train_out, resolve_hp(train, train_hp),
                                 train_seed, resume);
    if (*encode) return cmd_encode(enc_ckpt, enc_data, enc_modality, enc_out);
    if (*eval) return cmd_eval(ev_ckpt, ev_queries, ev_out, ev_csv, cutoffs);
    if (*check) return cmd_selfcheck(flip);
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return 1;
  }
  return 1;
}
