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

// Acceptance harness: one PASS/FAIL line per criterion, non-zero exit if
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "xmhash/selfcheck.hpp"
#include "xmhash/synthetic.hpp"
#include "xmhash/xmhash.hpp"

namespace fs = std::filesystem;
using namespace xmhash;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double seconds,
            double budget) {
  const bool within = budget <= 0.0 || seconds < budget;
  const bool ok = o.passed && within;
  if (!ok) ++failures;
  std::printf("%s %d %s: %s [%.2fs", ok ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), seconds);
  if (budget > 0.0) std::printf(" / budget %.0fs", budget);
  std::printf("]\n");
  std::fflush(stdout);
}

Outcome timed(const std::function<Outcome()>& f, double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o = f();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return o;
}

Outcome from_checks(std::initializer_list<selfcheck::CheckResult> checks) {
  Outcome o{true, ""};
  for (const auto& c : checks) {
    o.passed &= c.passed;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += c.name + " " + c.detail;
  }
  return o;
}

// Synthetic 3-cluster run shared by the convergence, monotonicity and
// retrieval criteria.
struct SyntheticRun {
  SyntheticData data;
  TrainResult result;
  nlohmann::json metrics;
};

SyntheticSpec synthetic_spec() {
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.per_cluster = 200;
  spec.d_x = 32;
  spec.d_y = 100;
  spec.c = 3;
  return spec;
}

HyperParams synthetic_params() {
  HyperParams hp;
  hp.k = 16;
  hp.m = 200;
  return hp;
}

int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = "XMHASH_LOG=error " + std::string(XMHASH_CLI_PATH) + " " + args +
                          " > " + (dir / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main() {
  const selfcheck::Options opt;
  double secs = 0.0;

  auto c1 = timed([&] {
    return from_checks({selfcheck::output_gradients(opt, 20), selfcheck::encoder_gradients(opt, 10)});
  }, secs);
  report(1, "gradient fidelity", c1, secs, 10.0);

  auto c2 = timed([&] { return from_checks({selfcheck::dcc_exhaustive(opt, 10)}); }, secs);
  report(2, "DCC correctness", c2, secs, 30.0);

  auto c3 = timed([&] { return from_checks({selfcheck::w_optimality(opt, 10)}); }, secs);
  report(3, "W optimality", c3, secs, 5.0);

  SyntheticRun run;
  double train_secs = 0.0;
  timed([&] {
    run.data = generate_synthetic(synthetic_spec());
    run.result = train(run.data.database, synthetic_params(), 0);
    const RetrievalIndex index(run.result.state.b, run.data.database.label_matrix());
    const std::vector<std::size_t> cutoffs{1, 10, 100};
    run.metrics = evaluate_cross_modal(run.result.state.theta, run.result.state.psi, index,
                                       run.data.queries, cutoffs);
    return Outcome{};
  }, train_secs);

  {
    std::size_t violations = 0;
    for (const auto& r : run.result.log) violations += r.monotonicity_violations;
    std::ostringstream os;
    os << run.result.log.size() << " outer iterations, " << violations
       << " increases across column updates, B steps and W steps";
    report(4, "block monotonicity", {violations == 0 && !run.result.log.empty(), os.str()},
           train_secs, 0.0);
  }

  {
    const auto& log = run.result.log;
    Outcome o{false, "training log too short"};
    if (log.size() >= 10) {
      double lowest = log.front().objective.total;
      for (const auto& r : log) lowest = std::min(lowest, r.objective.total);
      const double first = log[0].objective.total, tenth = log[9].objective.total,
                   last = log.back().objective.total;
      std::ostringstream os;
      os << "objective it1 " << first << ", it10 " << tenth << ", final " << last
         << ", min " << lowest << " (final/min - 1 = " << last / lowest - 1 << ")";
      o = {tenth < first && last <= 1.05 * lowest, os.str()};
    }
    report(5, "convergence shape", o, train_secs, 120.0);
  }

  {
    const double i2t = run.metrics["i2t"]["map"].get<double>();
    const double t2i = run.metrics["t2i"]["map"].get<double>();
    std::ostringstream os;
    os << "held-out " << run.data.queries.n() << " queries: MAP I->T " << i2t << ", T->I " << t2i
       << " (threshold 0.90)";
    report(6, "retrieval quality", {i2t >= 0.90 && t2i >= 0.90, os.str()}, train_secs, 120.0);
  }

  auto c7 = timed([&] { return from_checks({selfcheck::metric_oracles(opt, 30)}); }, secs);
  report(7, "metric oracles", c7, secs, 0.0);

  auto c8 = timed([&] {
    const fs::path dir = fs::temp_directory_path() / "xmhash_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string db = (dir / "db.jsonl").string();
    const std::string queries = (dir / "db.query.jsonl").string();
    if (run_cli("gen-data --out " + db + " --seed 0", dir) != 0)
      return Outcome{false, "gen-data failed: " + slurp(dir / "cli.log")};
    for (const char* tag : {"a", "b"}) {
      const fs::path ck = dir / (std::string("ck_") + tag);
      if (run_cli("train --data " + db + " --out " + ck.string() + " --k 16 --m 200 --seed 0", dir) != 0 ||
          run_cli("encode --ckpt " + ck.string() + " --data " + queries +
                      " --modality image --out " + (dir / (std::string("img_") + tag + ".bin")).string(), dir) != 0 ||
          run_cli("encode --ckpt " + ck.string() + " --data " + queries +
                      " --modality text --out " + (dir / (std::string("txt_") + tag + ".bin")).string(), dir) != 0 ||
          run_cli("eval --ckpt " + ck.string() + " --queries " + queries + " --out " +
                      (dir / (std::string("metrics_") + tag + ".json")).string(), dir) != 0)
        return Outcome{false, "CLI run failed: " + slurp(dir / "cli.log")};
    }
    std::size_t compared = 0, differing = 0;
    auto same = [&](const fs::path& a, const fs::path& b) {
      ++compared;
      if (!fs::exists(a) || slurp(a) != slurp(b)) ++differing;
    };
    for (const auto& e : fs::directory_iterator(dir / "ck_a"))
      same(e.path(), dir / "ck_b" / e.path().filename());
    same(dir / "img_a.bin", dir / "img_b.bin");
    same(dir / "txt_a.bin", dir / "txt_b.bin");
    same(dir / "metrics_a.json", dir / "metrics_b.json");
    fs::remove_all(dir);
    std::ostringstream os;
    os << "two CLI runs: " << compared << " artifacts compared, " << differing << " differ";
    return Outcome{differing == 0 && compared == 10, os.str()};
  }, secs);
  report(8, "determinism", c8, secs, 0.0);

  auto c9 = timed([&] { return from_checks({selfcheck::sign_convention(opt)}); }, secs);
  report(9, "sign convention", c9, secs, 0.0);

  std::printf("%s: %d of 9 criteria failed\n", failures == 0 ? "ACCEPTED" : "NOT ACCEPTED",
              failures);
  return failures == 0 ? 0 : 1;
}
