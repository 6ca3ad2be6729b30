// tests/acceptance_experiments.cpp

// Copyright 2026  avsep contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Slow half of the acceptance gate: trains the proposed system and the
// MSE-only ablation on the synthetic corpus through the command layer,
// then checks the correspondence-angle separation and the separation
// quality ordering on the held-out test split. Each test case prints one
// PASS/FAIL line. Expect tens of minutes on one CPU core.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "avsep/cli/commands.hpp"
#include "avsep/train/trainer.hpp"

using namespace avsep;
namespace train = avsep::train;
namespace fs = std::filesystem;

namespace {

class CriterionReporter : public Catch::EventListenerBase {
 public:
  using Catch::EventListenerBase::EventListenerBase;
  void testCaseEnded(const Catch::TestCaseStats& stats) override {
    const std::string& name = stats.testInfo->name;
    if (name.rfind("criterion", 0) != 0) return;
    std::printf("%s: %s\n", name.c_str(),
                stats.totals.assertions.allOk() ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
};

struct BudgetGuard {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double budget_s;
  explicit BudgetGuard(double s) : budget_s(s) {}
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

/// One desk-scale recipe for both arms; only method and lambda differ.
/// Validation selects on the MSE component so the checkpoint with the best
/// separation wins even while the correspondence term still moves; with
/// the combined loss a lambda=1 run picks epochs with strong embeddings
/// and untrained masks.
train::TrainConfig experiment_cfg() {
  train::TrainConfig cfg;
  cfg.method = "proposed";
  cfg.lambda = 1.0;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 130;
  cfg.patience_epochs = 15;
  cfg.seed = 7;
  cfg.validate_mse_only = true;
  cfg.segment_seconds = 1.0;
  cfg.train_samples = 512;
  cfg.val_samples = 32;
  cfg.test_samples = 16;
  cfg.num_speakers = 32;
  return cfg;
}

/// Both arms trained once, shared by the two criteria below.
struct Experiment {
  TempDir dir{"avsep_acceptance_experiments"};
  train::TrainConfig cfg = experiment_cfg();
  std::string proposed_ckpt;
  std::string baseline_ckpt;
  cli::AnalyzeOutcome angles;
};

const Experiment& experiment() {
  static Experiment e;
  static const bool built = [] {
    std::ostringstream log;
    std::ostringstream warn;
    const auto t0 = std::chrono::steady_clock::now();
    e.proposed_ckpt =
        cli::cmd_train(e.cfg, (e.dir.path / "proposed").string(), log, warn)
            .checkpoint_path;
    train::TrainConfig base = e.cfg;
    base.method = "av_baseline";
    base.lambda = 0.0;
    e.baseline_ckpt =
        cli::cmd_train(base, (e.dir.path / "baseline").string(), log, warn)
            .checkpoint_path;
    cli::AnalyzeArgs args;
    args.proposed_ckpt = e.proposed_ckpt;
    args.baseline_ckpt = e.baseline_ckpt;
    args.no_plot = false;
    e.angles = cli::cmd_analyze_correspondence(
        e.cfg, args, (e.dir.path / "angles").string(), log);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("trained both arms and analyzed in %.0f s\n%s", secs,
                log.str().c_str());
    std::fflush(stdout);
    return true;
  }();
  (void)built;
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("criterion 5: correspondence angles separate for the trained model") {
  BudgetGuard budget{3600.0};
  const Experiment& e = experiment();

  const double prop_gap =
      e.angles.proposed_negative_deg - e.angles.proposed_positive_deg;
  INFO("proposed positive mean " << e.angles.proposed_positive_deg
                                 << " deg, negative mean "
                                 << e.angles.proposed_negative_deg << " deg");
  REQUIRE(prop_gap >= 20.0);

  REQUIRE(e.angles.has_baseline);
  const double base_gap =
      e.angles.baseline_negative_deg - e.angles.baseline_positive_deg;
  INFO("baseline positive mean " << e.angles.baseline_positive_deg
                                 << " deg, negative mean "
                                 << e.angles.baseline_negative_deg << " deg");
  REQUIRE(std::abs(base_gap) < 5.0);

  std::printf(
      "angle gaps: proposed %.1f deg, baseline with borrowed head %.1f deg\n",
      prop_gap, base_gap);
  CHECK(budget.elapsed() < budget.budget_s);
}

TEST_CASE("criterion 6: separation quality ordering on the test split") {
  const Experiment& e = experiment();
  BudgetGuard budget{600.0};

  TempDir out("avsep_acceptance_eval");
  cli::EvaluateArgs args;
  args.proposed_ckpt = e.proposed_ckpt;
  args.baseline_ckpt = e.baseline_ckpt;
  std::ostringstream log;
  const metrics::EvalReport report =
      cli::cmd_evaluate(e.cfg, args, out.str(), log);

  const double mix = report.mean_sdr_db("Mixture");
  const double prop = report.mean_sdr_db("Proposed");
  const double base = report.mean_sdr_db("AV baseline");
  std::printf("%s", log.str().c_str());
  std::printf(
      "mean SDR: mixture %.2f dB, proposed %.2f dB, baseline %.2f dB; "
      "proposed-baseline gap %.2f dB (reported, not thresholded)\n",
      mix, prop, base, prop - base);
  std::fflush(stdout);

  REQUIRE(prop >= mix + 3.0);
  REQUIRE(base > mix);
  CHECK(budget.elapsed() < budget.budget_s);
}

CATCH_REGISTER_LISTENER(CriterionReporter)
