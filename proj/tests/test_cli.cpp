// tests/test_cli.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avsep/cli/commands.hpp"

using namespace avsep;
namespace cli = avsep::cli;
namespace train = avsep::train;
using train::TrainConfig;
namespace fs = std::filesystem;

namespace {

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

TrainConfig cli_cfg() {
  TrainConfig cfg;
  cfg.method = "proposed";
  cfg.lambda = 1.0;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 4;
  cfg.max_epochs = 2;
  cfg.seed = 21;
  cfg.segment_seconds = 1.0;
  cfg.train_samples = 4;
  cfg.val_samples = 2;
  cfg.test_samples = 2;
  cfg.num_speakers = 4;
  cfg.video_size = 16;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

/// Checkpoints shared across the command tests; trained once.
struct Artifacts {
  TempDir dir{"avsep_cli_artifacts"};
  TrainConfig cfg = cli_cfg();
  std::string proposed_ckpt;
  std::string baseline_ckpt;
  std::string upit_ckpt;
};

const Artifacts& artifacts() {
  static Artifacts a;
  static const bool built = [] {
    a.proposed_ckpt =
        train::train(a.cfg, (a.dir.path / "proposed").string()).checkpoint_path;
    TrainConfig base = a.cfg;
    base.method = "av_baseline";
    base.lambda = 0.0;
    base.max_epochs = 1;
    a.baseline_ckpt =
        train::train(base, (a.dir.path / "baseline").string()).checkpoint_path;
    TrainConfig up = a.cfg;
    up.method = "upit";
    up.max_epochs = 1;
    a.upit_ckpt =
        train::train_upit_baseline(up, (a.dir.path / "upit").string())
            .checkpoint_path;
    return true;
  }();
  (void)built;
  return a;
}

int run_tool(const std::string& args) {
  const std::string cmd =
      std::string(AVSEP_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  REQUIRE(st != -1);
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("merge_config layers file, set pairs and the seed flag") {
  TempDir tmp("avsep_cli_merge");
  const fs::path file = tmp.path / "run.cfg";
  {
    std::ofstream out(file);
    out << "lambda = 0.25\nseed = 3\n";
  }
  cli::CommonArgs args;
  args.config_path = file.string();
  args.sets = {"lambda=0.5", " max_epochs = 7 "};

  TrainConfig cfg = cli::merge_config(args);
  CHECK(cfg.lambda == 0.5);
  CHECK(cfg.max_epochs == 7);
  CHECK(cfg.seed == 3);

  args.seed = 9;
  cfg = cli::merge_config(args);
  CHECK(cfg.seed == 9);

  cli::CommonArgs bad;
  bad.sets = {"garbage"};
  CHECK_THROWS_AS(cli::merge_config(bad), ConfigError);
  bad.sets = {"=5"};
  CHECK_THROWS_AS(cli::merge_config(bad), ConfigError);
  bad.sets = {"no_such_key=1"};
  CHECK_THROWS_AS(cli::merge_config(bad), ConfigError);
}

TEST_CASE("resolve_out_dir honors the environment override") {
  TempDir tmp("avsep_cli_env");
  REQUIRE(setenv("AVSEP_OUT_DIR", tmp.str().c_str(), 1) == 0);
  CHECK(cli::resolve_out_dir("somewhere/else") == tmp.str());
  CHECK(cli::resolve_out_dir("") == tmp.str());
  REQUIRE(unsetenv("AVSEP_OUT_DIR") == 0);
  CHECK(cli::resolve_out_dir("somewhere/else") == "somewhere/else");
  CHECK_THROWS_AS(cli::resolve_out_dir(""), ConfigError);
}

TEST_CASE("prepare_out_dir refuses a non-empty directory without force") {
  TempDir tmp("avsep_cli_prepare");
  const fs::path dir = tmp.path / "out";
  cli::prepare_out_dir(dir.string(), false);
  CHECK(fs::is_directory(dir));
  cli::prepare_out_dir(dir.string(), false);  // still empty, fine

  { std::ofstream mark(dir / "leftover.txt"); mark << "x\n"; }
  CHECK_THROWS_AS(cli::prepare_out_dir(dir.string(), false), ConfigError);
  cli::prepare_out_dir(dir.string(), true);
  CHECK(fs::exists(dir / "leftover.txt"));
}

TEST_CASE("begin_run snapshots a reparseable config") {
  TempDir tmp("avsep_cli_snapshot");
  cli::CommonArgs args;
  args.out_dir = (tmp.path / "run").string();
  args.sets = {"lambda=0.5", "seed=4"};
  const TrainConfig cfg = cli::merge_config(args);

  const std::string out = cli::begin_run(args, cfg);
  CHECK(out == args.out_dir);
  const fs::path snap = fs::path(out) / "resolved_config.txt";
  REQUIRE(fs::exists(snap));

  const TrainConfig back = train::config_from_kv(train::read_kv_file(snap.string()));
  CHECK(train::resolved_config_text(back) == train::resolved_config_text(cfg));
  CHECK(back.lambda == 0.5);
  CHECK(back.seed == 4);

  CHECK_THROWS_AS(cli::begin_run(args, cfg), ConfigError);
  args.force = true;
  CHECK(cli::begin_run(args, cfg) == out);
}

TEST_CASE("cmd_synth_data writes a loadable, deterministic corpus") {
  TrainConfig cfg = cli_cfg();
  cfg.train_samples = 2;
  cfg.val_samples = 1;
  cfg.test_samples = 1;
  cfg.segment_seconds = 0.4;
  cfg.seed = 5;

  TempDir tmp("avsep_cli_synth");
  const fs::path out1 = tmp.path / "c1";
  std::ostringstream log;
  fs::create_directories(out1);
  cli::cmd_synth_data(cfg, out1.string(), log);
  CHECK(log.str().find("2 train samples") != std::string::npos);

  for (const char* name : {"train.tsv", "val.tsv", "test.tsv"})
    REQUIRE(fs::exists(out1 / name));

  std::size_t wavs = 0, frame_dirs = 0, leftovers = 0;
  for (const auto& entry : fs::directory_iterator(out1 / "media")) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 4 && name.substr(name.size() - 4) == ".tmp") ++leftovers;
    else if (entry.is_directory()) ++frame_dirs;
    else ++wavs;
  }
  CHECK(wavs == 8);        // (2 + 1 + 1) samples, two speakers each
  CHECK(frame_dirs == 8);
  CHECK(leftovers == 0);

  // Split speaker pools never overlap.
  std::vector<std::set<std::string>> pools;
  for (const char* name : {"train", "val", "test"}) {
    const auto man = data::read_manifest((out1 / (std::string(name) + ".tsv")).string(), name);
    std::set<std::string> pool;
    for (const auto& line : man.lines)
      for (const auto& e : line) {
        CHECK(e.audio_path.rfind("media/", 0) == 0);
        pool.insert(e.speaker_id);
      }
    pools.push_back(std::move(pool));
  }
  for (std::size_t i = 0; i < pools.size(); ++i)
    for (std::size_t k = i + 1; k < pools.size(); ++k)
      for (const std::string& id : pools[i]) CHECK(pools[k].count(id) == 0);

  // The corpus round-trips through the manifest loader.
  TrainConfig ingest = cfg;
  ingest.data_dir = out1.string();
  const train::TrainData loaded = train::load_train_data(ingest);
  REQUIRE(loaded.train.size() == 2);
  REQUIRE(loaded.val.size() == 1);
  for (const auto& s : loaded.train) {
    s.validate();
    CHECK(s.num_sources() == 2);
  }

  // Same seed, same bytes.
  const fs::path out2 = tmp.path / "c2";
  fs::create_directories(out2);
  std::ostringstream log2;
  cli::cmd_synth_data(cfg, out2.string(), log2);
  CHECK(slurp(out1 / "train.tsv") == slurp(out2 / "train.tsv"));
  const auto first_wav = data::read_manifest((out1 / "train.tsv").string(), "train")
                             .lines[0][0].audio_path;
  CHECK(slurp(out1 / first_wav) == slurp(out2 / first_wav));
}

TEST_CASE("cmd_train writes the checkpoint, log and summary") {
  TrainConfig cfg = cli_cfg();
  cfg.max_epochs = 1;
  cfg.segment_seconds = 0.4;
  TempDir tmp("avsep_cli_train");

  SECTION("mask model") {
    std::ostringstream log, warn;
    const auto res = cli::cmd_train(cfg, (tmp.path / "m").string(), log, warn);
    CHECK(fs::exists(res.checkpoint_path));
    CHECK(fs::exists(tmp.path / "m" / "train_log.jsonl"));
    CHECK(warn.str().empty());
    CHECK(log.str().find("best epoch") != std::string::npos);
    CHECK(res.best_epoch == 1);
  }

  SECTION("upit warns that video is ignored") {
    cfg.method = "upit";
    std::ostringstream log, warn;
    const auto res = cli::cmd_train(cfg, (tmp.path / "u").string(), log, warn);
    CHECK(warn.str().find("ignores video") != std::string::npos);
    CHECK(model::read_checkpoint(res.checkpoint_path).kind == "upit");
  }
}

TEST_CASE("cmd_evaluate writes per-method rows and the combined table") {
  const Artifacts& art = artifacts();
  TempDir tmp("avsep_cli_eval");

  cli::EvaluateArgs args;
  args.proposed_ckpt = art.proposed_ckpt;
  args.baseline_ckpt = art.baseline_ckpt;
  args.upit_ckpt = art.upit_ckpt;
  args.with_oracle = true;

  std::ostringstream log;
  const metrics::EvalReport report =
      cli::cmd_evaluate(art.cfg, args, tmp.str(), log);

  const auto sums = report.summaries();
  REQUIRE(sums.size() == 5);
  CHECK(sums[0].method == "Mixture");
  CHECK(sums[1].method == "Proposed");
  CHECK(sums[2].method == "AV baseline");
  CHECK(sums[3].method == "uPIT");
  CHECK(sums[4].method == "Oracle mask");

  for (const char* name :
       {"rows_mixture.csv", "rows_proposed.csv", "rows_av_baseline.csv",
        "rows_upit.csv", "rows_oracle_mask.csv"}) {
    const fs::path p = tmp.path / name;
    REQUIRE(fs::exists(p));
    // header plus two speakers for each of the two test samples
    CHECK(line_count(slurp(p)) == 5);
  }
  const std::string table = slurp(tmp.path / "comparison.txt");
  CHECK(table.find("Mixture") != std::string::npos);
  CHECK(table.find("PESQ: not computed") != std::string::npos);
  CHECK(log.str().find("Mixture") != std::string::npos);
  CHECK(std::isfinite(report.mean_sdr_db("Mixture")));

  SECTION("checkpoint kind and bin mismatches are config errors") {
    cli::EvaluateArgs swapped;
    swapped.proposed_ckpt = art.upit_ckpt;
    std::ostringstream sink;
    CHECK_THROWS_AS(cli::cmd_evaluate(art.cfg, swapped, tmp.str(), sink),
                    ConfigError);

    TrainConfig wide = art.cfg;
    wide.window_ms = 64.0;
    wide.hop_ms = 32.0;
    cli::EvaluateArgs prop;
    prop.proposed_ckpt = art.proposed_ckpt;
    CHECK_THROWS_AS(cli::cmd_evaluate(wide, prop, tmp.str(), sink), ConfigError);
  }
}

TEST_CASE("cmd_separate writes one wav per video, cut to the input length") {
  const Artifacts& art = artifacts();
  TempDir tmp("avsep_cli_sep");

  // A held-out style sample provides the mixture wav and the face tracks.
  const data::MixtureSample s =
      data::build_synth_sample(train::synth_split_spec(art.cfg, 1, 2), 99, 0);
  const fs::path mix_path = tmp.path / "mixture.wav";
  const dsp::Waveform mix =
      metrics::evaldetail::resynthesize(s.mixture, s.num_time_samples);
  dsp::write_wav(mix_path.string(), mix);
  std::vector<std::string> video_dirs;
  for (std::size_t n = 0; n < s.videos.size(); ++n) {
    const fs::path dir = tmp.path / ("track" + std::to_string(n));
    data::write_video_clip(dir.string(), s.videos[n]);
    video_dirs.push_back(dir.string());
  }

  cli::SeparateArgs args;
  args.checkpoint = art.proposed_ckpt;
  args.mixture_path = mix_path.string();
  args.video_dirs = video_dirs;

  const fs::path out = tmp.path / "out";
  fs::create_directories(out);
  std::ostringstream log;
  const auto paths = cli::cmd_separate(art.cfg, args, out.string(), log);

  REQUIRE(paths.size() == video_dirs.size());
  const dsp::Waveform in_wav = dsp::read_wav(mix_path.string());
  const std::size_t hop = art.cfg.stft().hop_samples(in_wav.sample_rate);
  for (const std::string& p : paths) {
    REQUIRE(fs::exists(p));
    const dsp::Waveform est = dsp::read_wav(p);
    const std::size_t lo = std::min(est.samples.size(), in_wav.samples.size());
    const std::size_t hi = std::max(est.samples.size(), in_wav.samples.size());
    REQUIRE(hi - lo <= hop);
    CHECK(est.samples.size() == in_wav.samples.size());
  }

  // The estimates carry independent masks; nothing forces them to add back
  // up to the mixture.
  dsp::Spectrogram x = dsp::stft(in_wav, art.cfg.stft());
  dsp::ComplexMatrix sum = dsp::stft(dsp::read_wav(paths[0]), art.cfg.stft()).values;
  for (std::size_t n = 1; n < paths.size(); ++n)
    sum += dsp::stft(dsp::read_wav(paths[n]), art.cfg.stft()).values;
  CHECK((sum - x.values).norm() / x.values.norm() > 1e-6);

  SECTION("a single face track yields a single output") {
    cli::SeparateArgs one = args;
    one.video_dirs = {video_dirs[0]};
    const fs::path out1 = tmp.path / "single";
    fs::create_directories(out1);
    std::ostringstream sink;
    const auto single = cli::cmd_separate(art.cfg, one, out1.string(), sink);
    CHECK(single.size() == 1);
    CHECK(fs::exists(out1 / "source_0.wav"));
    CHECK(!fs::exists(out1 / "source_1.wav"));
  }

  SECTION("a clip that does not cover the mixture is rejected") {
    data::VideoClip cut = s.videos[0];
    const auto& sh = cut.frames.shape();
    NDArray short_frames({sh[0] / 2, sh[1], sh[2], sh[3]});
    std::copy_n(cut.frames.vec().begin(), short_frames.size(),
                short_frames.vec().begin());
    cut.frames = std::move(short_frames);
    const fs::path dir = tmp.path / "short_track";
    data::write_video_clip(dir.string(), cut);

    cli::SeparateArgs bad = args;
    bad.video_dirs = {dir.string(), video_dirs[1]};
    std::ostringstream sink;
    CHECK_THROWS_AS(cli::cmd_separate(art.cfg, bad, out.string(), sink),
                    std::invalid_argument);
  }

  SECTION("a upit checkpoint cannot drive video-conditioned separation") {
    cli::SeparateArgs bad = args;
    bad.checkpoint = art.upit_ckpt;
    std::ostringstream sink;
    CHECK_THROWS_AS(cli::cmd_separate(art.cfg, bad, out.string(), sink),
                    ConfigError);
  }

  SECTION("no video directories is a usage error") {
    cli::SeparateArgs bad = args;
    bad.video_dirs.clear();
    std::ostringstream sink;
    CHECK_THROWS_AS(cli::cmd_separate(art.cfg, bad, out.string(), sink),
                    ConfigError);
  }
}

TEST_CASE("cmd_analyze_correspondence emits histograms for both models") {
  const Artifacts& art = artifacts();
  TempDir tmp("avsep_cli_ana");

  cli::AnalyzeArgs args;
  args.proposed_ckpt = art.proposed_ckpt;
  args.baseline_ckpt = art.baseline_ckpt;

  std::ostringstream log;
  const cli::AnalyzeOutcome out =
      cli::cmd_analyze_correspondence(art.cfg, args, tmp.str(), log);

  for (const char* name : {"angles_proposed.csv", "angles_proposed.svg",
                           "angles_baseline.csv", "angles_baseline.svg"})
    REQUIRE(fs::exists(tmp.path / name));
  CHECK(line_count(slurp(tmp.path / "angles_proposed.csv")) == 181);
  CHECK(out.has_baseline);
  for (double v : {out.proposed_positive_deg, out.proposed_negative_deg,
                   out.baseline_positive_deg, out.baseline_negative_deg}) {
    CHECK(v >= 0.0);
    CHECK(v <= 180.0);
  }
  CHECK(log.str().find("proposed:") != std::string::npos);
  CHECK(log.str().find("baseline:") != std::string::npos);

  SECTION("csv only when the plot is disabled") {
    TempDir flat("avsep_cli_ana_floor");
    cli::AnalyzeArgs quiet = args;
    quiet.baseline_ckpt.clear();
    quiet.no_plot = true;
    std::ostringstream sink;
    cli::cmd_analyze_correspondence(art.cfg, quiet, flat.str(), sink);
    CHECK(fs::exists(flat.path / "angles_proposed.csv"));
    CHECK(!fs::exists(flat.path / "angles_proposed.svg"));
    CHECK(!fs::exists(flat.path / "angles_baseline.csv"));
  }

  SECTION("a checkpoint without the head cannot anchor the analysis") {
    cli::AnalyzeArgs headless = args;
    headless.proposed_ckpt = art.baseline_ckpt;
    std::ostringstream sink;
    CHECK_THROWS_WITH(
        cli::cmd_analyze_correspondence(art.cfg, headless, tmp.str(), sink),
        Catch::Matchers::ContainsSubstring("correspondence head"));
  }

  SECTION("a upit checkpoint cannot anchor the analysis") {
    cli::AnalyzeArgs wrong = args;
    wrong.proposed_ckpt = art.upit_ckpt;
    std::ostringstream sink;
    CHECK_THROWS_AS(
        cli::cmd_analyze_correspondence(art.cfg, wrong, tmp.str(), sink),
        ConfigError);
  }

  SECTION("the proposed checkpoint is mandatory") {
    cli::AnalyzeArgs missing;
    std::ostringstream sink;
    CHECK_THROWS_AS(
        cli::cmd_analyze_correspondence(art.cfg, missing, tmp.str(), sink),
        ConfigError);
  }
}

TEST_CASE("the tool maps error families to exit codes") {
  TempDir tmp("avsep_cli_exit");
  CHECK(run_tool("--help") == 0);
  CHECK(run_tool("") == 1);             // a subcommand is required
  CHECK(run_tool("train --frobnicate") == 1);
  CHECK(run_tool("train --out " + (tmp.path / "a").string() +
                 " --set no_such_key=1") == 1);
  CHECK(run_tool("separate --checkpoint " + (tmp.path / "none.ckpt").string() +
                 " --mixture " + (tmp.path / "none.wav").string() +
                 " --video " + (tmp.path / "none_frames").string() +
                 " --out " + (tmp.path / "b").string()) == 2);
  CHECK(run_tool("synth-data --out " + (tmp.path / "c").string() +
                 " --seed 1 --set train_samples=1 --set val_samples=1"
                 " --set test_samples=1 --set segment_seconds=0.3"
                 " --set num_speakers=4 --set video_size=16") == 0);
  CHECK(fs::exists(tmp.path / "c" / "train.tsv"));
  CHECK(fs::exists(tmp.path / "c" / "resolved_config.txt"));
  // rerunning into the same directory without --force fails cleanly
  CHECK(run_tool("synth-data --out " + (tmp.path / "c").string() +
                 " --seed 1 --set train_samples=1 --set val_samples=1"
                 " --set test_samples=1 --set segment_seconds=0.3"
                 " --set num_speakers=4 --set video_size=16") == 1);
}
