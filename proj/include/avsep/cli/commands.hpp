// avsep/cli/commands.hpp

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

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "avsep/core/common.hpp"
#include "avsep/data/dataset.hpp"
#include "avsep/data/video.hpp"
#include "avsep/dsp/resample.hpp"
#include "avsep/dsp/stft.hpp"
#include "avsep/dsp/wav.hpp"
#include "avsep/metrics/angles.hpp"
#include "avsep/metrics/evaluate.hpp"
#include "avsep/model/checkpoint.hpp"
#include "avsep/train/config.hpp"
#include "avsep/train/trainer.hpp"

namespace avsep::cli {

/// Flags shared by every subcommand.
struct CommonArgs {
  std::string config_path;            // key = value file, optional
  std::vector<std::string> sets;      // key=value overrides, repeatable
  std::string out_dir;                // where outputs land
  std::optional<std::uint64_t> seed;  // wins over the seed key
  bool force = false;                 // reuse a non-empty output directory
};

/// File entries first, then --set pairs, then the --seed flag.
inline train::TrainConfig merge_config(const CommonArgs& args) {
  train::KvMap kv;
  if (!args.config_path.empty()) kv = train::read_kv_file(args.config_path);
  for (const std::string& pair : args.sets) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || train::cfgdetail::trim(pair.substr(0, eq)).empty())
      throw ConfigError(str_cat("--set expects key=value, got \"", pair, "\""));
    kv[train::cfgdetail::trim(pair.substr(0, eq))] =
        train::cfgdetail::trim(pair.substr(eq + 1));
  }
  if (args.seed) kv["seed"] = std::to_string(*args.seed);
  return train::config_from_kv(kv);
}

/// AVSEP_OUT_DIR redirects every run, flag or no flag.
inline std::string resolve_out_dir(const std::string& requested) {
  const char* env = std::getenv("AVSEP_OUT_DIR");
  if (env != nullptr && env[0] != '\0') return env;
  if (requested.empty())
    throw ConfigError("an output directory is required (--out or AVSEP_OUT_DIR)");
  return requested;
}

inline void prepare_out_dir(const std::string& dir, bool force) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir, ec) && !force)
    throw ConfigError(
        str_cat("output directory ", dir, " is not empty; pass --force to reuse it"));
  fs::create_directories(dir);
}

/// Resolves the target directory, guards collisions, drops the config
/// snapshot every run relies on.  Returns the directory actually used.
inline std::string begin_run(const CommonArgs& args, const train::TrainConfig& cfg) {
  const std::string out = resolve_out_dir(args.out_dir);
  prepare_out_dir(out, args.force);
  write_file_atomic(std::filesystem::path(out) / "resolved_config.txt",
                    train::resolved_config_text(cfg));
  return out;
}

namespace clidetail {

inline std::string zero_pad(std::size_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

inline std::string method_slug(const std::string& method) {
  std::string s;
  for (char c : method) {
    const unsigned char u = static_cast<unsigned char>(c);
    s.push_back(std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_');
  }
  return s;
}

inline void write_wav_atomic(const std::string& path, const dsp::Waveform& w) {
  const std::string tmp = path + ".tmp";
  dsp::write_wav(tmp, w);
  std::filesystem::rename(tmp, path);
}

inline void write_manifest_atomic(const std::string& path,
                                  const data::CorpusManifest& man) {
  const std::string tmp = path + ".tmp";
  data::write_manifest(tmp, man);
  std::filesystem::rename(tmp, path);
}

inline void write_video_clip_atomic(const std::string& dir,
                                    const data::VideoClip& clip) {
  namespace fs = std::filesystem;
  const std::string tmp = dir + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  data::write_video_clip(tmp, clip);
  fs::remove_all(dir, ec);
  fs::rename(tmp, dir);
}

/// A checkpoint holding the video-conditioned mask model, restored without
/// the correspondence head; the bin count must match the run config.
inline model::SeparationModel restore_mask_model(const std::string& path,
                                                 const train::TrainConfig& cfg) {
  model::CheckpointData ck = model::read_checkpoint(path);
  if (ck.kind != "av")
    throw ConfigError(str_cat("checkpoint ", path, " holds a ", ck.kind,
                              " model where a mask model is needed"));
  if (ck.config.input_bins != cfg.input_bins())
    throw ConfigError(str_cat("checkpoint ", path, " expects ",
                              ck.config.input_bins,
                              " frequency bins but the run config produces ",
                              cfg.input_bins()));
  return model::restore_separation_model(ck, false);
}

inline bool has_correspondence_params(const model::CheckpointData& ck) {
  for (const auto& [name, value] : ck.params)
    if (name.rfind("avc.", 0) == 0) return true;
  return false;
}

inline void check_duration(const dsp::Waveform& w, const data::VideoClip& clip,
                           const train::TrainConfig& cfg) {
  const double audio_s = static_cast<double>(w.samples.size()) / w.sample_rate;
  const double video_s =
      static_cast<double>(clip.frames.shape()[0]) / clip.frame_rate;
  const double hop_s =
      static_cast<double>(cfg.stft().hop_samples(w.sample_rate)) / w.sample_rate;
  const double tol = 2.0 / clip.frame_rate + hop_s;
  require(std::abs(audio_s - video_s) <= tol, "video clip for speaker ",
          clip.speaker_id, " covers ", video_s, " s but the mixture lasts ",
          audio_s, " s");
}

}  // namespace clidetail

/// Writes clean per-speaker wavs, frame directories and the three split
/// manifests.  Splits draw from disjoint speaker pools, so the corpus is
/// usable for held-out evaluation straight away.
inline void cmd_synth_data(const train::TrainConfig& cfg,
                           const std::string& out_dir, std::ostream& log) {
  namespace fs = std::filesystem;
  const char* names[3] = {"train", "val", "test"};
  const std::size_t counts[3] = {cfg.train_samples, cfg.val_samples,
                                 cfg.test_samples};
  fs::create_directories(fs::path(out_dir) / "media");
  for (std::size_t split = 0; split < 3; ++split) {
    const data::SynthDatasetSpec spec =
        train::synth_split_spec(cfg, counts[split], split);
    const std::uint64_t seed = mix_seed(cfg.seed, 0x7a0 + split);
    data::CorpusManifest man;
    man.split = names[split];
    for (std::size_t i = 0; i < counts[split]; ++i) {
      const data::MixtureSample s = data::build_synth_sample(spec, seed, i);
      std::vector<data::ManifestEntry> line;
      for (std::size_t n = 0; n < s.num_sources(); ++n) {
        const std::string stem = str_cat(names[split], "_",
                                         clidetail::zero_pad(i, 3), "_s", n,
                                         "_", s.speaker_ids[n]);
        const std::string wav_rel = str_cat("media/", stem, ".wav");
        const std::string vid_rel = str_cat("media/", stem, "_frames");
        clidetail::write_wav_atomic(
            (fs::path(out_dir) / wav_rel).string(),
            metrics::evaldetail::resynthesize(s.sources[n],
                                              s.num_time_samples));
        clidetail::write_video_clip_atomic(
            (fs::path(out_dir) / vid_rel).string(), s.videos[n]);
        line.push_back({wav_rel, vid_rel, s.speaker_ids[n]});
      }
      man.lines.push_back(std::move(line));
    }
    clidetail::write_manifest_atomic(
        (fs::path(out_dir) / str_cat(names[split], ".tsv")).string(), man);
    log << "wrote " << counts[split] << " " << names[split] << " samples\n";
  }
}

inline train::TrainResult cmd_train(const train::TrainConfig& cfg,
                                    const std::string& out_dir,
                                    std::ostream& log, std::ostream& warn) {
  train::TrainResult res;
  if (cfg.method == "upit") {
    warn << "warning: the upit method ignores video streams\n";
    res = train::train_upit_baseline(cfg, out_dir);
  } else {
    res = train::train(cfg, out_dir);
  }
  log << "best epoch " << res.best_epoch << ", validation loss "
      << res.best_val << (res.stopped_early ? " (stopped early)" : "") << "\n"
      << "checkpoint: " << res.checkpoint_path << "\n";
  return res;
}

struct EvaluateArgs {
  std::string proposed_ckpt;  // empty skips the method
  std::string baseline_ckpt;
  std::string upit_ckpt;
  bool with_oracle = false;
};

/// Held-out test split, one table.  The mixture row is always present so
/// every method has the same yardstick.
inline metrics::EvalReport cmd_evaluate(const train::TrainConfig& cfg,
                                        const EvaluateArgs& args,
                                        const std::string& out_dir,
                                        std::ostream& log) {
  namespace fs = std::filesystem;
  const std::vector<data::MixtureSample> samples = train::load_test_data(cfg);
  metrics::EvalReport report;
  metrics::evaluate_passthrough(report, "Mixture", samples);
  if (!args.proposed_ckpt.empty()) {
    model::SeparationModel m =
        clidetail::restore_mask_model(args.proposed_ckpt, cfg);
    metrics::evaluate_separation(report, "Proposed", m, samples);
  }
  if (!args.baseline_ckpt.empty()) {
    model::SeparationModel m =
        clidetail::restore_mask_model(args.baseline_ckpt, cfg);
    metrics::evaluate_separation(report, "AV baseline", m, samples);
  }
  if (!args.upit_ckpt.empty()) {
    model::CheckpointData ck = model::read_checkpoint(args.upit_ckpt);
    if (ck.kind != "upit")
      throw ConfigError(str_cat("checkpoint ", args.upit_ckpt, " holds a ",
                                ck.kind, " model where a upit model is needed"));
    if (ck.config.input_bins != cfg.input_bins())
      throw ConfigError(str_cat("checkpoint ", args.upit_ckpt, " expects ",
                                ck.config.input_bins,
                                " frequency bins but the run config produces ",
                                cfg.input_bins()));
    require(ck.num_sources == cfg.sources_per_mix,
            "upit checkpoint separates ", ck.num_sources,
            " sources but the dataset mixes ", cfg.sources_per_mix);
    model::UpitModel m = model::restore_upit_model(ck);
    metrics::evaluate_upit(report, "uPIT", m, samples);
  }
  if (args.with_oracle) metrics::evaluate_oracle_mask(report, "Oracle mask", samples);

  for (const metrics::MethodSummary& s : report.summaries()) {
    metrics::EvalReport one;
    for (const metrics::EvalRow& r : report.rows)
      if (r.method == s.method) one.rows.push_back(r);
    write_file_atomic(
        fs::path(out_dir) / str_cat("rows_", clidetail::method_slug(s.method), ".csv"),
        metrics::eval_rows_csv(one));
  }
  const std::string table = metrics::comparison_table(report);
  write_file_atomic(fs::path(out_dir) / "comparison.txt", table);
  log << table;
  return report;
}

struct SeparateArgs {
  std::string checkpoint;
  std::string mixture_path;
  std::vector<std::string> video_dirs;  // one output wav per entry
};

/// One estimated wav per face track, cut to the mixture length.  Masks are
/// independent sigmoids, so the estimates do not have to add back up to the
/// input; nothing renormalizes them.
inline std::vector<std::string> cmd_separate(const train::TrainConfig& cfg,
                                             const SeparateArgs& args,
                                             const std::string& out_dir,
                                             std::ostream& log) {
  namespace fs = std::filesystem;
  if (args.video_dirs.empty())
    throw ConfigError("separate needs at least one --video directory");
  model::SeparationModel m = clidetail::restore_mask_model(args.checkpoint, cfg);
  dsp::Waveform w = dsp::resample(dsp::read_wav(args.mixture_path), cfg.sample_rate);
  std::vector<data::VideoClip> videos;
  for (const std::string& dir : args.video_dirs) {
    data::VideoClip clip = data::read_video_clip(dir);
    if (clip.channels() == 3) clip = data::to_grayscale(clip);
    if (cfg.halve_video_fps) clip = data::halve_frame_rate(clip);
    clidetail::check_duration(w, clip, cfg);
    videos.push_back(std::move(clip));
  }
  const dsp::Spectrogram x = dsp::stft(w, cfg.stft());
  const std::vector<dsp::Spectrogram> est = m.separate(x, videos);
  std::vector<std::string> paths;
  for (std::size_t n = 0; n < est.size(); ++n) {
    const std::string path =
        (fs::path(out_dir) / str_cat("source_", n, ".wav")).string();
    clidetail::write_wav_atomic(
        path, metrics::evaldetail::resynthesize(est[n], w.samples.size()));
    log << "wrote " << path << "\n";
    paths.push_back(path);
  }
  return paths;
}

struct AnalyzeArgs {
  std::string proposed_ckpt;  // must carry the correspondence head
  std::string baseline_ckpt;  // optional, borrows that head
  bool no_plot = false;       // csv is always written
};

struct AnalyzeOutcome {
  double proposed_positive_deg = 0.0;
  double proposed_negative_deg = 0.0;
  bool has_baseline = false;
  double baseline_positive_deg = 0.0;
  double baseline_negative_deg = 0.0;
};

/// Angle statistics between visual embeddings and projected masks on the
/// test split.  A baseline checkpoint has no projection head of its own, so
/// its masks are pushed through the donor's head for a like-for-like read.
inline AnalyzeOutcome cmd_analyze_correspondence(const train::TrainConfig& cfg,
                                                 const AnalyzeArgs& args,
                                                 const std::string& out_dir,
                                                 std::ostream& log) {
  namespace fs = std::filesystem;
  if (args.proposed_ckpt.empty())
    throw ConfigError("analyze-correspondence needs --proposed");
  model::CheckpointData ck = model::read_checkpoint(args.proposed_ckpt);
  if (ck.kind != "av")
    throw ConfigError(str_cat("checkpoint ", args.proposed_ckpt, " holds a ",
                              ck.kind, " model where a mask model is needed"));
  if (!clidetail::has_correspondence_params(ck))
    throw ConfigError(str_cat("checkpoint ", args.proposed_ckpt,
                              " carries no correspondence head; train it with "
                              "a nonzero lambda"));
  if (ck.config.input_bins != cfg.input_bins())
    throw ConfigError(str_cat("checkpoint ", args.proposed_ckpt, " expects ",
                              ck.config.input_bins,
                              " frequency bins but the run config produces ",
                              cfg.input_bins()));
  model::SeparationModel donor = model::restore_separation_model(ck, true);
  const std::vector<data::MixtureSample> samples = train::load_test_data(cfg);

  AnalyzeOutcome out;
  const auto emit = [&](const std::string& tag,
                        const metrics::AngleHistogram& hist, double& pos,
                        double& neg) {
    write_file_atomic(fs::path(out_dir) / str_cat("angles_", tag, ".csv"),
                      metrics::angle_histogram_csv(hist));
    if (!args.no_plot)
      write_file_atomic(fs::path(out_dir) / str_cat("angles_", tag, ".svg"),
                        metrics::angle_histogram_svg(hist));
    pos = hist.mean_positive_deg();
    neg = hist.mean_negative_deg();
    log << tag << ": same-speaker mean " << pos << " deg, other-speaker mean "
        << neg << " deg\n";
  };
  emit("proposed", metrics::analyze_correspondence(donor, samples),
       out.proposed_positive_deg, out.proposed_negative_deg);
  if (!args.baseline_ckpt.empty()) {
    model::SeparationModel base =
        clidetail::restore_mask_model(args.baseline_ckpt, cfg);
    out.has_baseline = true;
    emit("baseline",
         metrics::analyze_correspondence_borrowed(donor, base, samples),
         out.baseline_positive_deg, out.baseline_negative_deg);
  }
  return out;
}

}  // namespace avsep::cli
