// avsep/train/trainer.hpp

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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avsep/core/common.hpp"
#include "avsep/core/rng.hpp"
#include "avsep/data/dataset.hpp"
#include "avsep/losses/losses.hpp"
#include "avsep/model/checkpoint.hpp"
#include "avsep/model/model.hpp"
#include "avsep/train/adam.hpp"
#include "avsep/train/config.hpp"

namespace avsep::train {

// ---------------------------------------------------------------------------
// Early stopping.
// ---------------------------------------------------------------------------

/// Strict-improvement tracker: observe() returns true at exactly the first
/// epoch completing `patience` consecutive non-improving epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {
    require(patience >= 1, "EarlyStopper: patience must be at least 1");
  }

  bool observe(double val) {
    require(std::isfinite(val), "EarlyStopper: non-finite validation loss");
    ++epoch_;
    if (val < best_) {
      best_ = val;
      best_epoch_ = epoch_;
      bad_ = 0;
    } else {
      ++bad_;
    }
    return bad_ >= patience_;
  }

  bool improved() const { return bad_ == 0 && epoch_ > 0; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t bad_epochs() const { return bad_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t bad_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Run bookkeeping.
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_total = 0.0;
  double train_mse = 0.0;
  double train_cmc = 0.0;
  double val_total = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::vector<EpochRecord> log;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

struct TrainData {
  std::vector<data::MixtureSample> train;
  std::vector<data::MixtureSample> val;
};

/// Synthetic-corpus spec for one split; split_index keys the disjoint
/// speaker pool (0 train, 1 val, 2 test).
inline data::SynthDatasetSpec synth_split_spec(const TrainConfig& cfg,
                                               std::size_t count,
                                               std::size_t split_index) {
  data::SynthDatasetSpec spec;
  spec.num_samples = count;
  spec.num_speakers = cfg.num_speakers;
  spec.sources_per_mix = cfg.sources_per_mix;
  spec.segment_seconds = cfg.segment_seconds;
  spec.sample_rate = cfg.sample_rate;
  spec.snr_lo_db = cfg.snr_lo_db;
  spec.snr_hi_db = cfg.snr_hi_db;
  spec.av.stft = cfg.stft();
  spec.av.video.width = cfg.video_size;
  spec.av.video.height = cfg.video_size;
  spec.av.video.frame_rate = cfg.video_fps;
  // Disjoint per-split speaker pools.
  spec.speaker_id_offset = split_index * cfg.num_speakers;
  return spec;
}

namespace traindetail {

inline std::vector<data::MixtureSample> manifest_split(
    const TrainConfig& cfg, const std::string& name, std::size_t count,
    std::uint64_t seed) {
  data::ManifestDatasetSpec spec;
  spec.sources_per_mix = cfg.sources_per_mix;
  spec.num_samples = count;
  spec.target_sample_rate = cfg.sample_rate;
  spec.snr_lo_db = cfg.snr_lo_db;
  spec.snr_hi_db = cfg.snr_hi_db;
  spec.segment_seconds = cfg.segment_seconds;
  spec.halve_video_fps = cfg.halve_video_fps;
  spec.stft = cfg.stft();
  const std::string path = cfg.data_dir + "/" + name + ".tsv";
  return data::build_dataset(data::read_manifest(path, name), cfg.data_dir,
                             spec, seed);
}

inline std::string json_line(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"train_total", r.train_total},
                   {"train_mse", r.train_mse},
                   {"train_cmc", r.train_cmc},
                   {"val_total", r.val_total},
                   {"wall_seconds", r.wall_seconds}};
  return j.dump();
}

inline void write_log(const std::string& out_dir,
                      const std::vector<EpochRecord>& log) {
  std::string text;
  for (const auto& r : log) text += json_line(r) + "\n";
  write_file_atomic(std::filesystem::path(out_dir) / "train_log.jsonl", text);
}

struct BatchParts {
  double total = 0.0;
  double mse = 0.0;
  double cmc = 0.0;
};

/// One training sample's contribution: builds the graph, backpropagates
/// grad scaled by inv_batch, reports the unscaled loss parts.
using SampleStepFn =
    std::function<BatchParts(const data::MixtureSample&, double inv_batch)>;
/// Eval-mode validation loss of one sample.
using SampleValFn = std::function<double(const data::MixtureSample&)>;
/// Persists the current model as the best checkpoint.
using SaveFn = std::function<void(std::size_t epoch, double best_val)>;

inline void check_finite(double v, const TrainConfig& cfg, std::size_t epoch,
                         std::size_t batch_start, const BatchParts& parts,
                         double grad_norm) {
  require_state(
      std::isfinite(v),
      "training diverged: non-finite loss at epoch ", epoch, ", batch offset ",
      batch_start, " (total=", parts.total, ", mse=", parts.mse,
      ", cmc=", parts.cmc, ", grad_norm=", grad_norm,
      ", lr=", cfg.learning_rate, ", method=", cfg.method, ")");
}

/// The shared optimization protocol: shuffled minibatches, gradient
/// accumulation, global-norm clipping, adaptive steps, eval-mode validation
/// after each epoch, best-checkpoint retention, early stopping.
inline TrainResult run_protocol(const TrainConfig& cfg,
                                const std::string& out_dir,
                                const TrainData& data,
                                model::ParamStore& store, Adam& opt,
                                const SampleStepFn& sample_step,
                                const SampleValFn& sample_val,
                                const SaveFn& save) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  TrainResult result;
  result.checkpoint_path =
      (fs::path(out_dir) / "best.ckpt").string();
  EarlyStopper stopper(cfg.patience_epochs);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5e90 + epoch));
    std::vector<std::size_t> order =
        shuffle_rng.permutation(data.train.size());

    BatchParts epoch_parts;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t count =
          std::min(cfg.batch_size, order.size() - start);
      store.zero_grads();
      BatchParts batch_parts;
      for (std::size_t k = 0; k < count; ++k) {
        const auto parts = sample_step(data.train[order[start + k]],
                                       1.0 / static_cast<double>(count));
        batch_parts.total += parts.total;
        batch_parts.mse += parts.mse;
        batch_parts.cmc += parts.cmc;
      }
      const double grad_norm = opt.clip_global_norm(cfg.grad_clip_norm);
      check_finite(batch_parts.total, cfg, epoch, start, batch_parts,
                   grad_norm);
      check_finite(grad_norm, cfg, epoch, start, batch_parts, grad_norm);
      opt.step();
      epoch_parts.total += batch_parts.total;
      epoch_parts.mse += batch_parts.mse;
      epoch_parts.cmc += batch_parts.cmc;
    }

    double val = 0.0;
    {
      NoGradGuard guard;
      for (const auto& s : data.val) val += sample_val(s);
      val /= static_cast<double>(data.val.size());
    }
    check_finite(val, cfg, epoch, 0, epoch_parts, 0.0);

    const double inv_n = 1.0 / static_cast<double>(data.train.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_total = epoch_parts.total * inv_n;
    rec.train_mse = epoch_parts.mse * inv_n;
    rec.train_cmc = epoch_parts.cmc * inv_n;
    rec.val_total = val;
    const bool stop = stopper.observe(val);
    if (stopper.improved()) save(epoch, stopper.best());
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.log.push_back(rec);
    write_log(out_dir, result.log);
    result.epochs_run = epoch;
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }

  result.best_val = stopper.best();
  result.best_epoch = stopper.best_epoch();
  require_state(result.best_epoch > 0, "run_protocol: no epoch completed");
  return result;
}

}  // namespace traindetail

/// Builds the train/val splits the config describes, either synthetic
/// in-memory or from manifests under data_dir.
inline TrainData load_train_data(const TrainConfig& cfg) {
  cfg.validate();
  TrainData data;
  if (cfg.data_dir.empty()) {
    data.train = data::build_dataset(
        synth_split_spec(cfg, cfg.train_samples, 0),
        mix_seed(cfg.seed, 0x7a0));
    data.val = data::build_dataset(
        synth_split_spec(cfg, cfg.val_samples, 1),
        mix_seed(cfg.seed, 0x7a1));
  } else {
    data.train = traindetail::manifest_split(cfg, "train", cfg.train_samples,
                                             mix_seed(cfg.seed, 0x7a0));
    data.val = traindetail::manifest_split(cfg, "val", cfg.val_samples,
                                           mix_seed(cfg.seed, 0x7a1));
  }
  require_state(!data.train.empty() && !data.val.empty(),
                "load_train_data: empty split");
  return data;
}

/// Held-out split with its own speaker pool; used by evaluation, exposed
/// here so every consumer derives it identically.
inline std::vector<data::MixtureSample> load_test_data(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.data_dir.empty())
    return data::build_dataset(
        synth_split_spec(cfg, cfg.test_samples, 2),
        mix_seed(cfg.seed, 0x7a2));
  return traindetail::manifest_split(cfg, "test", cfg.test_samples,
                                     mix_seed(cfg.seed, 0x7a2));
}

/// Trains the mask-estimation network (proposed when lambda > 0, the plain
/// baseline when the method pins lambda to 0) on the given splits. Returns
/// the best-checkpoint path and the per-epoch log.
inline TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                         const TrainData& data) {
  cfg.validate();
  require(cfg.method == "proposed" || cfg.method == "av_baseline",
          "train: method must be proposed or av_baseline, got ", cfg.method);
  const bool use_cmc = cfg.lambda != 0.0;
  const losses::LossConfig loss_cfg = cfg.loss();

  model::SeparationModel model(cfg.model(), mix_seed(cfg.seed, 1), use_cmc);
  Adam opt(model.params(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});

  auto loss_graph = [&](const data::MixtureSample& s,
                        bool train_mode) -> std::pair<Var, traindetail::BatchParts> {
    auto out = model.forward(s.mixture, s.videos, train_mode, use_cmc);
    std::vector<NDArray> src_mag;
    src_mag.reserve(s.sources.size());
    for (const auto& src : s.sources) src_mag.push_back(src.magnitude());
    Var mse = losses::mse_loss_graph(out.est_mag, src_mag);
    traindetail::BatchParts parts;
    parts.mse = scalar_value(mse);
    if (!use_cmc) {
      // Zero weight: the objective IS the mse term, bit for bit.
      parts.total = parts.mse;
      return {mse, parts};
    }
    Var cmc = losses::cmc_loss_graph(out.visual, out.avc, loss_cfg);
    parts.cmc = scalar_value(cmc);
    Var total = add(mse, scale(cmc, cfg.lambda));
    parts.total = scalar_value(total);
    return {total, parts};
  };

  auto sample_step = [&](const data::MixtureSample& s, double inv_batch) {
    auto [loss, parts] = loss_graph(s, true);
    backward(scale(loss, inv_batch));
    return parts;
  };
  auto sample_val = [&](const data::MixtureSample& s) {
    auto [loss, parts] = loss_graph(s, false);
    (void)loss;
    return cfg.validate_mse_only ? parts.mse : parts.total;
  };
  auto save = [&](std::size_t epoch, double best_val) {
    model::CheckpointData ck = model::snapshot_model(model);
    ck.epoch = static_cast<std::int64_t>(epoch);
    ck.best_val = best_val;
    ck.has_optimizer = true;
    ck.opt_step = opt.steps();
    ck.opt_m = opt.first_moments();
    ck.opt_v = opt.second_moments();
    model::write_checkpoint(
        (std::filesystem::path(out_dir) / "best.ckpt").string(), ck);
  };

  return traindetail::run_protocol(cfg, out_dir, data, model.params(), opt,
                                   sample_step, sample_val, save);
}

inline TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
  return train(cfg, out_dir, load_train_data(cfg));
}

/// Audio-only reference system under the identical protocol, trained with
/// the permutation-invariant phase-sensitive objective.
inline TrainResult train_upit_baseline(const TrainConfig& cfg,
                                       const std::string& out_dir,
                                       const TrainData& data) {
  cfg.validate();
  require(cfg.method == "upit", "train_upit_baseline: method must be upit");
  const losses::LossConfig loss_cfg = cfg.loss();

  model::UpitModel model(cfg.model(), cfg.sources_per_mix,
                         mix_seed(cfg.seed, 1));
  Adam opt(model.params(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});

  auto loss_graph = [&](const data::MixtureSample& s, bool train_mode) {
    auto out = model.forward(s.mixture, train_mode);
    const auto targets = losses::phase_sensitive_targets(
        s.sources, s.mixture.phase(), loss_cfg.clamp_phase_target);
    return losses::upit_loss_graph(out.est_mag, targets, loss_cfg).loss;
  };

  auto sample_step = [&](const data::MixtureSample& s, double inv_batch) {
    Var loss = loss_graph(s, true);
    traindetail::BatchParts parts;
    parts.total = scalar_value(loss);
    parts.mse = parts.total;
    backward(scale(loss, inv_batch));
    return parts;
  };
  auto sample_val = [&](const data::MixtureSample& s) {
    return scalar_value(loss_graph(s, false));
  };
  auto save = [&](std::size_t epoch, double best_val) {
    model::CheckpointData ck = model::snapshot_model(model);
    ck.epoch = static_cast<std::int64_t>(epoch);
    ck.best_val = best_val;
    ck.has_optimizer = true;
    ck.opt_step = opt.steps();
    ck.opt_m = opt.first_moments();
    ck.opt_v = opt.second_moments();
    model::write_checkpoint(
        (std::filesystem::path(out_dir) / "best.ckpt").string(), ck);
  };

  return traindetail::run_protocol(cfg, out_dir, data, model.params(), opt,
                                   sample_step, sample_val, save);
}

inline TrainResult train_upit_baseline(const TrainConfig& cfg,
                                       const std::string& out_dir) {
  return train_upit_baseline(cfg, out_dir, load_train_data(cfg));
}

}  // namespace avsep::train

