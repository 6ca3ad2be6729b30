// avsep/model/model.hpp

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

#include <memory>
#include <optional>
#include <vector>

#include "avsep/dsp/stft.hpp"
#include "avsep/model/blocks.hpp"

namespace avsep::model {

/// Everything one forward pass produces. est_mag are masked magnitudes on
/// the tape (loss inputs); estimates are the complex masked spectrograms for
/// resynthesis. avc is empty when correspondence features were skipped.
struct SeparationOutput {
  std::vector<Var> est_mag;
  std::vector<Var> masks;
  std::vector<Var> pre_masks;
  std::vector<Var> visual;
  std::vector<Var> avc;
  std::vector<dsp::Spectrogram> estimates;
};

/// Audio-visual mask estimation network. One audio feature per mixture, one
/// visual feature per speaker, fused into per-speaker sigmoid masks; every
/// per-speaker path runs through the same parameters. The correspondence
/// head is built only when requested (training needs it, inference does
/// not).
class SeparationModel {
 public:
  SeparationModel(const ModelConfig& cfg, std::uint64_t seed,
                  bool with_correspondence = true)
      : cfg_(cfg), rng_(mix_seed(seed, 0xd0)) {
    cfg.validate();
    Rng init_rng(mix_seed(seed, 0x171));
    audio_.emplace(store_, cfg, init_rng);
    video_.emplace(store_, cfg, init_rng);
    fusion_.emplace(store_, cfg, init_rng);
    if (with_correspondence) avc_.emplace(store_, cfg, init_rng);
  }

  SeparationModel(SeparationModel&&) = default;
  SeparationModel& operator=(SeparationModel&&) = default;
  SeparationModel(const SeparationModel&) = delete;
  SeparationModel& operator=(const SeparationModel&) = delete;

  SeparationOutput forward(const dsp::Spectrogram& x,
                           const std::vector<data::VideoClip>& videos,
                           bool train, bool with_correspondence) {
    x.validate();
    require(!videos.empty(), "SeparationModel: need at least one speaker");
    require(!with_correspondence || avc_.has_value(),
            "SeparationModel: correspondence head was not built");
    const std::size_t frames = x.values.cols();

    SeparationOutput out;
    Var mag = Var::constant(x.magnitude());
    Var c_a = audio_->forward(mag, train, rng_);
    for (const auto& clip : videos) {
      Var c_v = video_->forward(clip, frames, store_, train);
      Var m = fusion_->forward(c_a, c_v);
      Var mask = sigmoid_v(m);
      out.visual.push_back(c_v);
      out.pre_masks.push_back(m);
      out.masks.push_back(mask);
      out.est_mag.push_back(mul(mask, mag));
      if (with_correspondence) out.avc.push_back(avc_->forward(m));

      dsp::Spectrogram est;
      est.config = x.config;
      est.sample_rate = x.sample_rate;
      est.values = x.values;
      for (Eigen::Index r = 0; r < est.values.rows(); ++r)
        for (Eigen::Index c = 0; c < est.values.cols(); ++c)
          est.values(r, c) *= mask.value().at(static_cast<std::size_t>(r),
                                              static_cast<std::size_t>(c));
      out.estimates.push_back(std::move(est));
    }
    return out;
  }

  /// Inference path: no graph, no dropout, no correspondence features.
  std::vector<dsp::Spectrogram> separate(
      const dsp::Spectrogram& x, const std::vector<data::VideoClip>& videos) {
    NoGradGuard guard;
    return forward(x, videos, false, false).estimates;
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  Rng& rng() { return rng_; }
  bool has_correspondence() const { return avc_.has_value(); }

  /// Correspondence features for externally produced pre-activation masks
  /// (the cross-model analysis borrows this head).
  Var correspondence(const Var& pre_mask) const {
    require(avc_.has_value(),
            "SeparationModel: correspondence head was not built");
    return avc_->forward(pre_mask);
  }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Rng rng_;
  std::optional<AudioBlock> audio_;
  std::optional<VideoBlock> video_;
  std::optional<FusionBlock> fusion_;
  std::optional<AvcBlock> avc_;
};

/// Audio-only baseline: the same audio block, then one linear head emitting
/// every speaker's mask at once. Estimate-to-source assignment is left to
/// the permutation-invariant loss.
class UpitModel {
 public:
  UpitModel(const ModelConfig& cfg, std::size_t num_sources,
            std::uint64_t seed)
      : cfg_(cfg), num_sources_(num_sources), rng_(mix_seed(seed, 0xd1)) {
    cfg.validate();
    require(num_sources >= 2, "UpitModel: need at least two sources");
    Rng init_rng(mix_seed(seed, 0x172));
    audio_.emplace(store_, cfg, init_rng);
    head_ = make_linear(store_, "upit.head", cfg.embed_dim,
                        num_sources * cfg.input_bins, init_rng);
  }

  UpitModel(UpitModel&&) = default;
  UpitModel& operator=(UpitModel&&) = default;
  UpitModel(const UpitModel&) = delete;
  UpitModel& operator=(const UpitModel&) = delete;

  struct Output {
    std::vector<Var> est_mag;
    std::vector<Var> masks;
    std::vector<dsp::Spectrogram> estimates;
  };

  Output forward(const dsp::Spectrogram& x, bool train) {
    x.validate();
    Output out;
    Var mag = Var::constant(x.magnitude());
    Var stacked = sigmoid_v(head_.run(audio_->forward(mag, train, rng_)));
    for (std::size_t n = 0; n < num_sources_; ++n) {
      Var mask = slice_rows(stacked, n * cfg_.input_bins, cfg_.input_bins);
      out.masks.push_back(mask);
      out.est_mag.push_back(mul(mask, mag));

      dsp::Spectrogram est;
      est.config = x.config;
      est.sample_rate = x.sample_rate;
      est.values = x.values;
      for (Eigen::Index r = 0; r < est.values.rows(); ++r)
        for (Eigen::Index c = 0; c < est.values.cols(); ++c)
          est.values(r, c) *= mask.value().at(static_cast<std::size_t>(r),
                                              static_cast<std::size_t>(c));
      out.estimates.push_back(std::move(est));
    }
    return out;
  }

  std::vector<dsp::Spectrogram> separate(const dsp::Spectrogram& x) {
    NoGradGuard guard;
    return forward(x, false).estimates;
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t num_sources() const { return num_sources_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  Rng& rng() { return rng_; }

 private:
  ModelConfig cfg_;
  std::size_t num_sources_;
  ParamStore store_;
  Rng rng_;
  std::optional<AudioBlock> audio_;
  LinearParams head_;
};

}  // namespace avsep::model
