// avsep/model/blocks.hpp

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

#include <string>
#include <vector>

#include "avsep/data/dataset.hpp"
#include "avsep/data/video.hpp"
#include "avsep/model/config.hpp"
#include "avsep/model/params.hpp"

namespace avsep::model {

/// Magnitude spectrogram I x J -> audio feature D x J. One fully connected
/// layer, a BLSTM stack with tanh and dropout after every layer, and a final
/// projection to the embedding width.
class AudioBlock {
 public:
  AudioBlock(ParamStore& store, const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    fc_ = make_linear(store, "audio.fc", cfg.input_bins, cfg.audio_hidden,
                      rng);
    std::size_t in = cfg.audio_hidden;
    for (std::size_t k = 0; k < cfg.audio_blstm_layers; ++k) {
      blstm_.push_back(make_blstm(store, str_cat("audio.blstm", k), in,
                                  cfg.audio_hidden, rng));
      in = 2 * cfg.audio_hidden;
    }
    proj_ = make_linear(store, "audio.proj", in, cfg.embed_dim, rng);
  }

  /// tanh_stages, when given, collects the post-tanh output of every BLSTM
  /// layer (range checks in tests).
  Var forward(const Var& mag, bool train, Rng& rng,
              std::vector<Var>* tanh_stages = nullptr) const {
    require(mag.value().rank() == 2 &&
                mag.value().rows() == cfg_.input_bins,
            "AudioBlock: input rows must match the configured bin count");
    Var x = fc_.run(mag);
    for (const auto& layer : blstm_) {
      x = tanh_v(layer.run(x));
      if (tanh_stages) tanh_stages->push_back(x);
      x = dropout(x, cfg_.dropout, rng, train);
    }
    return proj_.run(x);
  }

 private:
  ModelConfig cfg_;
  LinearParams fc_;
  std::vector<BlstmParams> blstm_;
  LinearParams proj_;
};

/// One residual unit: two 3x3 convolutions with per-channel normalization,
/// the residual branch recalibrated by a squeeze-and-excitation bottleneck
/// before the shortcut addition. Shortcuts that change resolution or width
/// use subsampling plus zero channel padding (no extra parameters).
class SeResidualBlock {
 public:
  SeResidualBlock(ParamStore& store, const std::string& prefix,
                  std::size_t in_ch, std::size_t out_ch, std::size_t stride,
                  std::size_t se_reduction, Rng& rng)
      : prefix_(prefix), in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
    conv1_w_ = store.create(
        prefix + ".conv1.w",
        initdetail::uniform_fan_in(rng, {out_ch, in_ch * 9}, in_ch * 9));
    conv2_w_ = store.create(
        prefix + ".conv2.w",
        initdetail::uniform_fan_in(rng, {out_ch, out_ch * 9}, out_ch * 9));
    bn1_gamma_ = store.create(prefix + ".bn1.gamma",
                              initdetail::ones({out_ch, 1}));
    bn1_beta_ = store.create(prefix + ".bn1.beta",
                             initdetail::zeros({out_ch, 1}));
    bn2_gamma_ = store.create(prefix + ".bn2.gamma",
                              initdetail::ones({out_ch, 1}));
    bn2_beta_ = store.create(prefix + ".bn2.beta",
                             initdetail::zeros({out_ch, 1}));
    store.buffer(prefix + ".bn1.running_mean", initdetail::zeros({out_ch}));
    store.buffer(prefix + ".bn1.running_var", initdetail::ones({out_ch}));
    store.buffer(prefix + ".bn2.running_mean", initdetail::zeros({out_ch}));
    store.buffer(prefix + ".bn2.running_var", initdetail::ones({out_ch}));
    const std::size_t mid = std::max<std::size_t>(1, out_ch / se_reduction);
    se_fc1_ = make_linear(store, prefix + ".se.fc1", out_ch, mid, rng);
    se_fc2_ = make_linear(store, prefix + ".se.fc2", mid, out_ch, rng);
  }

  Var forward(const Var& x, ParamStore& store, bool train) const {
    const Var zero1 = Var::constant(NDArray({out_ch_, 1}));
    Var y = nn::conv2d_frames(x, conv1_w_, zero1, 3, 3, stride_, 1);
    y = nn::batchnorm_frames(y, bn1_gamma_, bn1_beta_,
                             store.buffer(prefix_ + ".bn1.running_mean"),
                             store.buffer(prefix_ + ".bn1.running_var"),
                             0.1, 1e-5, train);
    y = relu_v(y);
    y = nn::conv2d_frames(y, conv2_w_, zero1, 3, 3, 1, 1);
    y = nn::batchnorm_frames(y, bn2_gamma_, bn2_beta_,
                             store.buffer(prefix_ + ".bn2.running_mean"),
                             store.buffer(prefix_ + ".bn2.running_var"),
                             0.1, 1e-5, train);

    // Squeeze-excite: spatial average per (channel, frame), bottleneck,
    // sigmoid gate back on the residual branch.
    Var squeezed = nn::gap_spatial(y);
    Var gate = sigmoid_v(se_fc2_.run(relu_v(se_fc1_.run(squeezed))));
    y = nn::channel_scale(y, gate);

    Var shortcut = x;
    if (stride_ > 1) shortcut = nn::spatial_subsample(shortcut, stride_);
    if (in_ch_ != out_ch_) shortcut = nn::pad_channels(shortcut, out_ch_);
    return relu_v(add(y, shortcut));
  }

 private:
  std::string prefix_;
  std::size_t in_ch_, out_ch_, stride_;
  Var conv1_w_, conv2_w_;
  Var bn1_gamma_, bn1_beta_, bn2_gamma_, bn2_beta_;
  LinearParams se_fc1_, se_fc2_;
};

/// Grayscale clip -> visual feature D x J. A 3D convolution over
/// (time, height, width) with a 5x7x7 kernel, (2,3,3) padding and unit
/// stride keeps the frame count; the per-frame 2D backbone is a stack of
/// squeeze-excitation residual stages, pooled globally per frame, run
/// through one BLSTM, projected to D, and repeated/subsampled to the
/// spectrogram frame count.
class VideoBlock {
 public:
  VideoBlock(ParamStore& store, const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    conv3d_w_ = store.create(
        "video.conv3d.w",
        initdetail::uniform_fan_in(rng, {cfg.conv3d_channels, 5 * 7 * 7},
                                   5 * 7 * 7));
    conv3d_b_ = store.create("video.conv3d.b",
                             initdetail::zeros({cfg.conv3d_channels, 1}));
    std::size_t in_ch = cfg.conv3d_channels;
    for (std::size_t s = 0; s < cfg.resnet_widths.size(); ++s) {
      for (std::size_t b = 0; b < cfg.resnet_blocks[s]; ++b) {
        const std::size_t stride = b == 0 ? cfg.resnet_strides[s] : 1;
        blocks_.emplace_back(store, str_cat("video.stage", s, ".block", b),
                             in_ch, cfg.resnet_widths[s], stride,
                             cfg.se_reduction, rng);
        in_ch = cfg.resnet_widths[s];
      }
    }
    blstm_ = make_blstm(store, "video.blstm", in_ch, cfg.video_blstm_hidden,
                        rng);
    proj_ = make_linear(store, "video.proj", 2 * cfg.video_blstm_hidden,
                        cfg.embed_dim, rng);
  }

  Var forward(const data::VideoClip& clip, std::size_t audio_frames,
              ParamStore& store, bool train) const {
    clip.validate();
    require(clip.channels() == 1, "VideoBlock: clip must be grayscale");
    require(clip.height() == cfg_.video_height &&
                clip.width() == cfg_.video_width,
            "VideoBlock: clip size does not match the configured geometry");

    // Repack {F,H,W,1} -> {1,F,H,W}.
    const std::size_t f = clip.frame_count(), h = clip.height(),
                      w = clip.width();
    NDArray x({1, f, h, w});
    std::copy(clip.frames.data(), clip.frames.data() + f * h * w, x.data());

    Var v = relu_v(nn::conv3d(Var::constant(std::move(x)), conv3d_w_,
                              conv3d_b_, 5, 7, 7, 2, 3));
    for (const auto& block : blocks_) v = block.forward(v, store, train);
    Var feat = nn::gap_spatial(v);
    feat = proj_.run(blstm_.run(feat));
    return gather_cols(feat, data::alignment_indices(f, audio_frames));
  }

 private:
  ModelConfig cfg_;
  Var conv3d_w_, conv3d_b_;
  std::vector<SeResidualBlock> blocks_;
  BlstmParams blstm_;
  LinearParams proj_;
};

/// (audio feature, visual feature) -> pre-activation mask I x J. The two
/// D x J maps are merged as channels by a 1x1 convolution (a learned
/// two-weight blend), then a BLSTM over frames and a per-frame linear layer
/// produce one mask row per frequency bin.
class FusionBlock {
 public:
  FusionBlock(ParamStore& store, const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    NDArray half({1, 1});
    half[0] = 0.5;
    mix_w1_ = store.create("fusion.mix.w1", half);
    mix_w2_ = store.create("fusion.mix.w2", half);
    mix_b_ = store.create("fusion.mix.b", initdetail::zeros({1, 1}));
    blstm_ = make_blstm(store, "fusion.blstm", cfg.embed_dim,
                        cfg.fusion_blstm_hidden, rng);
    out_ = make_linear(store, "fusion.out", 2 * cfg.fusion_blstm_hidden,
                       cfg.input_bins, rng);
  }

  Var forward(const Var& c_a, const Var& c_v) const {
    require(c_a.value().rank() == 2 && c_v.value().rank() == 2 &&
                c_a.value().rows() == cfg_.embed_dim &&
                c_v.value().rows() == cfg_.embed_dim &&
                c_a.value().cols() == c_v.value().cols(),
            "FusionBlock: feature shapes must both be D x J");
    Var mixed = add_scalar_var(
        add(mul_scalar_var(c_a, mix_w1_), mul_scalar_var(c_v, mix_w2_)),
        mix_b_);
    return out_.run(blstm_.run(mixed));
  }

 private:
  ModelConfig cfg_;
  Var mix_w1_, mix_w2_, mix_b_;
  BlstmParams blstm_;
  LinearParams out_;
};

/// Pre-activation mask I x J -> correspondence feature D x J, one linear
/// map per frame followed by tanh. Train-time only; inference drops it.
class AvcBlock {
 public:
  AvcBlock(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
    lin_ = make_linear(store, "avc", cfg.input_bins, cfg.embed_dim, rng);
  }

  Var forward(const Var& m) const { return tanh_v(lin_.run(m)); }

 private:
  LinearParams lin_;
};

}  // namespace avsep::model
