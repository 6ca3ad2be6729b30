// avsep/model/config.hpp

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

#include <cstddef>
#include <string>
#include <vector>

#include "avsep/core/common.hpp"

namespace avsep::model {

/// Network sizing. Two presets: full_size() mirrors the published scale
/// (256-wide embeddings, 18-layer video backbone), desk_size() shrinks every
/// width so complete experiments run on a workstation in minutes.
struct ModelConfig {
  std::size_t input_bins = 0;  // I, spectrogram rows

  // Shared embedding width for audio, visual and correspondence features.
  std::size_t embed_dim = 256;  // D

  // Audio block.
  std::size_t audio_hidden = 256;  // per direction
  std::size_t audio_blstm_layers = 3;
  double dropout = 0.5;

  // Video block.
  std::size_t video_height = 64;
  std::size_t video_width = 64;
  std::size_t conv3d_channels = 64;
  std::vector<std::size_t> resnet_widths = {64, 128, 256, 512};
  std::vector<std::size_t> resnet_blocks = {2, 2, 2, 2};
  std::vector<std::size_t> resnet_strides = {1, 2, 2, 2};
  std::size_t se_reduction = 16;
  std::size_t video_blstm_hidden = 256;

  // Fusion block.
  std::size_t fusion_blstm_hidden = 256;

  /// Smallest legal input height/width given the stride pyramid.
  std::size_t min_spatial() const {
    std::size_t total = 1;
    for (std::size_t s : resnet_strides) total *= s;
    return 2 * total;
  }

  void validate() const {
    require(input_bins >= 1, "ModelConfig: input_bins must be positive");
    require(embed_dim >= 1, "ModelConfig: embed_dim must be positive");
    require(audio_hidden >= 1 && video_blstm_hidden >= 1 &&
                fusion_blstm_hidden >= 1,
            "ModelConfig: hidden sizes must be positive");
    require(audio_blstm_layers >= 1, "ModelConfig: need at least one BLSTM");
    require(dropout >= 0.0 && dropout < 1.0,
            "ModelConfig: dropout must lie in [0, 1)");
    require(conv3d_channels >= 1, "ModelConfig: conv3d_channels");
    require(!resnet_widths.empty() &&
                resnet_widths.size() == resnet_blocks.size() &&
                resnet_widths.size() == resnet_strides.size(),
            "ModelConfig: resnet stage lists must be nonempty and equal length");
    for (std::size_t k = 0; k < resnet_widths.size(); ++k) {
      require(resnet_widths[k] >= 1 && resnet_blocks[k] >= 1 &&
                  resnet_strides[k] >= 1,
              "ModelConfig: resnet stage entries must be positive");
    }
    require(se_reduction >= 1, "ModelConfig: se_reduction must be positive");
    require(video_height >= min_spatial() && video_width >= min_spatial(),
            str_cat("ModelConfig: video frames must be at least ",
                    min_spatial(), "x", min_spatial(),
                    " for the configured strides"));
  }

  static ModelConfig full_size(std::size_t bins) {
    ModelConfig cfg;
    cfg.input_bins = bins;
    return cfg;
  }

  static ModelConfig desk_size(std::size_t bins) {
    ModelConfig cfg;
    cfg.input_bins = bins;
    cfg.embed_dim = 64;
    cfg.audio_hidden = 64;
    cfg.video_height = 16;
    cfg.video_width = 16;
    cfg.conv3d_channels = 6;
    cfg.resnet_widths = {12, 24};
    cfg.resnet_blocks = {1, 1};
    cfg.resnet_strides = {2, 2};
    cfg.se_reduction = 4;
    cfg.video_blstm_hidden = 48;
    cfg.fusion_blstm_hidden = 64;
    return cfg;
  }
};

}  // namespace avsep::model
