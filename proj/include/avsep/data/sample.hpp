// avsep/data/sample.hpp

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

#include "avsep/core/common.hpp"
#include "avsep/data/video.hpp"
#include "avsep/dsp/stft.hpp"

namespace avsep::data {

/// One training/evaluation item: a mixture spectrogram, the per-speaker
/// source spectrograms it sums from, and the matching video streams.
struct MixtureSample {
  dsp::Spectrogram mixture;
  std::vector<dsp::Spectrogram> sources;
  std::vector<VideoClip> videos;
  double snr_db = 0.0;
  std::vector<std::string> speaker_ids;
  std::size_t num_time_samples = 0;  // pre-analysis length, for exact trims

  std::size_t num_sources() const { return sources.size(); }

  void validate() const {
    require(sources.size() >= 2, "MixtureSample: need at least 2 sources");
    require(videos.size() == sources.size() &&
                speaker_ids.size() == sources.size(),
            "MixtureSample: per-speaker list lengths differ");
    mixture.validate();
    for (const auto& s : sources) {
      s.validate();
      require(s.bins() == mixture.bins() && s.frames() == mixture.frames(),
              "MixtureSample: spectrogram shapes differ");
    }
    for (const auto& v : videos) v.validate();
    for (const auto& id : speaker_ids)
      require(!id.empty(), "MixtureSample: empty speaker id");
    // The mixture must be the complex sum of its sources.
    dsp::ComplexMatrix sum = sources[0].values;
    for (std::size_t n = 1; n < sources.size(); ++n) sum += sources[n].values;
    require((sum - mixture.values).cwiseAbs().maxCoeff() < 1e-5,
            "MixtureSample: mixture is not the sum of the sources");
  }
};

}  // namespace avsep::data
