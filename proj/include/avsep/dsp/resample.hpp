// avsep/dsp/resample.hpp

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

#include <cmath>
#include <cstddef>
#include <numbers>

#include "avsep/core/common.hpp"
#include "avsep/dsp/wav.hpp"

namespace avsep::dsp {

/// Windowed-sinc rate conversion. Anti-aliases when downsampling; exact copy
/// when the rates already match.
inline Waveform resample(const Waveform& w, double target_rate) {
  require(target_rate > 0.0, "resample: target_rate must be positive");
  w.validate();
  if (w.sample_rate == target_rate) return w;
  Waveform out;
  out.sample_rate = target_rate;
  if (w.samples.empty()) return out;

  const double ratio = target_rate / w.sample_rate;
  // Cutoff in cycles per input sample, pulled slightly inside Nyquist.
  const double cutoff = 0.5 * std::min(1.0, ratio) * 0.945;
  const auto half_width = static_cast<std::ptrdiff_t>(
      std::ceil(16.0 / (2.0 * cutoff)));
  const auto n_in = static_cast<std::ptrdiff_t>(w.samples.size());
  const auto n_out = static_cast<std::size_t>(
      std::floor(static_cast<double>(w.samples.size()) * ratio));
  out.samples.resize(n_out, 0.0);

  for (std::size_t n = 0; n < n_out; ++n) {
    const double center = static_cast<double>(n) / ratio;
    const auto k0 = static_cast<std::ptrdiff_t>(std::floor(center)) -
                    half_width + 1;
    const auto k1 = static_cast<std::ptrdiff_t>(std::floor(center)) +
                    half_width;
    double acc = 0.0;
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, k0);
         k <= std::min(n_in - 1, k1); ++k) {
      const double u = static_cast<double>(k) - center;
      const double x = 2.0 * cutoff * u;
      const double sinc =
          x == 0.0 ? 1.0
                   : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double wu = u / static_cast<double>(half_width);
      const double window =
          0.42 + 0.5 * std::cos(std::numbers::pi * wu) +
          0.08 * std::cos(2.0 * std::numbers::pi * wu);
      acc += w.samples[static_cast<std::size_t>(k)] * 2.0 * cutoff * sinc *
             window;
    }
    out.samples[n] = acc;
  }
  return out;
}

}  // namespace avsep::dsp
