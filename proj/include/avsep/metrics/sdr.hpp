// avsep/metrics/sdr.hpp

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

#include "avsep/dsp/wav.hpp"

namespace avsep::metrics {

/// Signal-to-distortion ratio in dB against a single reference: the estimate
/// is split into its projection onto the reference and the residual, and the
/// energy ratio is reported. Clamped to [-60, +60] dB so a perfect (or
/// hopeless) estimate keeps aggregates finite.
inline double sdr_db(const dsp::Waveform& estimate,
                     const dsp::Waveform& reference) {
  estimate.validate();
  reference.validate();
  require(estimate.sample_rate == reference.sample_rate,
          "sdr_db: sample rates differ");
  require(estimate.samples.size() == reference.samples.size(),
          "sdr_db: lengths differ");
  require(!reference.samples.empty(), "sdr_db: empty signals");

  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    dot += estimate.samples[i] * reference.samples[i];
    ref_energy += reference.samples[i] * reference.samples[i];
  }
  require(ref_energy > 0.0, "sdr_db: silent reference");

  const double alpha = dot / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  double residual_energy = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double r = estimate.samples[i] - alpha * reference.samples[i];
    residual_energy += r * r;
  }

  if (residual_energy <= target_energy * 1e-6) return 60.0;
  if (target_energy <= residual_energy * 1e-6) return -60.0;
  const double sdr = 10.0 * std::log10(target_energy / residual_energy);
  return std::min(60.0, std::max(-60.0, sdr));
}

}  // namespace avsep::metrics
