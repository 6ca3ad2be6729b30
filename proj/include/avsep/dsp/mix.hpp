// avsep/dsp/mix.hpp

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

#include "avsep/core/common.hpp"
#include "avsep/dsp/wav.hpp"

namespace avsep::dsp {

struct MixResult {
  Waveform mixture;
  Waveform target;             // truncated to the common length, unscaled
  Waveform scaled_interferer;  // truncated and gain-adjusted
  double gain = 1.0;
};

inline double mean_power(const std::vector<double>& s, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += s[i] * s[i];
  return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

/// Scales the interferer so the target-to-interferer power ratio over the
/// common length equals snr_db, then sums. Both inputs are truncated to the
/// shorter signal first; the sources to separate are {target,
/// scaled_interferer}.
inline MixResult mix_at_snr(const Waveform& target,
                            const Waveform& interferer, double snr_db) {
  target.validate();
  interferer.validate();
  require(target.sample_rate == interferer.sample_rate,
          "mix_at_snr: sample rates differ");
  require(std::isfinite(snr_db), "mix_at_snr: non-finite snr_db");
  const std::size_t n =
      std::min(target.samples.size(), interferer.samples.size());
  require(n > 0, "mix_at_snr: empty input");

  const double p_t = mean_power(target.samples, n);
  const double p_i = mean_power(interferer.samples, n);
  require(p_t > 0.0 && p_i > 0.0,
          "mix_at_snr: silent input, ratio undefined");

  const double gain = std::sqrt(p_t / (p_i * std::pow(10.0, snr_db / 10.0)));

  MixResult r;
  r.gain = gain;
  r.target.sample_rate = target.sample_rate;
  r.scaled_interferer.sample_rate = target.sample_rate;
  r.mixture.sample_rate = target.sample_rate;
  r.target.samples.assign(target.samples.begin(),
                          target.samples.begin() +
                              static_cast<std::ptrdiff_t>(n));
  r.scaled_interferer.samples.resize(n);
  r.mixture.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.scaled_interferer.samples[i] = gain * interferer.samples[i];
    r.mixture.samples[i] =
        r.target.samples[i] + r.scaled_interferer.samples[i];
  }
  return r;
}

}  // namespace avsep::dsp
