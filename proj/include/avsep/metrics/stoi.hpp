// avsep/metrics/stoi.hpp

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
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include "avsep/dsp/resample.hpp"
#include "avsep/dsp/stft.hpp"
#include "avsep/dsp/wav.hpp"

namespace avsep::metrics {

// Short-time intelligibility measure: one-third-octave band envelopes of
// 10 kHz spectrograms, compared by short-time correlation over 384 ms
// segments. Constants follow the original definition: 256-sample frames with
// 50% overlap, 512-point transform, 15 bands from 150 Hz, 40 dB silent-frame
// exclusion, 30-frame segments, -15 dB clipping bound.

namespace stoidetail {

constexpr double kRate = 10000.0;
constexpr std::size_t kFrame = 256;
constexpr std::size_t kHop = 128;
constexpr std::size_t kFft = 512;
constexpr std::size_t kBands = 15;
constexpr double kBandStart = 150.0;
constexpr std::size_t kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;

/// Symmetric taper, w[i] = 0.5 (1 - cos(2 pi (i+1) / (N+1))).
inline std::vector<double> taper() {
  std::vector<double> w(kFrame);
  for (std::size_t i = 0; i < kFrame; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi *
                                 static_cast<double>(i + 1) /
                                 static_cast<double>(kFrame + 1)));
  return w;
}

/// Drops frames whose windowed reference energy sits more than kDynRange dB
/// under the loudest frame, re-splicing the survivors by overlap-add. The
/// reference mask is applied to both signals.
inline void remove_silent_frames(std::vector<double>& x,
                                 std::vector<double>& y) {
  const std::vector<double> w = taper();
  if (x.size() < kFrame) {
    x.clear();
    y.clear();
    return;
  }
  const std::size_t frames = (x.size() - kFrame) / kHop + 1;
  std::vector<double> energy_db(frames);
  double peak = -1e300;
  for (std::size_t f = 0; f < frames; ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < kFrame; ++i) {
      const double v = x[f * kHop + i] * w[i];
      e += v * v;
    }
    energy_db[f] = 10.0 * std::log10(e / static_cast<double>(kFrame) + 1e-300);
    peak = std::max(peak, energy_db[f]);
  }
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < frames; ++f)
    if (energy_db[f] > peak - kDynRange) kept.push_back(f);

  if (kept.empty()) {
    x.clear();
    y.clear();
    return;
  }
  const std::size_t out_len = (kept.size() - 1) * kHop + kFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k)
    for (std::size_t i = 0; i < kFrame; ++i) {
      xs[k * kHop + i] += x[kept[k] * kHop + i] * w[i];
      ys[k * kHop + i] += y[kept[k] * kHop + i] * w[i];
    }
  x = std::move(xs);
  y = std::move(ys);
}

/// Windowed 512-point spectra, kFft/2+1 bins per frame.
inline std::vector<std::vector<std::complex<double>>> spectra(
    const std::vector<double>& x) {
  const std::vector<double> w = taper();
  std::vector<std::vector<std::complex<double>>> out;
  if (x.size() < kFrame) return out;
  const std::size_t frames = (x.size() - kFrame) / kHop + 1;

  dsp::stftdetail::FftwRealBuf in(kFft);
  dsp::stftdetail::FftwComplexBuf freq(kFft / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(dsp::stftdetail::planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFft), in.p, freq.p,
                                FFTW_ESTIMATE);
  }
  require_state(plan != nullptr, "stoi: transform plan failed");
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < kFrame; ++i) in.p[i] = x[f * kHop + i] * w[i];
    for (std::size_t i = kFrame; i < kFft; ++i) in.p[i] = 0.0;
    fftw_execute(plan);
    std::vector<std::complex<double>> row(kFft / 2 + 1);
    for (std::size_t b = 0; b < row.size(); ++b)
      row[b] = {freq.p[b][0], freq.p[b][1]};
    out.push_back(std::move(row));
  }
  {
    std::lock_guard<std::mutex> lock(dsp::stftdetail::planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

/// Bin ranges [lo, hi) of the 15 one-third-octave bands: edges at
/// cf 2^(+-1/6), each snapped to the nearest transform bin.
inline std::vector<std::pair<std::size_t, std::size_t>> band_bins() {
  std::vector<std::pair<std::size_t, std::size_t>> bands;
  const std::size_t bins = kFft / 2 + 1;
  auto nearest_bin = [bins](double freq) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t i = 0; i < bins; ++i) {
      const double f = static_cast<double>(i) * kRate /
                       static_cast<double>(kFft);
      const double d = (f - freq) * (f - freq);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  for (std::size_t k = 0; k < kBands; ++k) {
    const double cf = kBandStart * std::pow(2.0, static_cast<double>(k) / 3.0);
    bands.emplace_back(nearest_bin(cf * std::pow(2.0, -1.0 / 6.0)),
                       nearest_bin(cf * std::pow(2.0, 1.0 / 6.0)));
  }
  return bands;
}

/// Band envelope matrix {kBands x frames}.
inline std::vector<std::vector<double>> band_envelopes(
    const std::vector<std::vector<std::complex<double>>>& spec) {
  const auto bands = band_bins();
  std::vector<std::vector<double>> env(kBands,
                                       std::vector<double>(spec.size()));
  for (std::size_t m = 0; m < spec.size(); ++m)
    for (std::size_t j = 0; j < kBands; ++j) {
      double e = 0.0;
      for (std::size_t b = bands[j].first; b < bands[j].second; ++b)
        e += std::norm(spec[m][b]);
      env[j][m] = std::sqrt(e);
    }
  return env;
}

inline double segment_correlation(const double* x, const double* y,
                                  std::size_t n) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  const double den = std::sqrt(vx) * std::sqrt(vy);
  return den > 1e-30 ? num / den : 0.0;
}

}  // namespace stoidetail

/// Intelligibility of `estimate` against clean `reference`, typically in
/// [0, 1]. Both are resampled to 10 kHz internally.
inline double stoi(const dsp::Waveform& estimate,
                   const dsp::Waveform& reference) {
  using namespace stoidetail;
  estimate.validate();
  reference.validate();
  require(estimate.sample_rate == reference.sample_rate,
          "stoi: sample rates differ");
  require(estimate.samples.size() == reference.samples.size(),
          "stoi: lengths differ");

  std::vector<double> x = dsp::resample(reference, kRate).samples;
  std::vector<double> y = dsp::resample(estimate, kRate).samples;
  remove_silent_frames(x, y);

  const auto xe = band_envelopes(spectra(x));
  const auto ye = band_envelopes(spectra(y));
  const std::size_t frames = xe.empty() ? 0 : xe[0].size();
  require(frames >= kSegment,
          "stoi: fewer than one analysis segment of voiced signal");

  const double clip_gain = std::pow(10.0, -kBeta / 20.0);
  double acc = 0.0;
  std::size_t count = 0;
  std::vector<double> y_clipped(kSegment);
  for (std::size_t m = kSegment; m <= frames; ++m) {
    for (std::size_t j = 0; j < kBands; ++j) {
      const double* xs = xe[j].data() + (m - kSegment);
      const double* ys = ye[j].data() + (m - kSegment);
      double ex = 0.0, ey = 0.0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        ex += xs[i] * xs[i];
        ey += ys[i] * ys[i];
      }
      const double alpha = std::sqrt(ex / std::max(ey, 1e-30));
      for (std::size_t i = 0; i < kSegment; ++i)
        y_clipped[i] = std::min(alpha * ys[i], xs[i] * (1.0 + clip_gain));
      acc += segment_correlation(xs, y_clipped.data(), kSegment);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace avsep::metrics
