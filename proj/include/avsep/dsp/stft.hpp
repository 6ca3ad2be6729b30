// avsep/dsp/stft.hpp

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

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "avsep/core/common.hpp"
#include "avsep/core/ndarray.hpp"
#include "avsep/dsp/wav.hpp"

namespace avsep::dsp {

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

enum class Window { kHamming, kHann };

struct StftConfig {
  double window_length_ms = 400.0;
  double hop_length_ms = 200.0;
  Window window = Window::kHamming;
  std::size_t fft_size = 0;  // 0: use the window length in samples

  std::size_t win_samples(double rate) const {
    return static_cast<std::size_t>(
        std::lround(window_length_ms * rate / 1000.0));
  }
  std::size_t hop_samples(double rate) const {
    return static_cast<std::size_t>(
        std::lround(hop_length_ms * rate / 1000.0));
  }
  std::size_t fft(double rate) const {
    return fft_size == 0 ? win_samples(rate) : fft_size;
  }
  std::size_t bins(double rate) const { return fft(rate) / 2 + 1; }

  void validate(double rate) const {
    require(rate > 0.0, "StftConfig: sample rate must be positive");
    const std::size_t win = win_samples(rate), hop = hop_samples(rate);
    require(win >= 1, "StftConfig: window shorter than one sample");
    require(hop >= 1 && hop <= win, "StftConfig: need 0 < hop <= window");
    require(fft(rate) >= win, "StftConfig: fft_size < window length");
  }
};

/// Complex time-frequency matrix, bins x frames.
struct Spectrogram {
  ComplexMatrix values;
  StftConfig config;
  double sample_rate = 8000.0;

  std::size_t bins() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t frames() const {
    return static_cast<std::size_t>(values.cols());
  }

  NDArray magnitude() const {
    NDArray m({bins(), frames()});
    m.mat() = values.cwiseAbs();
    return m;
  }
  NDArray phase() const {
    NDArray p({bins(), frames()});
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      for (Eigen::Index c = 0; c < values.cols(); ++c)
        p.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
            std::arg(values(r, c));
    return p;
  }

  void validate() const {
    require(values.allFinite(), "Spectrogram: non-finite entry");
    require(bins() == config.bins(sample_rate),
            "Spectrogram: row count does not match config");
  }
};

namespace stftdetail {

// FFTW's planner is not thread-safe; executing distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwRealBuf {
  double* p = nullptr;
  explicit FftwRealBuf(std::size_t n)
      : p(static_cast<double*>(fftw_malloc(sizeof(double) * n))) {}
  ~FftwRealBuf() { fftw_free(p); }
  FftwRealBuf(const FftwRealBuf&) = delete;
  FftwRealBuf& operator=(const FftwRealBuf&) = delete;
};

struct FftwComplexBuf {
  fftw_complex* p = nullptr;
  explicit FftwComplexBuf(std::size_t n)
      : p(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
  }
  ~FftwComplexBuf() { fftw_free(p); }
  FftwComplexBuf(const FftwComplexBuf&) = delete;
  FftwComplexBuf& operator=(const FftwComplexBuf&) = delete;
};

inline std::vector<double> make_window(Window kind, std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(n) /
                         static_cast<double>(length);
    w[n] = kind == Window::kHamming ? 0.54 - 0.46 * std::cos(phase)
                                    : 0.5 * (1.0 - std::cos(phase));
  }
  return w;
}

}  // namespace stftdetail

/// Frames, windows and transforms a waveform. The final partial frame is
/// zero-padded so every sample is covered.
inline Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  w.validate();
  require(!w.samples.empty(), "stft: empty waveform");
  cfg.validate(w.sample_rate);

  const std::size_t win = cfg.win_samples(w.sample_rate);
  const std::size_t hop = cfg.hop_samples(w.sample_rate);
  const std::size_t nfft = cfg.fft(w.sample_rate);
  const std::size_t n = w.samples.size();
  const std::size_t frames =
      n <= win ? 1 : (n - win + hop - 1) / hop + 1;
  const std::size_t bins = nfft / 2 + 1;
  const std::vector<double> window =
      stftdetail::make_window(cfg.window, win);

  Spectrogram out;
  out.config = cfg;
  out.sample_rate = w.sample_rate;
  out.values.setZero(static_cast<Eigen::Index>(bins),
                     static_cast<Eigen::Index>(frames));

  stftdetail::FftwRealBuf in_buf(nfft);
  stftdetail::FftwComplexBuf out_buf(bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(stftdetail::planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in_buf.p, out_buf.p,
                                FFTW_ESTIMATE);
  }
  require_state(plan != nullptr, "stft: FFTW plan creation failed");

  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t k = 0; k < nfft; ++k) {
      const std::size_t src = start + k;
      in_buf.p[k] =
          (k < win && src < n) ? w.samples[src] * window[k] : 0.0;
    }
    fftw_execute(plan);
    for (std::size_t b = 0; b < bins; ++b)
      out.values(static_cast<Eigen::Index>(b),
                 static_cast<Eigen::Index>(t)) =
          std::complex<double>(out_buf.p[b][0], out_buf.p[b][1]);
  }
  {
    std::lock_guard<std::mutex> lock(stftdetail::planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

/// Weighted overlap-add synthesis with per-sample window-power
/// normalization; istft(stft(w)) reproduces w over the covered range. Output
/// length is (frames-1)*hop + window; callers trim to the original length.
inline Waveform istft(const Spectrogram& s) {
  require(s.frames() > 0, "istft: zero frames");
  s.validate();

  const std::size_t win = s.config.win_samples(s.sample_rate);
  const std::size_t hop = s.config.hop_samples(s.sample_rate);
  const std::size_t nfft = s.config.fft(s.sample_rate);
  const std::size_t bins = s.bins();
  const std::size_t frames = s.frames();
  const std::vector<double> window =
      stftdetail::make_window(s.config.window, win);

  Waveform out;
  out.sample_rate = s.sample_rate;
  const std::size_t total = (frames - 1) * hop + win;
  std::vector<double> num(total, 0.0), den(total, 0.0);

  stftdetail::FftwComplexBuf in_buf(bins);
  stftdetail::FftwRealBuf out_buf(nfft);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(stftdetail::planner_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(nfft), in_buf.p, out_buf.p,
                                FFTW_ESTIMATE);
  }
  require_state(plan != nullptr, "istft: FFTW plan creation failed");

  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t b = 0; b < bins; ++b) {
      const auto v = s.values(static_cast<Eigen::Index>(b),
                              static_cast<Eigen::Index>(t));
      in_buf.p[b][0] = v.real();
      in_buf.p[b][1] = v.imag();
    }
    fftw_execute(plan);
    const std::size_t start = t * hop;
    for (std::size_t k = 0; k < win; ++k) {
      const double sample = out_buf.p[k] / static_cast<double>(nfft);
      num[start + k] += sample * window[k];
      den[start + k] += window[k] * window[k];
    }
  }
  {
    std::lock_guard<std::mutex> lock(stftdetail::planner_mutex());
    fftw_destroy_plan(plan);
  }

  out.samples.resize(total);
  for (std::size_t i = 0; i < total; ++i)
    out.samples[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
  return out;
}

}  // namespace avsep::dsp
