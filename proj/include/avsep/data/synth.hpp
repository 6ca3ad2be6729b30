// avsep/data/synth.hpp

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
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "avsep/core/rng.hpp"
#include "avsep/data/sample.hpp"
#include "avsep/dsp/mix.hpp"
#include "avsep/dsp/stft.hpp"

namespace avsep::data {

inline std::uint64_t speaker_hash(const std::string& id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct VideoGeometry {
  std::size_t width = 64;
  std::size_t height = 64;
  double frame_rate = 12.5;

  void validate() const {
    require(width >= 4 && height >= 4, "VideoGeometry: frames too small");
    require(frame_rate > 0.0, "VideoGeometry: frame_rate must be positive");
  }
};

/// Sample assembly settings shared by the synthetic and corpus paths.
struct AvSampleConfig {
  dsp::StftConfig stft;
  VideoGeometry video;
};

// ---------------------------------------------------------------------------
// Synthetic speech.
// ---------------------------------------------------------------------------

/// Deterministic speech-like utterance: syllable bursts of a harmonic stack
/// shaped by two speaker-specific formants, occasional noise bursts, silence
/// gaps in between and a quiet noise floor. Speaker identity (pitch,
/// formants) comes from the id hash; everything else from the seed.
inline dsp::Waveform synth_utterance(const std::string& speaker_id,
                                     double seconds, double sample_rate,
                                     std::uint64_t seed) {
  require(seconds > 0.0 && sample_rate > 0.0, "synth_utterance: bad args");
  const std::uint64_t h = speaker_hash(speaker_id);
  const double f0_base = 90.0 + 130.0 * static_cast<double>(h % 1000) / 999.0;
  const double formant1 =
      400.0 + 1200.0 * static_cast<double>((h >> 10) % 1000) / 999.0;
  const double formant2 = 2.3 * formant1;
  const double bw = 150.0 + 250.0 * static_cast<double>((h >> 20) % 1000) / 999.0;

  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  std::vector<double> x(n, 0.0);

  std::size_t t = static_cast<std::size_t>(
      rng.uniform(0.0, 0.08) * sample_rate);
  while (t < n) {
    const auto dur = static_cast<std::size_t>(rng.uniform(0.12, 0.30) *
                                              sample_rate);
    const std::size_t end = std::min(n, t + dur);
    const std::size_t len = end - t;
    const auto attack = static_cast<std::size_t>(0.015 * sample_rate);
    const auto decay = static_cast<std::size_t>(0.030 * sample_rate);

    if (rng.bernoulli(0.2)) {
      // Unvoiced burst: high-passed noise.
      double prev = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double raw = rng.normal(0.0, 1.0);
        const double hp = raw - 0.75 * prev;
        prev = raw;
        double env = 1.0;
        if (k < attack) env = static_cast<double>(k) / attack;
        if (len - k < decay) env = static_cast<double>(len - k) / decay;
        x[t + k] += 0.10 * hp * env;
      }
    } else {
      const double f0 = f0_base * rng.uniform(0.92, 1.10);
      const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::vector<double> amp, phase;
      for (std::size_t k = 1; k * f0 < 0.45 * sample_rate; ++k) {
        const double f = static_cast<double>(k) * f0;
        const double shape =
            std::exp(-std::pow((f - formant1) / bw, 2.0)) +
            0.55 * std::exp(-std::pow((f - formant2) / (1.5 * bw), 2.0)) +
            0.06;
        amp.push_back(shape / std::pow(static_cast<double>(k), 0.5));
        phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      }
      for (std::size_t k = 0; k < len; ++k) {
        const double tt = static_cast<double>(k) / sample_rate;
        const double vibrato =
            1.0 + 0.015 * std::sin(2.0 * std::numbers::pi * 4.0 * tt +
                                   vib_phase);
        double env = 1.0;
        if (k < attack) env = static_cast<double>(k) / attack;
        if (len - k < decay)
          env = std::min(env, static_cast<double>(len - k) / decay);
        double s = 0.0;
        for (std::size_t m = 0; m < amp.size(); ++m)
          s += amp[m] *
               std::sin(2.0 * std::numbers::pi *
                            static_cast<double>(m + 1) * f0 * vibrato * tt +
                        phase[m]);
        x[t + k] += 0.22 * env * s;
      }
    }
    t = end + static_cast<std::size_t>(rng.uniform(0.04, 0.12) * sample_rate);
  }

  for (std::size_t k = 0; k < n; ++k) x[k] += 0.002 * rng.normal(0.0, 1.0);

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(n));
  const double gain = 0.08 / std::max(rms, 1e-9);
  for (double& v : x) v *= gain;

  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples = std::move(x);
  return w;
}

// ---------------------------------------------------------------------------
// Synthetic video.
// ---------------------------------------------------------------------------

namespace synthdetail {

/// Spectral centroid of the window's leading samples, normalized to [0,1],
/// via a small direct transform.
inline double window_centroid(const double* x, std::size_t len) {
  const std::size_t m = std::min<std::size_t>(len, 256);
  if (m < 8) return 0.0;
  double num = 0.0, den = 0.0;
  for (std::size_t b = 1; b < m / 2; ++b) {
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(b) *
                         static_cast<double>(k) / static_cast<double>(m);
      re += x[k] * std::cos(ang);
      im -= x[k] * std::sin(ang);
    }
    const double mag = std::sqrt(re * re + im * im);
    num += static_cast<double>(b) * mag;
    den += mag;
  }
  return den > 1e-12 ? num / den / (static_cast<double>(m) / 2.0) : 0.0;
}

inline void minmax_normalize(std::vector<double>& v) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  for (double& e : v) e = span > 1e-12 ? (e - lo) / span : 0.5;
}

}  // namespace synthdetail

/// Renders a face-like pattern per video frame: a speaker-identity grating,
/// a mouth ellipse that opens with short-time energy and a bright row that
/// tracks the spectral centroid. Each frame is normalized to a fixed mean
/// and then scaled affinely in the clip-normalized log-energy, so the mean
/// intensity trace correlates with the speech energy by construction.
inline VideoClip synth_video(const dsp::Waveform& audio,
                             const std::string& speaker_id,
                             const VideoGeometry& geom) {
  audio.validate();
  geom.validate();
  require(!audio.samples.empty(), "synth_video: empty audio");

  const auto hop = static_cast<std::size_t>(
      std::lround(audio.sample_rate / geom.frame_rate));
  require(hop >= 1, "synth_video: frame rate above sample rate");
  const std::size_t frames =
      std::max<std::size_t>(1, audio.samples.size() / hop);

  std::vector<double> log_e(frames), centroid(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * hop;
    const std::size_t len = std::min(hop, audio.samples.size() - start);
    double e = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double v = audio.samples[start + k];
      e += v * v;
    }
    e /= static_cast<double>(std::max<std::size_t>(1, len));
    log_e[f] = std::log(e + 1e-12);
    centroid[f] =
        synthdetail::window_centroid(audio.samples.data() + start, len);
  }
  std::vector<double> ne = log_e, nc = centroid;
  synthdetail::minmax_normalize(ne);
  synthdetail::minmax_normalize(nc);

  const std::uint64_t h = speaker_hash(speaker_id);
  const double gx = 1.0 + static_cast<double>(h % 3);
  const double gy = 1.0 + static_cast<double>((h >> 8) % 3);
  const double gphase = 2.0 * std::numbers::pi *
                        static_cast<double>((h >> 16) % 256) / 256.0;

  const std::size_t hh = geom.height, ww = geom.width;
  VideoClip clip;
  clip.frame_rate = geom.frame_rate;
  clip.speaker_id = speaker_id;
  clip.frames = NDArray({frames, hh, ww, 1});

  std::vector<double> img(hh * ww);
  for (std::size_t f = 0; f < frames; ++f) {
    const double mouth_ry = (0.05 + 0.20 * ne[f]) * static_cast<double>(hh);
    const double mouth_rx = 0.22 * static_cast<double>(ww);
    const double mouth_cy = 0.68 * static_cast<double>(hh);
    const double mouth_cx = 0.50 * static_cast<double>(ww);
    const double stripe_row = (0.08 + 0.30 * nc[f]) * static_cast<double>(hh);

    double mean = 0.0;
    for (std::size_t y = 0; y < hh; ++y)
      for (std::size_t x = 0; x < ww; ++x) {
        const double ident =
            0.5 + 0.5 * std::sin(2.0 * std::numbers::pi *
                                     (gx * static_cast<double>(x) /
                                          static_cast<double>(ww) +
                                      gy * static_cast<double>(y) /
                                          static_cast<double>(hh)) +
                                 gphase);
        const double dx = (static_cast<double>(x) - mouth_cx) / mouth_rx;
        const double dy = (static_cast<double>(y) - mouth_cy) /
                          std::max(mouth_ry, 1e-6);
        const double mouth = std::max(0.0, 1.0 - (dx * dx + dy * dy));
        const double ds = (static_cast<double>(y) - stripe_row) / 1.5;
        const double stripe = std::exp(-ds * ds);
        const double v =
            0.45 + 0.25 * ident + 0.18 * mouth + 0.12 * stripe;
        img[y * ww + x] = v;
        mean += v;
      }
    mean /= static_cast<double>(hh * ww);

    // Fixed per-frame mean, then a brightness affine in normalized
    // log-energy. Values stay below 1, so no clipping breaks the affinity.
    const double to_mean = 0.3 / mean;
    const double brightness = 0.2 + 0.7 * ne[f];
    for (std::size_t p = 0; p < hh * ww; ++p)
      clip.frames[f * hh * ww + p] = img[p] * to_mean * brightness;
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Sample assembly.
// ---------------------------------------------------------------------------

/// Truncates to the common length, scales every interferer against the
/// first (target) speaker at snr_db, sums, and analyzes. Videos are rendered
/// from the scaled sources; per-clip energy normalization makes them
/// gain-invariant.
inline MixtureSample assemble_sample(std::vector<dsp::Waveform> clean,
                                     const std::vector<std::string>& ids,
                                     double snr_db,
                                     const AvSampleConfig& cfg) {
  const std::size_t n_src = clean.size();
  require(n_src >= 2, "assemble_sample: need at least 2 speakers");
  require(ids.size() == n_src, "assemble_sample: id count mismatch");
  {
    std::set<std::string> uniq(ids.begin(), ids.end());
    require(uniq.size() == n_src, "assemble_sample: duplicate speaker ids");
  }

  std::size_t common = clean[0].samples.size();
  for (const auto& w : clean) common = std::min(common, w.samples.size());
  require(common > 0, "assemble_sample: empty source");
  for (auto& w : clean) w.samples.resize(common);

  // Cascade: each interferer is scaled against the unscaled target.
  std::vector<dsp::Waveform> sources;
  sources.push_back(clean[0]);
  for (std::size_t k = 1; k < n_src; ++k)
    sources.push_back(
        dsp::mix_at_snr(clean[0], clean[k], snr_db).scaled_interferer);

  dsp::Waveform mix;
  mix.sample_rate = clean[0].sample_rate;
  mix.samples.assign(common, 0.0);
  for (const auto& s : sources)
    for (std::size_t i = 0; i < common; ++i) mix.samples[i] += s.samples[i];

  MixtureSample sample;
  sample.snr_db = snr_db;
  sample.speaker_ids = ids;
  sample.num_time_samples = common;
  sample.mixture = dsp::stft(mix, cfg.stft);
  for (std::size_t k = 0; k < n_src; ++k) {
    sample.sources.push_back(dsp::stft(sources[k], cfg.stft));
    sample.videos.push_back(
        synth_video(sources[k], ids[k], cfg.video));
  }
  sample.validate();
  return sample;
}

/// Synthetic end-to-end sample: ids pick voices, the seed picks utterance
/// content. Deterministic.
inline MixtureSample synthesize_av_sample(
    const std::vector<dsp::Waveform>& clean,
    const std::vector<std::string>& ids, double snr_db,
    const AvSampleConfig& cfg) {
  return assemble_sample(clean, ids, snr_db, cfg);
}

}  // namespace avsep::data
