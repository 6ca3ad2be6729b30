// tests/test_data.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "avsep/data/dataset.hpp"
#include "avsep/data/synth.hpp"
#include "avsep/data/video.hpp"

using namespace avsep;
using namespace avsep::data;

namespace {

SynthDatasetSpec desk_spec() {
  SynthDatasetSpec spec;
  spec.segment_seconds = 1.0;
  spec.av.stft.window_length_ms = 32.0;
  spec.av.stft.hop_length_ms = 16.0;
  spec.av.video.width = 24;
  spec.av.video.height = 24;
  return spec;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(va * vb + 1e-30);
}

// Asymptotic Kolmogorov-Smirnov p-value for a sample against U[lo, hi].
double ks_uniform_pvalue(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = (x[i] - lo) / (hi - lo);
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) *
         std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

TEST_CASE("to_grayscale luma weights") {
  VideoClip rgb;
  rgb.frames = NDArray({1, 2, 2, 3});
  for (std::size_t p = 0; p < 4; ++p) {
    rgb.frames[p * 3 + 0] = 1.0;  // red
  }
  rgb.frames[0 * 3 + 1] = 1.0;  // pixel 0 white
  rgb.frames[0 * 3 + 2] = 1.0;
  VideoClip gray = to_grayscale(rgb);
  REQUIRE(gray.channels() == 1);
  REQUIRE(gray.frames[0] == Catch::Approx(1.0));    // white
  REQUIRE(gray.frames[1] == Catch::Approx(0.299));  // pure red

  VideoClip already = gray;
  REQUIRE(to_grayscale(already).frames == gray.frames);

  VideoClip bad;
  bad.frames = NDArray({1, 2, 2, 2});
  REQUIRE_THROWS_AS(to_grayscale(bad), std::invalid_argument);
}

TEST_CASE("synthetic utterances are deterministic and speaker-dependent") {
  dsp::Waveform a = synth_utterance("spk000", 0.8, 8000.0, 7);
  dsp::Waveform b = synth_utterance("spk000", 0.8, 8000.0, 7);
  REQUIRE(a.samples == b.samples);
  dsp::Waveform c = synth_utterance("spk001", 0.8, 8000.0, 7);
  REQUIRE(a.samples != c.samples);
  dsp::Waveform d = synth_utterance("spk000", 0.8, 8000.0, 8);
  REQUIRE(a.samples != d.samples);
  double rms = 0.0;
  for (double v : a.samples) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(a.samples.size()));
  REQUIRE(rms == Catch::Approx(0.08).margin(1e-6));
}

TEST_CASE("synthetic samples are bit-identical under a repeated seed") {
  const SynthDatasetSpec spec = desk_spec();
  MixtureSample s1 = build_synth_sample(spec, 123, 0);
  MixtureSample s2 = build_synth_sample(spec, 123, 0);
  REQUIRE(s1.snr_db == s2.snr_db);
  REQUIRE(s1.speaker_ids == s2.speaker_ids);
  REQUIRE(s1.mixture.values == s2.mixture.values);
  for (std::size_t n = 0; n < 2; ++n) {
    REQUIRE(s1.sources[n].values == s2.sources[n].values);
    REQUIRE(s1.videos[n].frames == s2.videos[n].frames);
  }
  MixtureSample s3 = build_synth_sample(spec, 124, 0);
  REQUIRE(s1.mixture.values != s3.mixture.values);
}

TEST_CASE("a silent speaker is rejected") {
  dsp::Waveform live = synth_utterance("spk000", 0.5, 8000.0, 1);
  dsp::Waveform silent;
  silent.sample_rate = 8000.0;
  silent.samples.assign(4000, 0.0);
  AvSampleConfig cfg;
  cfg.stft.window_length_ms = 32.0;
  cfg.stft.hop_length_ms = 16.0;
  REQUIRE_THROWS_AS(
      synthesize_av_sample({live, silent}, {"spk000", "spk001"}, 2.0, cfg),
      std::invalid_argument);
}

TEST_CASE("duplicate speakers in one sample are rejected") {
  dsp::Waveform a = synth_utterance("spk000", 0.5, 8000.0, 1);
  dsp::Waveform b = synth_utterance("spk000", 0.5, 8000.0, 2);
  AvSampleConfig cfg;
  cfg.stft.window_length_ms = 32.0;
  cfg.stft.hop_length_ms = 16.0;
  REQUIRE_THROWS_AS(
      synthesize_av_sample({a, b}, {"spk000", "spk000"}, 2.0, cfg),
      std::invalid_argument);
}

TEST_CASE("video mean intensity tracks the speaker's log-energy") {
  const SynthDatasetSpec spec = desk_spec();
  MixtureSample s = build_synth_sample(spec, 99, 1);
  for (std::size_t n = 0; n < s.num_sources(); ++n) {
    const VideoClip& clip = s.videos[n];
    // Recover the scaled source audio to measure energies against.
    dsp::Waveform src = dsp::istft(s.sources[n]);
    src.samples.resize(s.num_time_samples);
    const auto hop = static_cast<std::size_t>(
        std::lround(8000.0 / clip.frame_rate));
    std::vector<double> mean_intensity, log_energy;
    const std::size_t plane = clip.height() * clip.width();
    for (std::size_t f = 0; f < clip.frame_count(); ++f) {
      double m = 0.0;
      for (std::size_t p = 0; p < plane; ++p)
        m += clip.frames[f * plane + p];
      mean_intensity.push_back(m / static_cast<double>(plane));
      double e = 0.0;
      std::size_t len = 0;
      for (std::size_t k = f * hop;
           k < std::min((f + 1) * hop, src.samples.size()); ++k, ++len)
        e += src.samples[k] * src.samples[k];
      log_energy.push_back(
          std::log(e / static_cast<double>(std::max<std::size_t>(1, len)) +
                   1e-12));
    }
    REQUIRE(pearson(mean_intensity, log_energy) > 0.9);
  }
}

TEST_CASE("alignment index map covers both densities") {
  REQUIRE(alignment_indices(5, 5) ==
          std::vector<std::size_t>({0, 1, 2, 3, 4}));
  REQUIRE(alignment_indices(10, 20) ==
          std::vector<std::size_t>({0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6,
                                    7, 7, 8, 8, 9, 9}));
  REQUIRE(alignment_indices(12, 5) ==
          std::vector<std::size_t>({0, 2, 4, 7, 9}));
}

TEST_CASE("alignment is identity at equal rates, surjective when repeating") {
  Rng rng(61);
  NDArray feat({3, 7});
  for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = rng.normal();
  REQUIRE(align_video_to_audio(feat, 7) == feat);

  for (std::size_t fv : {2, 5, 9}) {
    for (std::size_t j : {9, 12, 30}) {
      if (j < fv) continue;
      auto idx = alignment_indices(fv, j);
      std::set<std::size_t> seen(idx.begin(), idx.end());
      REQUIRE(seen.size() == fv);  // every video frame used
      REQUIRE(std::is_sorted(idx.begin(), idx.end()));
    }
  }
}

TEST_CASE("built samples satisfy the mixture invariants") {
  SynthDatasetSpec spec = desk_spec();
  spec.num_samples = 3;
  auto samples = build_dataset(spec, 5);
  REQUIRE(samples.size() == 3);
  for (const auto& s : samples) {
    s.validate();
    dsp::ComplexMatrix sum = s.sources[0].values + s.sources[1].values;
    REQUIRE((sum - s.mixture.values).cwiseAbs().maxCoeff() < 1e-5);
    REQUIRE(s.snr_db >= 0.0);
    REQUIRE(s.snr_db <= 5.0);
  }
}

TEST_CASE("tuple drawing avoids speaker repeats and obeys the seed") {
  SynthDatasetSpec spec = desk_spec();
  spec.num_samples = 10;
  spec.segment_seconds = 0.5;
  auto samples = build_dataset(spec, 77);
  REQUIRE(samples.size() == 10);
  for (const auto& s : samples) {
    REQUIRE(s.speaker_ids.size() == 2);
    REQUIRE(s.speaker_ids[0] != s.speaker_ids[1]);
  }
  auto again = build_dataset(spec, 77);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    REQUIRE(samples[k].speaker_ids == again[k].speaker_ids);
    REQUIRE(samples[k].snr_db == again[k].snr_db);
    REQUIRE(samples[k].mixture.values == again[k].mixture.values);
  }
}

TEST_CASE("mixing ratios are uniform over the configured range") {
  std::vector<double> draws;
  draws.reserve(10000);
  for (std::size_t i = 0; i < 10000; ++i)
    draws.push_back(sample_snr(31337, i, 0.0, 5.0));
  for (double d : draws) {
    REQUIRE(d >= 0.0);
    REQUIRE(d <= 5.0);
  }
  REQUIRE(ks_uniform_pvalue(draws, 0.0, 5.0) > 0.01);
}

TEST_CASE("manifests round trip in both layouts") {
  const std::string path = "test_data_manifest.tsv";
  CorpusManifest man;
  man.split = "train";
  man.lines.push_back({{"a0.wav", "v0", "spk000"},
                       {"a1.wav", "v1", "spk001"}});
  man.lines.push_back({{"a2.wav", "v2", "spk002"},
                       {"a3.wav", "v3", "spk000"}});
  write_manifest(path, man);
  CorpusManifest back = read_manifest(path, "train");
  REQUIRE(back.lines.size() == 2);
  REQUIRE(back.lines[0].size() == 2);
  REQUIRE(back.lines[0][1].speaker_id == "spk001");
  REQUIRE(back.lines[1][0].audio_path == "a2.wav");
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "a.wav\tv\tspk000\n";
  }
  CorpusManifest pool = read_manifest(path, "test");
  REQUIRE(pool.lines.size() == 1);
  REQUIRE(pool.lines[0].size() == 1);
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "a.wav\tv\n";  // not a multiple of 3
  }
  REQUIRE_THROWS_AS(read_manifest(path, "test"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("video clips round trip through the frame archive") {
  dsp::Waveform audio = synth_utterance("spk004", 0.6, 8000.0, 3);
  VideoGeometry geom;
  geom.width = 16;
  geom.height = 12;
  VideoClip clip = synth_video(audio, "spk004", geom);
  const std::string dir = "test_data_clip";
  write_video_clip(dir, clip);
  VideoClip back = read_video_clip(dir);
  std::filesystem::remove_all(dir);
  REQUIRE(back.frame_count() == clip.frame_count());
  REQUIRE(back.height() == 12);
  REQUIRE(back.width() == 16);
  REQUIRE(back.frame_rate == clip.frame_rate);
  REQUIRE(back.speaker_id == "spk004");
  double worst = 0.0;
  for (std::size_t i = 0; i < clip.frames.size(); ++i)
    worst = std::max(worst, std::abs(back.frames[i] - clip.frames[i]));
  REQUIRE(worst <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("halving the frame rate keeps even-indexed frames") {
  dsp::Waveform audio = synth_utterance("spk005", 0.6, 8000.0, 4);
  VideoGeometry geom;
  geom.width = 8;
  geom.height = 8;
  geom.frame_rate = 25.0;
  VideoClip clip = synth_video(audio, "spk005", geom);
  VideoClip half = halve_frame_rate(clip);
  REQUIRE(half.frame_rate == 12.5);
  REQUIRE(half.frame_count() == (clip.frame_count() + 1) / 2);
  const std::size_t plane = 64;
  for (std::size_t f = 0; f < half.frame_count(); ++f)
    for (std::size_t p = 0; p < plane; ++p)
      REQUIRE(half.frames[f * plane + p] ==
              clip.frames[2 * f * plane + p]);
}

TEST_CASE("manifest-driven datasets load, mix and halve fps on request") {
  namespace fs = std::filesystem;
  const std::string dir = "test_data_corpus";
  fs::create_directories(dir);
  CorpusManifest man;
  man.split = "train";
  VideoGeometry geom;
  geom.width = 12;
  geom.height = 10;
  geom.frame_rate = 25.0;
  for (int k = 0; k < 3; ++k) {
    const std::string id = "spk00" + std::to_string(k);
    dsp::Waveform w = synth_utterance(id, 0.7, 8000.0, 40 + k);
    const std::string wav = dir + "/" + id + ".wav";
    const std::string frames = dir + "/" + id + "_frames";
    dsp::write_wav(wav, w);
    write_video_clip(frames, synth_video(w, id, geom));
    man.lines.push_back({{id + ".wav", id + "_frames", id}});
  }
  write_manifest(dir + "/train.tsv", man);

  ManifestDatasetSpec spec;
  spec.num_samples = 2;
  spec.stft.window_length_ms = 32.0;
  spec.stft.hop_length_ms = 16.0;
  spec.halve_video_fps = true;
  CorpusManifest loaded = read_manifest(dir + "/train.tsv", "train");
  auto samples = build_dataset(loaded, dir, spec, 9);
  fs::remove_all(dir);

  REQUIRE(samples.size() == 2);
  for (const auto& s : samples) {
    s.validate();
    REQUIRE(s.speaker_ids[0] != s.speaker_ids[1]);
    for (const auto& v : s.videos) {
      REQUIRE(v.frame_rate == 12.5);
      REQUIRE(v.height() == 10);
      REQUIRE(v.width() == 12);
    }
  }
}
