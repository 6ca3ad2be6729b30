// avsep/data/dataset.hpp

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

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "avsep/core/rng.hpp"
#include "avsep/data/sample.hpp"
#include "avsep/data/synth.hpp"
#include "avsep/dsp/resample.hpp"
#include "avsep/dsp/wav.hpp"

namespace avsep::data {

// ---------------------------------------------------------------------------
// Audio/video frame alignment.
// ---------------------------------------------------------------------------

/// Nearest-neighbor index map from J audio frames onto F_v video frames:
/// audio frame j reads video frame floor(j * F_v / J). Repeats video frames
/// when audio is denser, subsamples when video is denser.
inline std::vector<std::size_t> alignment_indices(std::size_t video_frames,
                                                  std::size_t audio_frames) {
  require(video_frames >= 1 && audio_frames >= 1,
          "alignment_indices: empty axis");
  std::vector<std::size_t> idx(audio_frames);
  for (std::size_t j = 0; j < audio_frames; ++j)
    idx[j] = j * video_frames / audio_frames;
  return idx;
}

/// Applies the index map to per-frame feature columns: D x F_v -> D x J.
inline NDArray align_video_to_audio(const NDArray& video_features,
                                    std::size_t audio_frames) {
  require(video_features.rank() == 2, "align_video_to_audio: rank");
  const std::vector<std::size_t> idx =
      alignment_indices(video_features.cols(), audio_frames);
  NDArray out({video_features.rows(), audio_frames});
  for (std::size_t j = 0; j < audio_frames; ++j)
    out.mat().col(static_cast<Eigen::Index>(j)) =
        video_features.mat().col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

// ---------------------------------------------------------------------------
// Manifests.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string audio_path;
  std::string frames_path;
  std::string speaker_id;
};

/// Tab-separated, one line per item. A line may hold one (audio, frames,
/// speaker) triple, making an utterance pool the builder draws tuples from,
/// or N triples forming a precomposed N-speaker sample.
struct CorpusManifest {
  std::vector<std::vector<ManifestEntry>> lines;
  std::string split;

  void validate() const {
    require(!lines.empty(), "CorpusManifest: empty manifest");
    for (const auto& line : lines)
      for (const auto& e : line) {
        require(!e.speaker_id.empty(), "CorpusManifest: empty speaker id");
        require(!e.audio_path.empty() && !e.frames_path.empty(),
                "CorpusManifest: empty path");
      }
  }
};

inline CorpusManifest read_manifest(const std::string& path,
                                    const std::string& split) {
  std::ifstream in(path);
  require_state(in.good(), "read_manifest: cannot open ", path);
  CorpusManifest man;
  man.split = split;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    require_state(fields.size() % 3 == 0 && !fields.empty(),
                  "read_manifest: field count not a multiple of 3 in ",
                  path);
    std::vector<ManifestEntry> entries;
    for (std::size_t k = 0; k < fields.size(); k += 3)
      entries.push_back({fields[k], fields[k + 1], fields[k + 2]});
    man.lines.push_back(std::move(entries));
  }
  man.validate();
  return man;
}

inline void write_manifest(const std::string& path,
                           const CorpusManifest& man) {
  man.validate();
  std::ofstream out(path);
  require_state(out.good(), "write_manifest: cannot open ", path);
  for (const auto& line : man.lines) {
    for (std::size_t k = 0; k < line.size(); ++k)
      out << (k ? "\t" : "") << line[k].audio_path << "\t"
          << line[k].frames_path << "\t" << line[k].speaker_id;
    out << "\n";
  }
  require_state(out.good(), "write_manifest: write failed: ", path);
}

// ---------------------------------------------------------------------------
// Dataset builders.
// ---------------------------------------------------------------------------

/// The per-sample mixing ratio, uniform over [lo, hi]. Exposed so the
/// distribution is testable without building samples.
inline double sample_snr(std::uint64_t seed, std::size_t index, double lo,
                         double hi) {
  Rng rng(mix_seed(seed, 0x5a00000000ULL + index));
  return rng.uniform(lo, hi);
}

struct SynthDatasetSpec {
  std::size_t num_samples = 8;
  std::size_t num_speakers = 4;
  std::size_t sources_per_mix = 2;
  double segment_seconds = 2.0;
  double sample_rate = 8000.0;
  double snr_lo_db = 0.0;
  double snr_hi_db = 5.0;
  AvSampleConfig av;
  std::string speaker_prefix = "spk";
  // Split disjointness: each split names speakers from its own offset range.
  std::size_t speaker_id_offset = 0;

  std::string speaker_name(std::size_t k) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03zu", speaker_prefix.c_str(),
                  speaker_id_offset + k);
    return std::string(buf);
  }

  void validate() const {
    require(num_samples >= 1, "SynthDatasetSpec: num_samples >= 1");
    require(sources_per_mix >= 2, "SynthDatasetSpec: sources_per_mix >= 2");
    require(num_speakers >= sources_per_mix,
            "SynthDatasetSpec: fewer speakers than sources per mixture");
    require(segment_seconds > 0.0 && sample_rate > 0.0,
            "SynthDatasetSpec: bad timing");
    require(snr_lo_db <= snr_hi_db, "SynthDatasetSpec: snr range inverted");
  }
};

/// The clean inputs for synthetic sample `index`: speaker choice, utterance
/// content and ratio all derive from (seed, index) alone, so iteration
/// order and worker split cannot change the result.
inline MixtureSample build_synth_sample(const SynthDatasetSpec& spec,
                                        std::uint64_t seed,
                                        std::size_t index) {
  spec.validate();
  Rng rng(mix_seed(seed, 0xda70000000ULL + index));
  std::vector<std::size_t> order = rng.permutation(spec.num_speakers);
  std::vector<std::string> ids;
  std::vector<dsp::Waveform> clean;
  for (std::size_t k = 0; k < spec.sources_per_mix; ++k) {
    ids.push_back(spec.speaker_name(order[k]));
    clean.push_back(synth_utterance(
        ids.back(), spec.segment_seconds, spec.sample_rate,
        mix_seed(seed, 0x07e0000000ULL + index * 64 + k)));
  }
  const double snr =
      sample_snr(seed, index, spec.snr_lo_db, spec.snr_hi_db);
  return synthesize_av_sample(clean, ids, snr, spec.av);
}

inline std::vector<MixtureSample> build_dataset(const SynthDatasetSpec& spec,
                                                std::uint64_t seed) {
  spec.validate();
  std::vector<MixtureSample> out;
  out.reserve(spec.num_samples);
  for (std::size_t s = 0; s < spec.num_samples; ++s)
    out.push_back(build_synth_sample(spec, seed, s));
  return out;
}

struct ManifestDatasetSpec {
  std::size_t sources_per_mix = 2;
  // Utterance-pool manifests draw this many samples; precomposed manifests
  // use their line count and ignore it.
  std::size_t num_samples = 0;
  double target_sample_rate = 8000.0;
  double snr_lo_db = 0.0;
  double snr_hi_db = 5.0;
  double segment_seconds = 0.0;  // 0: keep full (common-truncated) length
  bool halve_video_fps = false;
  dsp::StftConfig stft;
};

namespace datasetdetail {

struct LoadedUtterance {
  dsp::Waveform audio;
  VideoClip video;
};

inline LoadedUtterance load_utterance(const ManifestEntry& e,
                                      const std::string& base_dir,
                                      const ManifestDatasetSpec& spec) {
  const auto join = [&base_dir](const std::string& p) {
    return p.empty() || p[0] == '/' || base_dir.empty() ? p
                                                        : base_dir + "/" + p;
  };
  LoadedUtterance u;
  u.audio = dsp::resample(dsp::read_wav(join(e.audio_path)),
                          spec.target_sample_rate);
  if (spec.segment_seconds > 0.0) {
    const auto cap = static_cast<std::size_t>(
        std::lround(spec.segment_seconds * spec.target_sample_rate));
    if (u.audio.samples.size() > cap) u.audio.samples.resize(cap);
  }
  u.video = to_grayscale(read_video_clip(join(e.frames_path)));
  if (spec.halve_video_fps) u.video = halve_frame_rate(u.video);
  u.video.speaker_id = e.speaker_id;
  return u;
}

inline MixtureSample compose(const std::vector<LoadedUtterance>& utts,
                             const std::vector<std::string>& ids, double snr,
                             const ManifestDatasetSpec& spec) {
  std::vector<dsp::Waveform> clean;
  for (const auto& u : utts) clean.push_back(u.audio);
  AvSampleConfig av;
  av.stft = spec.stft;
  MixtureSample s = assemble_sample(clean, ids, snr, av);
  // Ingested video replaces the placeholder clips the assembler rendered.
  for (std::size_t k = 0; k < utts.size(); ++k) s.videos[k] = utts[k].video;
  s.validate();
  return s;
}

}  // namespace datasetdetail

/// Builds samples from a manifest. Precomposed lines are used one sample
/// per line (ratios still drawn per line index); utterance-pool manifests
/// get tuples of distinct speakers drawn for them.
inline std::vector<MixtureSample> build_dataset(
    const CorpusManifest& man, const std::string& base_dir,
    const ManifestDatasetSpec& spec, std::uint64_t seed) {
  man.validate();
  require(spec.sources_per_mix >= 2, "build_dataset: sources_per_mix >= 2");
  std::vector<MixtureSample> out;

  const bool precomposed = man.lines[0].size() > 1;
  if (precomposed) {
    for (std::size_t s = 0; s < man.lines.size(); ++s) {
      const auto& line = man.lines[s];
      require(line.size() == spec.sources_per_mix,
              "build_dataset: line speaker count != sources_per_mix");
      std::vector<datasetdetail::LoadedUtterance> utts;
      std::vector<std::string> ids;
      for (const auto& e : line) {
        utts.push_back(datasetdetail::load_utterance(e, base_dir, spec));
        ids.push_back(e.speaker_id);
      }
      out.push_back(datasetdetail::compose(
          utts, ids, sample_snr(seed, s, spec.snr_lo_db, spec.snr_hi_db),
          spec));
    }
    return out;
  }

  // Utterance pool: group by speaker, then draw tuples.
  std::map<std::string, std::vector<const ManifestEntry*>> by_speaker;
  for (const auto& line : man.lines)
    by_speaker[line[0].speaker_id].push_back(&line[0]);
  require(by_speaker.size() >= spec.sources_per_mix,
          "build_dataset: fewer distinct speakers than sources_per_mix");
  require(spec.num_samples >= 1,
          "build_dataset: num_samples required for utterance-pool manifests");
  std::vector<std::string> speakers;
  for (const auto& [id, _] : by_speaker) speakers.push_back(id);

  for (std::size_t s = 0; s < spec.num_samples; ++s) {
    Rng rng(mix_seed(seed, 0xd4a0000000ULL + s));
    std::vector<std::size_t> order = rng.permutation(speakers.size());
    std::vector<datasetdetail::LoadedUtterance> utts;
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < spec.sources_per_mix; ++k) {
      const auto& pool = by_speaker[speakers[order[k]]];
      const ManifestEntry* e = pool[rng.index(pool.size())];
      utts.push_back(datasetdetail::load_utterance(*e, base_dir, spec));
      ids.push_back(e->speaker_id);
    }
    out.push_back(datasetdetail::compose(
        utts, ids, sample_snr(seed, s, spec.snr_lo_db, spec.snr_hi_db),
        spec));
  }
  return out;
}

}  // namespace avsep::data
