// avsep/data/video.hpp

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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "avsep/core/common.hpp"
#include "avsep/core/ndarray.hpp"

namespace avsep::data {

/// Frame sequence with intensities in [0,1], stored frames x height x width
/// x channels.
struct VideoClip {
  NDArray frames{{1, 1, 1, 1}};
  double frame_rate = 12.5;
  std::string speaker_id;

  std::size_t frame_count() const { return frames.dim(0); }
  std::size_t height() const { return frames.dim(1); }
  std::size_t width() const { return frames.dim(2); }
  std::size_t channels() const { return frames.dim(3); }

  void validate() const {
    require(frames.rank() == 4, "VideoClip: frames must be rank 4");
    require(frame_count() >= 1, "VideoClip: need at least one frame");
    require(frame_rate > 0.0, "VideoClip: frame_rate must be positive");
    require(frames.all_finite(), "VideoClip: non-finite pixel");
  }
};

/// Converts to a single luma channel (0.299 R + 0.587 G + 0.114 B). Single
/// channel input passes through unchanged.
inline VideoClip to_grayscale(const VideoClip& clip) {
  clip.validate();
  if (clip.channels() == 1) return clip;
  require(clip.channels() == 3, "to_grayscale: channels must be 1 or 3");
  VideoClip out;
  out.frame_rate = clip.frame_rate;
  out.speaker_id = clip.speaker_id;
  out.frames = NDArray({clip.frame_count(), clip.height(), clip.width(), 1});
  const std::size_t plane = clip.height() * clip.width();
  for (std::size_t f = 0; f < clip.frame_count(); ++f)
    for (std::size_t p = 0; p < plane; ++p) {
      const double* px = clip.frames.data() + (f * plane + p) * 3;
      out.frames[f * plane + p] =
          0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
  return out;
}

/// Drops every other frame, halving the rate. Frame 0 is kept.
inline VideoClip halve_frame_rate(const VideoClip& clip) {
  clip.validate();
  const std::size_t kept = (clip.frame_count() + 1) / 2;
  VideoClip out;
  out.frame_rate = clip.frame_rate / 2.0;
  out.speaker_id = clip.speaker_id;
  out.frames =
      NDArray({kept, clip.height(), clip.width(), clip.channels()});
  const std::size_t stride =
      clip.height() * clip.width() * clip.channels();
  for (std::size_t f = 0; f < kept; ++f)
    std::copy(clip.frames.data() + 2 * f * stride,
              clip.frames.data() + (2 * f + 1) * stride,
              out.frames.data() + f * stride);
  return out;
}

// Clips are stored on disk as a directory of 8-bit PGM frames plus a small
// meta file; face cropping happens upstream.

inline void write_video_clip(const std::string& dir, const VideoClip& clip) {
  clip.validate();
  require(clip.channels() == 1, "write_video_clip: grayscale only");
  std::filesystem::create_directories(dir);
  {
    std::ofstream meta(dir + "/meta.txt");
    require_state(meta.good(), "write_video_clip: cannot write meta in ",
                  dir);
    meta << "frame_rate " << clip.frame_rate << "\n"
         << "frames " << clip.frame_count() << "\n"
         << "speaker " << clip.speaker_id << "\n";
  }
  const std::size_t plane = clip.height() * clip.width();
  for (std::size_t f = 0; f < clip.frame_count(); ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "/f%05zu.pgm", f);
    std::ofstream out(dir + name, std::ios::binary);
    require_state(out.good(), "write_video_clip: cannot write frame in ",
                  dir);
    out << "P5\n" << clip.width() << " " << clip.height() << "\n255\n";
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = std::clamp(clip.frames[f * plane + p], 0.0, 1.0);
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
    require_state(out.good(), "write_video_clip: write failed in ", dir);
  }
}

inline VideoClip read_video_clip(const std::string& dir) {
  std::ifstream meta(dir + "/meta.txt");
  require_state(meta.good(), "read_video_clip: missing meta.txt in ", dir);
  double rate = 0.0;
  std::size_t count = 0;
  std::string speaker;
  std::string key;
  while (meta >> key) {
    if (key == "frame_rate")
      meta >> rate;
    else if (key == "frames")
      meta >> count;
    else if (key == "speaker")
      meta >> speaker;
    else {
      std::string skip;
      std::getline(meta, skip);
    }
  }
  require_state(rate > 0.0 && count >= 1,
                "read_video_clip: bad meta.txt in ", dir);

  VideoClip clip;
  clip.frame_rate = rate;
  clip.speaker_id = speaker;
  for (std::size_t f = 0; f < count; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "/f%05zu.pgm", f);
    std::ifstream in(dir + name, std::ios::binary);
    require_state(in.good(), "read_video_clip: missing frame ", dir + name);
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    require_state(magic == "P5" && w > 0 && h > 0 && maxval == 255,
                  "read_video_clip: unsupported PGM ", dir + name);
    in.get();
    if (f == 0) clip.frames = NDArray({count, h, w, 1});
    require_state(h == clip.height() && w == clip.width(),
                  "read_video_clip: frame size mismatch ", dir + name);
    const std::size_t plane = h * w;
    for (std::size_t p = 0; p < plane; ++p) {
      const int c = in.get();
      require_state(c != EOF, "read_video_clip: truncated ", dir + name);
      clip.frames[f * plane + p] = static_cast<double>(c) / 255.0;
    }
  }
  clip.validate();
  return clip;
}

}  // namespace avsep::data
