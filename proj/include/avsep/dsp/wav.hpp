// avsep/dsp/wav.hpp

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
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "avsep/core/common.hpp"

namespace avsep::dsp {

/// Mono audio at a given rate. Amplitudes are dimensionless, nominally in
/// [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 8000.0;

  void validate() const {
    require(sample_rate > 0.0, "Waveform: sample_rate must be positive");
    for (double s : samples)
      require(std::isfinite(s), "Waveform: non-finite sample");
  }
};

namespace wavdetail {

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(static_cast<std::uint32_t>(b[0]) |
                                    (static_cast<std::uint32_t>(b[1]) << 8));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace wavdetail

/// Reads a 16-bit PCM mono WAV file. Other encodings are rejected.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require_state(in.good(), "read_wav: cannot open ", path);

  char tag[4];
  in.read(tag, 4);
  require_state(in.good() && std::string(tag, 4) == "RIFF",
                "read_wav: not a RIFF file: ", path);
  wavdetail::read_u32(in);
  in.read(tag, 4);
  require_state(in.good() && std::string(tag, 4) == "WAVE",
                "read_wav: not a WAVE file: ", path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool got_fmt = false;
  Waveform w;
  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = wavdetail::read_u32(in);
    const std::string id(tag, 4);
    if (id == "fmt ") {
      format = wavdetail::read_u16(in);
      channels = wavdetail::read_u16(in);
      rate = wavdetail::read_u32(in);
      wavdetail::read_u32(in);
      wavdetail::read_u16(in);
      bits = wavdetail::read_u16(in);
      if (chunk_size > 16)
        in.seekg(chunk_size - 16 + (chunk_size & 1), std::ios::cur);
      else if (chunk_size & 1)
        in.seekg(1, std::ios::cur);
      got_fmt = true;
    } else if (id == "data") {
      require_state(got_fmt, "read_wav: data chunk before fmt: ", path);
      require_state(format == 1, "read_wav: only PCM supported: ", path);
      require_state(channels == 1, "read_wav: only mono supported: ", path);
      require_state(bits == 16, "read_wav: only 16-bit supported: ", path);
      const std::size_t n = chunk_size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t u = wavdetail::read_u16(in);
        w.samples[i] = static_cast<double>(static_cast<std::int16_t>(u)) /
                       32768.0;
      }
      require_state(in.good(), "read_wav: truncated data chunk: ", path);
      w.sample_rate = static_cast<double>(rate);
      w.validate();
      return w;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw ConfigError(str_cat("read_wav: no data chunk in ", path));
}

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] before quantizing.
inline void write_wav(const std::string& path, const Waveform& w) {
  w.validate();
  std::ofstream out(path, std::ios::binary);
  require_state(out.good(), "write_wav: cannot open ", path);
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  out.write("RIFF", 4);
  wavdetail::write_u32(out, 36 + 2 * n);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  wavdetail::write_u32(out, 16);
  wavdetail::write_u16(out, 1);
  wavdetail::write_u16(out, 1);
  wavdetail::write_u32(out, rate);
  wavdetail::write_u32(out, rate * 2);
  wavdetail::write_u16(out, 2);
  wavdetail::write_u16(out, 16);
  out.write("data", 4);
  wavdetail::write_u32(out, 2 * n);
  for (double s : w.samples) {
    const long q = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767));
    wavdetail::write_u16(out, static_cast<std::uint16_t>(v));
  }
  require_state(out.good(), "write_wav: write failed: ", path);
}

}  // namespace avsep::dsp
