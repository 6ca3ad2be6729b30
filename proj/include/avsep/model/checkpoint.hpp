// avsep/model/checkpoint.hpp

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

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avsep/model/model.hpp"

namespace avsep::model {

// Archive layout: magic "AVSEPCK1" | u64 header length | JSON header |
// float64 payload | u32 CRC-32 of everything before it. The header indexes
// every array by name, shape and payload offset (in doubles).

namespace ckdetail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

inline void append_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k)
    out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

inline void append_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k)
    out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"input_bins", cfg.input_bins},
                        {"embed_dim", cfg.embed_dim},
                        {"audio_hidden", cfg.audio_hidden},
                        {"audio_blstm_layers", cfg.audio_blstm_layers},
                        {"dropout", cfg.dropout},
                        {"video_height", cfg.video_height},
                        {"video_width", cfg.video_width},
                        {"conv3d_channels", cfg.conv3d_channels},
                        {"resnet_widths", cfg.resnet_widths},
                        {"resnet_blocks", cfg.resnet_blocks},
                        {"resnet_strides", cfg.resnet_strides},
                        {"se_reduction", cfg.se_reduction},
                        {"video_blstm_hidden", cfg.video_blstm_hidden},
                        {"fusion_blstm_hidden", cfg.fusion_blstm_hidden}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.input_bins = j.at("input_bins").get<std::size_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
  cfg.audio_hidden = j.at("audio_hidden").get<std::size_t>();
  cfg.audio_blstm_layers = j.at("audio_blstm_layers").get<std::size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.video_height = j.at("video_height").get<std::size_t>();
  cfg.video_width = j.at("video_width").get<std::size_t>();
  cfg.conv3d_channels = j.at("conv3d_channels").get<std::size_t>();
  cfg.resnet_widths = j.at("resnet_widths").get<std::vector<std::size_t>>();
  cfg.resnet_blocks = j.at("resnet_blocks").get<std::vector<std::size_t>>();
  cfg.resnet_strides = j.at("resnet_strides").get<std::vector<std::size_t>>();
  cfg.se_reduction = j.at("se_reduction").get<std::size_t>();
  cfg.video_blstm_hidden = j.at("video_blstm_hidden").get<std::size_t>();
  cfg.fusion_blstm_hidden = j.at("fusion_blstm_hidden").get<std::size_t>();
  return cfg;
}

using NamedArrays = std::vector<std::pair<std::string, NDArray>>;

inline nlohmann::json index_arrays(const NamedArrays& arrays,
                                   std::uint64_t& offset) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, arr] : arrays) {
    list.push_back({{"name", name},
                    {"shape", arr.shape()},
                    {"offset", offset}});
    offset += arr.size();
  }
  return list;
}

inline void append_payload(std::string& out, const NamedArrays& arrays) {
  for (const auto& [name, arr] : arrays) {
    const std::size_t bytes = arr.size() * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, arr.data(), bytes);
  }
}

inline NamedArrays extract_arrays(const nlohmann::json& list,
                                  const char* payload,
                                  std::uint64_t payload_doubles) {
  NamedArrays arrays;
  for (const auto& entry : list) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    NDArray arr(shape);
    require_state(offset + arr.size() <= payload_doubles,
                  str_cat("checkpoint: array ", name,
                          " extends past the payload"));
    std::memcpy(arr.data(), payload + offset * sizeof(double),
                arr.size() * sizeof(double));
    require_state(arr.all_finite(),
                  str_cat("checkpoint: array ", name, " is not finite"));
    arrays.emplace_back(name, std::move(arr));
  }
  return arrays;
}

}  // namespace ckdetail

/// Full training state of one run, ready to serialize or restore.
struct CheckpointData {
  std::string kind;  // "av" or "upit"
  ModelConfig config;
  std::size_t num_sources = 0;  // upit head width; 0 for av
  std::int64_t epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::map<std::string, std::string> rng_states;
  ckdetail::NamedArrays params;
  ckdetail::NamedArrays buffers;
  bool has_optimizer = false;
  std::int64_t opt_step = 0;
  ckdetail::NamedArrays opt_m, opt_v;
};

inline void write_checkpoint(const std::string& path,
                             const CheckpointData& ck) {
  require(ck.kind == "av" || ck.kind == "upit",
          "write_checkpoint: kind must be av or upit");
  std::uint64_t offset = 0;
  nlohmann::json header{
      {"format", 1},
      {"kind", ck.kind},
      {"config", ckdetail::config_to_json(ck.config)},
      {"num_sources", ck.num_sources},
      {"epoch", ck.epoch},
      // JSON has no infinity; a fresh run's best-so-far maps to null.
      {"best_val", std::isfinite(ck.best_val) ? nlohmann::json(ck.best_val)
                                              : nlohmann::json()},
      {"rng", ck.rng_states},
      {"params", ckdetail::index_arrays(ck.params, offset)},
      {"buffers", ckdetail::index_arrays(ck.buffers, offset)},
  };
  if (ck.has_optimizer) {
    header["opt"] = {{"step", ck.opt_step},
                     {"m", ckdetail::index_arrays(ck.opt_m, offset)},
                     {"v", ckdetail::index_arrays(ck.opt_v, offset)}};
  }
  const std::string header_text = header.dump();

  std::string blob = "AVSEPCK1";
  ckdetail::append_u64(blob, header_text.size());
  blob += header_text;
  ckdetail::append_payload(blob, ck.params);
  ckdetail::append_payload(blob, ck.buffers);
  if (ck.has_optimizer) {
    ckdetail::append_payload(blob, ck.opt_m);
    ckdetail::append_payload(blob, ck.opt_v);
  }
  ckdetail::append_u32(
      blob, ckdetail::crc32(
                reinterpret_cast<const unsigned char*>(blob.data()),
                blob.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require_state(out.good(), str_cat("write_checkpoint: cannot open ", tmp));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    require_state(out.good(), str_cat("write_checkpoint: write failed: ", tmp));
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require_state(in.good(), str_cat("read_checkpoint: cannot open ", path));
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  require_state(blob.size() >= 8 + 8 + 4,
                "read_checkpoint: file too short to be a checkpoint");
  require_state(blob.compare(0, 8, "AVSEPCK1") == 0,
                "read_checkpoint: bad magic");

  std::uint32_t stored = 0;
  for (int k = 0; k < 4; ++k)
    stored |= static_cast<std::uint32_t>(
                  static_cast<unsigned char>(blob[blob.size() - 4 + k]))
              << (8 * k);
  const std::uint32_t actual = ckdetail::crc32(
      reinterpret_cast<const unsigned char*>(blob.data()), blob.size() - 4);
  require_state(stored == actual,
                "read_checkpoint: checksum mismatch (corrupt or truncated)");

  std::uint64_t header_len = 0;
  for (int k = 0; k < 8; ++k)
    header_len |= static_cast<std::uint64_t>(
                      static_cast<unsigned char>(blob[8 + k]))
                  << (8 * k);
  require_state(16 + header_len <= blob.size() - 4,
                "read_checkpoint: header length out of range");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    require_state(false, str_cat("read_checkpoint: bad header: ", e.what()));
  }
  require_state(header.at("format").get<int>() == 1,
                "read_checkpoint: unsupported format version");

  const char* payload = blob.data() + 16 + header_len;
  const std::size_t payload_bytes = blob.size() - 4 - 16 - header_len;
  require_state(payload_bytes % sizeof(double) == 0,
                "read_checkpoint: payload is not a whole number of values");
  const std::uint64_t payload_doubles = payload_bytes / sizeof(double);

  CheckpointData ck;
  ck.kind = header.at("kind").get<std::string>();
  require_state(ck.kind == "av" || ck.kind == "upit",
                "read_checkpoint: unknown model kind");
  ck.config = ckdetail::config_from_json(header.at("config"));
  ck.num_sources = header.at("num_sources").get<std::size_t>();
  ck.epoch = header.at("epoch").get<std::int64_t>();
  ck.best_val = header.at("best_val").is_null()
                    ? std::numeric_limits<double>::infinity()
                    : header.at("best_val").get<double>();
  ck.rng_states =
      header.at("rng").get<std::map<std::string, std::string>>();
  ck.params = ckdetail::extract_arrays(header.at("params"), payload,
                                       payload_doubles);
  ck.buffers = ckdetail::extract_arrays(header.at("buffers"), payload,
                                        payload_doubles);
  if (header.contains("opt")) {
    ck.has_optimizer = true;
    ck.opt_step = header["opt"].at("step").get<std::int64_t>();
    ck.opt_m = ckdetail::extract_arrays(header["opt"].at("m"), payload,
                                        payload_doubles);
    ck.opt_v = ckdetail::extract_arrays(header["opt"].at("v"), payload,
                                        payload_doubles);
  }
  return ck;
}

/// Copies a live model's tensors into a serializable snapshot.
inline CheckpointData snapshot_model(const SeparationModel& model) {
  CheckpointData ck;
  ck.kind = "av";
  ck.config = model.config();
  for (const auto& [name, p] : model.params().params())
    ck.params.emplace_back(name, p.value());
  ck.buffers = model.params().buffers();
  return ck;
}

inline CheckpointData snapshot_model(const UpitModel& model) {
  CheckpointData ck;
  ck.kind = "upit";
  ck.config = model.config();
  ck.num_sources = model.num_sources();
  for (const auto& [name, p] : model.params().params())
    ck.params.emplace_back(name, p.value());
  ck.buffers = model.params().buffers();
  return ck;
}

/// Rebuilds a model from a snapshot. with_correspondence=false restores an
/// inference-only network (the correspondence head's weights are simply not
/// loaded).
inline SeparationModel restore_separation_model(
    const CheckpointData& ck, bool with_correspondence = true) {
  require(ck.kind == "av", "restore_separation_model: not an av checkpoint");
  SeparationModel model(ck.config, 0, with_correspondence);
  model.params().load_values(ck.params, ck.buffers);
  auto it = ck.rng_states.find("model");
  if (it != ck.rng_states.end()) model.rng().deserialize(it->second);
  return model;
}

inline UpitModel restore_upit_model(const CheckpointData& ck) {
  require(ck.kind == "upit", "restore_upit_model: not a upit checkpoint");
  require(ck.num_sources >= 2, "restore_upit_model: bad source count");
  UpitModel model(ck.config, ck.num_sources, 0);
  model.params().load_values(ck.params, ck.buffers);
  auto it = ck.rng_states.find("model");
  if (it != ck.rng_states.end()) model.rng().deserialize(it->second);
  return model;
}

}  // namespace avsep::model
