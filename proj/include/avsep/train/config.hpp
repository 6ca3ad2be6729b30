// avsep/train/config.hpp

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

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "avsep/core/common.hpp"
#include "avsep/dsp/stft.hpp"
#include "avsep/losses/losses.hpp"
#include "avsep/model/config.hpp"

namespace avsep::train {

using KvMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Flat key = value text.
// ---------------------------------------------------------------------------

namespace cfgdetail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size())
    throw ConfigError(str_cat(key, ": not a number: '", v, "'"));
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.find('-') != std::string::npos)
    throw ConfigError(str_cat(key, ": not a nonnegative integer: '", v, "'"));
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(str_cat(key, ": not a boolean: '", v, "'"));
}

inline std::string fmt(double v) {
  std::ostringstream oss;
  oss.precision(17);
  oss << v;
  return oss.str();
}

}  // namespace cfgdetail

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
inline KvMap parse_kv_text(const std::string& text) {
  KvMap out;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = cfgdetail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(str_cat("config line ", lineno, ": expected key = value, got '",
                                line, "'"));
    const std::string key = cfgdetail::trim(line.substr(0, eq));
    const std::string value = cfgdetail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(str_cat("config line ", lineno, ": empty key"));
    out[key] = value;
  }
  return out;
}

inline KvMap read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError(str_cat("cannot open config: ", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

// ---------------------------------------------------------------------------
// Experiment configuration.
// ---------------------------------------------------------------------------

/// Everything one run needs, resolvable from defaults, a preset, a config
/// file, and command-line overrides, in that precedence order. The struct
/// defaults are the desk preset: small enough for full experiments on one
/// workstation.
struct TrainConfig {
  std::string method = "proposed";  // proposed | av_baseline | upit
  double lambda = 1.0;
  double learning_rate = 2e-5;
  std::size_t batch_size = 8;
  std::size_t patience_epochs = 20;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  std::string model_preset = "desk";  // desk | paper
  bool validate_mse_only = false;
  bool cmc_normalize = true;
  double grad_clip_norm = 5.0;

  double sample_rate = 8000.0;
  double window_ms = 32.0;
  double hop_ms = 16.0;

  // Empty data_dir synthesizes splits in memory; otherwise the directory
  // must hold train.tsv / val.tsv (/ test.tsv) plus the referenced media.
  std::string data_dir;
  std::size_t train_samples = 64;
  std::size_t val_samples = 16;
  std::size_t test_samples = 16;
  std::size_t num_speakers = 8;
  std::size_t sources_per_mix = 2;
  double segment_seconds = 2.0;
  double snr_lo_db = 0.0;
  double snr_hi_db = 5.0;
  std::size_t video_size = 16;
  double video_fps = 12.5;
  bool halve_video_fps = false;

  void validate() const {
    require(method == "proposed" || method == "av_baseline" ||
                method == "upit",
            "TrainConfig: unknown method '", method, "'");
    if (method == "av_baseline")
      require(lambda == 0.0, "TrainConfig: av_baseline requires lambda = 0");
    if (method == "proposed")
      require(lambda != 0.0,
              "TrainConfig: lambda = 0 is the av_baseline method");
    require(lambda >= 0.0, "TrainConfig: lambda must be nonnegative");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    require(batch_size >= 1, "TrainConfig: batch_size must be at least 1");
    require(patience_epochs >= 1, "TrainConfig: patience_epochs must be at least 1");
    require(max_epochs >= 1, "TrainConfig: max_epochs must be at least 1");
    require(model_preset == "desk" || model_preset == "paper",
            "TrainConfig: unknown model_preset '", model_preset, "'");
    require(grad_clip_norm > 0.0, "TrainConfig: grad_clip_norm must be positive");
    require(sample_rate > 0.0 && window_ms > 0.0 && hop_ms > 0.0,
            "TrainConfig: analysis window must be positive");
    require(sources_per_mix >= 2, "TrainConfig: sources_per_mix must be at least 2");
    require(segment_seconds > 0.0, "TrainConfig: segment_seconds must be positive");
    require(snr_hi_db >= snr_lo_db, "TrainConfig: snr range inverted");
    require(video_size >= 4, "TrainConfig: video_size too small");
    require(video_fps > 0.0, "TrainConfig: video_fps must be positive");
    if (data_dir.empty()) {
      require(train_samples >= 1 && val_samples >= 1,
              "TrainConfig: synthetic splits need at least 1 sample each");
      require(num_speakers >= 2 * sources_per_mix,
              "TrainConfig: need enough speakers for distinct-speaker draws");
    }
  }

  dsp::StftConfig stft() const {
    dsp::StftConfig s;
    s.window_length_ms = window_ms;
    s.hop_length_ms = hop_ms;
    return s;
  }

  std::size_t input_bins() const { return stft().fft(sample_rate) / 2 + 1; }

  model::ModelConfig model() const {
    model::ModelConfig m =
        model_preset == "paper" ? model::ModelConfig::full_size(input_bins())
                                : model::ModelConfig::desk_size(input_bins());
    m.video_height = video_size;
    m.video_width = video_size;
    return m;
  }

  losses::LossConfig loss() const {
    losses::LossConfig l;
    l.lambda = lambda;
    l.cmc_normalize = cmc_normalize;
    return l;
  }
};

namespace cfgdetail {

inline void apply_one(TrainConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "method") cfg.method = value;
  else if (key == "lambda") cfg.lambda = to_double(key, value);
  else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
  else if (key == "batch_size") cfg.batch_size = to_u64(key, value);
  else if (key == "patience_epochs") cfg.patience_epochs = to_u64(key, value);
  else if (key == "max_epochs") cfg.max_epochs = to_u64(key, value);
  else if (key == "seed") cfg.seed = to_u64(key, value);
  else if (key == "model_preset") cfg.model_preset = value;
  else if (key == "validate_mse_only") cfg.validate_mse_only = to_bool(key, value);
  else if (key == "cmc_normalize") cfg.cmc_normalize = to_bool(key, value);
  else if (key == "grad_clip_norm") cfg.grad_clip_norm = to_double(key, value);
  else if (key == "sample_rate") cfg.sample_rate = to_double(key, value);
  else if (key == "window_ms") cfg.window_ms = to_double(key, value);
  else if (key == "hop_ms") cfg.hop_ms = to_double(key, value);
  else if (key == "data_dir") cfg.data_dir = value;
  else if (key == "train_samples") cfg.train_samples = to_u64(key, value);
  else if (key == "val_samples") cfg.val_samples = to_u64(key, value);
  else if (key == "test_samples") cfg.test_samples = to_u64(key, value);
  else if (key == "num_speakers") cfg.num_speakers = to_u64(key, value);
  else if (key == "sources_per_mix") cfg.sources_per_mix = to_u64(key, value);
  else if (key == "segment_seconds") cfg.segment_seconds = to_double(key, value);
  else if (key == "snr_lo_db") cfg.snr_lo_db = to_double(key, value);
  else if (key == "snr_hi_db") cfg.snr_hi_db = to_double(key, value);
  else if (key == "video_size") cfg.video_size = to_u64(key, value);
  else if (key == "video_fps") cfg.video_fps = to_double(key, value);
  else if (key == "halve_video_fps") cfg.halve_video_fps = to_bool(key, value);
  else throw ConfigError(str_cat("unknown config key '", key, "'"));
}

/// Full-scale bundle; every value remains individually overridable.
inline void apply_paper_preset(TrainConfig& cfg) {
  cfg.model_preset = "paper";
  cfg.sample_rate = 16000.0;
  cfg.window_ms = 400.0;
  cfg.hop_ms = 200.0;
  cfg.video_size = 64;
}

}  // namespace cfgdetail

/// Builds a config from merged key-value pairs. The optional "preset" key
/// ("desk" or "paper") is applied before the explicit keys regardless of its
/// position, so files can inherit a bundle and override parts of it.
inline TrainConfig config_from_kv(const KvMap& kv) {
  TrainConfig cfg;
  const auto preset = kv.find("preset");
  if (preset != kv.end()) {
    if (preset->second == "paper") cfgdetail::apply_paper_preset(cfg);
    else if (preset->second != "desk")
      throw ConfigError(str_cat("unknown preset '", preset->second, "'"));
  }
  for (const auto& [key, value] : kv) {
    if (key == "preset") continue;
    cfgdetail::apply_one(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

/// Every field, alphabetically, as reparseable "key = value" lines; written
/// beside run outputs so they are self-describing.
inline std::string resolved_config_text(const TrainConfig& cfg) {
  using cfgdetail::fmt;
  KvMap kv;
  kv["method"] = cfg.method;
  kv["lambda"] = fmt(cfg.lambda);
  kv["learning_rate"] = fmt(cfg.learning_rate);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["patience_epochs"] = std::to_string(cfg.patience_epochs);
  kv["max_epochs"] = std::to_string(cfg.max_epochs);
  kv["seed"] = std::to_string(cfg.seed);
  kv["model_preset"] = cfg.model_preset;
  kv["validate_mse_only"] = cfg.validate_mse_only ? "true" : "false";
  kv["cmc_normalize"] = cfg.cmc_normalize ? "true" : "false";
  kv["grad_clip_norm"] = fmt(cfg.grad_clip_norm);
  kv["sample_rate"] = fmt(cfg.sample_rate);
  kv["window_ms"] = fmt(cfg.window_ms);
  kv["hop_ms"] = fmt(cfg.hop_ms);
  kv["data_dir"] = cfg.data_dir;
  kv["train_samples"] = std::to_string(cfg.train_samples);
  kv["val_samples"] = std::to_string(cfg.val_samples);
  kv["test_samples"] = std::to_string(cfg.test_samples);
  kv["num_speakers"] = std::to_string(cfg.num_speakers);
  kv["sources_per_mix"] = std::to_string(cfg.sources_per_mix);
  kv["segment_seconds"] = fmt(cfg.segment_seconds);
  kv["snr_lo_db"] = fmt(cfg.snr_lo_db);
  kv["snr_hi_db"] = fmt(cfg.snr_hi_db);
  kv["video_size"] = std::to_string(cfg.video_size);
  kv["video_fps"] = fmt(cfg.video_fps);
  kv["halve_video_fps"] = cfg.halve_video_fps ? "true" : "false";
  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace avsep::train
