// avsep/metrics/evaluate.hpp

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

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "avsep/core/common.hpp"
#include "avsep/data/sample.hpp"
#include "avsep/dsp/stft.hpp"
#include "avsep/metrics/sdr.hpp"
#include "avsep/metrics/stoi.hpp"
#include "avsep/model/model.hpp"

namespace avsep::metrics {

/// One (method, sample, speaker) measurement.
struct EvalRow {
  std::string method;
  std::size_t sample_index = 0;
  std::size_t speaker_index = 0;
  double sdr_db = 0.0;
  double stoi_score = 0.0;
};

struct MethodSummary {
  std::string method;
  double mean_sdr_db = 0.0;
  double mean_stoi = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  /// Per-method means, in order of first appearance.
  std::vector<MethodSummary> summaries() const {
    std::vector<MethodSummary> out;
    for (const auto& row : rows) {
      auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) {
        return s.method == row.method;
      });
      if (it == out.end()) {
        out.push_back({row.method, 0.0, 0.0, 0});
        it = out.end() - 1;
      }
      it->mean_sdr_db += row.sdr_db;
      it->mean_stoi += row.stoi_score;
      ++it->count;
    }
    for (auto& s : out) {
      s.mean_sdr_db /= static_cast<double>(s.count);
      s.mean_stoi /= static_cast<double>(s.count);
    }
    return out;
  }

  double mean_sdr_db(const std::string& method) const {
    for (const auto& s : summaries())
      if (s.method == method) return s.mean_sdr_db;
    require_state(false, "EvalReport: no rows for method ", method);
    return 0.0;
  }
};

namespace evaldetail {

/// Resynthesis cut back to the sample's pre-analysis length.
inline dsp::Waveform resynthesize(const dsp::Spectrogram& spec,
                                  std::size_t num_time_samples) {
  dsp::Waveform w = dsp::istft(spec);
  require_state(w.samples.size() >= num_time_samples,
                "resynthesize: output shorter than the analyzed signal");
  w.samples.resize(num_time_samples);
  return w;
}

inline std::vector<dsp::Waveform> references(const data::MixtureSample& s) {
  std::vector<dsp::Waveform> out;
  out.reserve(s.sources.size());
  for (const auto& src : s.sources)
    out.push_back(resynthesize(src, s.num_time_samples));
  return out;
}

inline void add_rows(EvalReport& report, const std::string& method,
                     std::size_t sample_index,
                     const std::vector<dsp::Waveform>& estimates,
                     const std::vector<dsp::Waveform>& refs) {
  require(estimates.size() == refs.size(), "add_rows: list lengths differ");
  for (std::size_t n = 0; n < refs.size(); ++n)
    report.rows.push_back({method, sample_index, n,
                           sdr_db(estimates[n], refs[n]),
                           stoi(estimates[n], refs[n])});
}

/// Source order maximizing the mean projection SDR; needed for the
/// permutation-invariant baseline, whose outputs carry no speaker identity.
inline std::vector<std::size_t> best_assignment(
    const std::vector<dsp::Waveform>& estimates,
    const std::vector<dsp::Waveform>& refs) {
  std::vector<std::size_t> perm(refs.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_score = -1e300;
  do {
    double score = 0.0;
    for (std::size_t n = 0; n < refs.size(); ++n)
      score += sdr_db(estimates[perm[n]], refs[n]);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace evaldetail

/// The unprocessed mixture scored as the estimate for every speaker.
inline void evaluate_passthrough(EvalReport& report, const std::string& method,
                                 const std::vector<data::MixtureSample>& samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto refs = evaldetail::references(samples[i]);
    const dsp::Waveform mix =
        evaldetail::resynthesize(samples[i].mixture, samples[i].num_time_samples);
    evaldetail::add_rows(report, method, i,
                         std::vector<dsp::Waveform>(refs.size(), mix), refs);
  }
}

/// Mask-based separation with video-determined speaker assignment.
inline void evaluate_separation(EvalReport& report, const std::string& method,
                                model::SeparationModel& model,
                                const std::vector<data::MixtureSample>& samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto refs = evaldetail::references(samples[i]);
    const auto est_specs = model.separate(samples[i].mixture, samples[i].videos);
    std::vector<dsp::Waveform> ests;
    ests.reserve(est_specs.size());
    for (const auto& spec : est_specs)
      ests.push_back(evaldetail::resynthesize(spec, samples[i].num_time_samples));
    evaldetail::add_rows(report, method, i, ests, refs);
  }
}

/// Audio-only separation scored under its best per-sample source assignment.
inline void evaluate_upit(EvalReport& report, const std::string& method,
                          model::UpitModel& model,
                          const std::vector<data::MixtureSample>& samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto refs = evaldetail::references(samples[i]);
    const auto est_specs = model.separate(samples[i].mixture);
    require(est_specs.size() == refs.size(),
            "evaluate_upit: model source count differs from the sample");
    std::vector<dsp::Waveform> ests;
    ests.reserve(est_specs.size());
    for (const auto& spec : est_specs)
      ests.push_back(evaldetail::resynthesize(spec, samples[i].num_time_samples));
    const auto perm = evaldetail::best_assignment(ests, refs);
    std::vector<dsp::Waveform> assigned;
    assigned.reserve(ests.size());
    for (std::size_t n = 0; n < refs.size(); ++n)
      assigned.push_back(ests[perm[n]]);
    evaldetail::add_rows(report, method, i, assigned, refs);
  }
}

/// Ideal ratio masks |S_n| / sum |S_m| applied to the complex mixture; an
/// upper reference for mask-based systems.
inline void evaluate_oracle_mask(EvalReport& report, const std::string& method,
                                 const std::vector<data::MixtureSample>& samples) {
  using RealMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const data::MixtureSample& s = samples[i];
    const auto refs = evaldetail::references(s);
    RealMatrix denom = s.sources[0].values.cwiseAbs();
    for (std::size_t n = 1; n < s.sources.size(); ++n)
      denom += s.sources[n].values.cwiseAbs();
    denom = denom.cwiseMax(1e-12);
    std::vector<dsp::Waveform> ests;
    ests.reserve(s.sources.size());
    for (const auto& src : s.sources) {
      const RealMatrix mask = src.values.cwiseAbs().cwiseQuotient(denom);
      dsp::Spectrogram est = s.mixture;
      est.values =
          s.mixture.values.cwiseProduct(mask.cast<std::complex<double>>());
      ests.push_back(evaldetail::resynthesize(est, s.num_time_samples));
    }
    evaldetail::add_rows(report, method, i, ests, refs);
  }
}

/// method,sample,speaker,sdr_db,stoi rows.
inline std::string eval_rows_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "method,sample,speaker,sdr_db,stoi\n";
  out << std::setprecision(10);
  for (const auto& r : report.rows)
    out << r.method << "," << r.sample_index << "," << r.speaker_index << ","
        << r.sdr_db << "," << r.stoi_score << "\n";
  return out.str();
}

/// Aligned per-method summary. PESQ needs a licensed reference implementation,
/// so its column is declared absent rather than approximated.
inline std::string comparison_table(const EvalReport& report) {
  const auto sums = report.summaries();
  require(!sums.empty(), "comparison_table: empty report");
  std::size_t width = 6;
  for (const auto& s : sums) width = std::max(width, s.method.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width + 2)) << "Method"
      << std::right << std::setw(10) << "SDR (dB)" << std::setw(8) << "STOI"
      << "\n";
  out << std::string(width + 2 + 10 + 8, '-') << "\n";
  out << std::fixed;
  for (const auto& s : sums)
    out << std::left << std::setw(static_cast<int>(width + 2)) << s.method
        << std::right << std::setw(10) << std::setprecision(2) << s.mean_sdr_db
        << std::setw(8) << std::setprecision(3) << s.mean_stoi << "\n";
  out << "\nPESQ: not computed\n";
  return out.str();
}

}  // namespace avsep::metrics
