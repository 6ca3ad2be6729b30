// avsep/metrics/angles.hpp

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
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "avsep/core/autodiff.hpp"
#include "avsep/core/common.hpp"
#include "avsep/data/sample.hpp"
#include "avsep/model/model.hpp"

namespace avsep::metrics {

/// Angle distribution between paired embedding columns, split into matched
/// (same speaker) and mismatched (different speaker) pairs. 180 one-degree
/// bins over [0, 180]; exact sums are kept alongside the bins so means do not
/// suffer binning error.
struct AngleHistogram {
  static constexpr std::size_t kBins = 180;

  std::vector<std::uint64_t> positive_counts = std::vector<std::uint64_t>(kBins, 0);
  std::vector<std::uint64_t> negative_counts = std::vector<std::uint64_t>(kBins, 0);
  double positive_sum_deg = 0.0;
  double negative_sum_deg = 0.0;
  std::uint64_t positive_total = 0;
  std::uint64_t negative_total = 0;

  void add(double angle_deg, bool matched) {
    require(std::isfinite(angle_deg) && angle_deg >= 0.0 && angle_deg <= 180.0,
            "AngleHistogram: angle outside [0, 180]");
    const std::size_t bin =
        std::min<std::size_t>(kBins - 1, static_cast<std::size_t>(angle_deg));
    if (matched) {
      ++positive_counts[bin];
      positive_sum_deg += angle_deg;
      ++positive_total;
    } else {
      ++negative_counts[bin];
      negative_sum_deg += angle_deg;
      ++negative_total;
    }
  }

  double mean_positive_deg() const {
    require_state(positive_total > 0, "AngleHistogram: no matched pairs");
    return positive_sum_deg / static_cast<double>(positive_total);
  }

  double mean_negative_deg() const {
    require_state(negative_total > 0, "AngleHistogram: no mismatched pairs");
    return negative_sum_deg / static_cast<double>(negative_total);
  }
};

namespace angledetail {

/// Cosine of column j of two row-major {D, J} arrays, with the same epsilon
/// guard the training objective uses.
inline double column_cosine(const NDArray& a, const NDArray& b, std::size_t j,
                            double eps = 1e-8) {
  const std::size_t d = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double av = a[r * cols + j];
    const double bv = b[r * cols + j];
    dot += av * bv;
    na += av * av;
    nb += bv * bv;
  }
  const double den = std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps);
  return std::clamp(dot / den, -1.0, 1.0);
}

inline double angle_deg(double cosine) {
  return std::acos(std::clamp(cosine, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

/// All (n, n', j) pairs from one forward pass: matched when n == n'.
inline void accumulate(AngleHistogram& hist, const std::vector<Var>& visual,
                       const std::vector<Var>& avc) {
  require(visual.size() == avc.size() && !visual.empty(),
          "accumulate: embedding lists differ");
  const std::size_t frames = visual[0].value().shape()[1];
  for (std::size_t n = 0; n < visual.size(); ++n) {
    const NDArray& v = visual[n].value();
    require(v.shape() == avc[n].value().shape(),
            "accumulate: embedding shapes differ");
    for (std::size_t np = 0; np < avc.size(); ++np) {
      const NDArray& m = avc[np].value();
      for (std::size_t j = 0; j < frames; ++j)
        hist.add(angle_deg(column_cosine(v, m, j)), n == np);
    }
  }
}

}  // namespace angledetail

/// Histogram over a dataset for a model carrying its own correspondence head.
inline AngleHistogram analyze_correspondence(
    model::SeparationModel& model,
    const std::vector<data::MixtureSample>& samples) {
  require(model.has_correspondence(),
          "analyze_correspondence: model has no correspondence head");
  AngleHistogram hist;
  NoGradGuard guard;
  for (const auto& s : samples) {
    auto out = model.forward(s.mixture, s.videos, false, true);
    angledetail::accumulate(hist, out.visual, out.avc);
  }
  return hist;
}

/// Histogram for a model trained without the correspondence objective: its
/// visual embeddings and mask features are kept, the mapping from mask
/// features to the shared space is borrowed from `donor`.
inline AngleHistogram analyze_correspondence_borrowed(
    const model::SeparationModel& donor, model::SeparationModel& mask_model,
    const std::vector<data::MixtureSample>& samples) {
  require(donor.has_correspondence(),
          "analyze_correspondence_borrowed: donor has no correspondence head");
  AngleHistogram hist;
  NoGradGuard guard;
  for (const auto& s : samples) {
    auto out = mask_model.forward(s.mixture, s.videos, false, false);
    std::vector<Var> avc;
    avc.reserve(out.pre_masks.size());
    for (const Var& m : out.pre_masks) avc.push_back(donor.correspondence(m));
    angledetail::accumulate(hist, out.visual, avc);
  }
  return hist;
}

/// bin_start,bin_end,positive_count,negative_count rows covering [0, 180].
inline std::string angle_histogram_csv(const AngleHistogram& hist) {
  std::ostringstream out;
  out << "bin_start,bin_end,positive_count,negative_count\n";
  for (std::size_t b = 0; b < AngleHistogram::kBins; ++b)
    out << b << "," << b + 1 << "," << hist.positive_counts[b] << ","
        << hist.negative_counts[b] << "\n";
  return out.str();
}

/// Two-curve line plot of the histogram as a standalone SVG document.
inline std::string angle_histogram_svg(const AngleHistogram& hist) {
  constexpr double kW = 720.0, kH = 420.0;
  constexpr double kLeft = 64.0, kRight = 24.0, kTop = 36.0, kBottom = 52.0;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;

  std::uint64_t peak = 1;
  for (std::size_t b = 0; b < AngleHistogram::kBins; ++b)
    peak = std::max({peak, hist.positive_counts[b], hist.negative_counts[b]});

  auto polyline = [&](const std::vector<std::uint64_t>& counts) {
    std::ostringstream pts;
    for (std::size_t b = 0; b < AngleHistogram::kBins; ++b) {
      const double x = kLeft + (static_cast<double>(b) + 0.5) / 180.0 * plot_w;
      const double y = kTop + plot_h -
                       static_cast<double>(counts[b]) /
                           static_cast<double>(peak) * plot_h;
      if (b) pts << " ";
      pts << x << "," << y;
    }
    return pts.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
      << "\">\n"
      << "<rect width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"white\"/>\n"
      << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  for (int deg = 0; deg <= 180; deg += 30) {
    const double x = kLeft + deg / 180.0 * plot_w;
    svg << "<line x1=\"" << x << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << x
        << "\" y2=\"" << kTop + plot_h + 6 << "\" stroke=\"#444\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << kTop + plot_h + 22
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\" "
           "text-anchor=\"middle\">"
        << deg << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 12
      << "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222\" "
         "text-anchor=\"middle\">angle (degrees)</text>\n"
      << "<text x=\"18\" y=\"" << kTop + plot_h / 2
      << "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222\" "
         "text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << kTop + plot_h / 2 << ")\">pair count</text>\n"
      << "<polyline points=\"" << polyline(hist.positive_counts)
      << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.6\"/>\n"
      << "<polyline points=\"" << polyline(hist.negative_counts)
      << "\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.6\"/>\n"
      << "<line x1=\"" << kLeft + 12 << "\" y1=\"" << kTop - 16 << "\" x2=\""
      << kLeft + 44 << "\" y2=\"" << kTop - 16
      << "\" stroke=\"#1f77b4\" stroke-width=\"1.6\"/>\n"
      << "<text x=\"" << kLeft + 50 << "\" y=\"" << kTop - 12
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">same "
         "speaker</text>\n"
      << "<line x1=\"" << kLeft + 160 << "\" y1=\"" << kTop - 16 << "\" x2=\""
      << kLeft + 192 << "\" y2=\"" << kTop - 16
      << "\" stroke=\"#ff7f0e\" stroke-width=\"1.6\"/>\n"
      << "<text x=\"" << kLeft + 198 << "\" y=\"" << kTop - 12
      << "\" font-family=\"sans-serif\" font-size=\"12\" "
         "fill=\"#222\">different speaker</text>\n"
      << "</svg>\n";
  return svg.str();
}

}  // namespace avsep::metrics
