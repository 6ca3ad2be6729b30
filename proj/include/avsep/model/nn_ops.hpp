// avsep/model/nn_ops.hpp

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
#include <utility>
#include <vector>

#include "avsep/core/autodiff.hpp"

namespace avsep::nn {

// Fused network ops. Each op is one tape node with a hand-derived backward;
// analytic gradients are pinned by finite-difference tests.

// ---------------------------------------------------------------------------
// LSTM over a sequence (single direction).
// ---------------------------------------------------------------------------

/// x {in,J}, wx {4H,in}, wh {4H,H}, b {4H,1} -> hidden sequence {H,J}.
/// Gate row order: input, forget, cell, output. reverse=true runs right to
/// left but still writes column t of the output for frame t.
inline Var lstm_seq(const Var& x, const Var& wx, const Var& wh, const Var& b,
                    bool reverse) {
  require(x.value().rank() == 2, "lstm_seq: x rank");
  const std::size_t in = x.value().rows();
  const std::size_t frames = x.value().cols();
  require(wx.value().rows() % 4 == 0 && wx.value().cols() == in,
          "lstm_seq: wx shape");
  const std::size_t hidden = wx.value().rows() / 4;
  require(wh.value().rows() == 4 * hidden && wh.value().cols() == hidden,
          "lstm_seq: wh shape");
  require(b.value().rows() == 4 * hidden && b.value().cols() == 1,
          "lstm_seq: b shape");
  require(frames >= 1, "lstm_seq: empty sequence");

  const auto hi = static_cast<Eigen::Index>(hidden);
  const auto ji = static_cast<Eigen::Index>(frames);

  RowMajorMatrix pre = wx.value().mat() * x.value().mat();
  pre.colwise() += Eigen::VectorXd(b.value().mat().col(0));

  NDArray out({hidden, frames});
  // Post-activation gate caches plus the cell state, all {H,J}.
  RowMajorMatrix gi(hi, ji), gf(hi, ji), gc(hi, ji), go(hi, ji), cell(hi, ji);

  auto visit = [reverse, frames](std::size_t s) {
    return reverse ? frames - 1 - s : s;
  };

  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(hi);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(hi);
  Eigen::VectorXd a(4 * hi);
  for (std::size_t s = 0; s < frames; ++s) {
    const auto t = static_cast<Eigen::Index>(visit(s));
    a = pre.col(t) + wh.value().mat() * h_prev;
    gi.col(t) = (1.0 / (1.0 + (-a.head(hi).array()).exp())).matrix();
    gf.col(t) =
        (1.0 / (1.0 + (-a.segment(hi, hi).array()).exp())).matrix();
    gc.col(t) = a.segment(2 * hi, hi).array().tanh().matrix();
    go.col(t) = (1.0 / (1.0 + (-a.tail(hi).array()).exp())).matrix();
    cell.col(t) = (gf.col(t).array() * c_prev.array() +
                   gi.col(t).array() * gc.col(t).array())
                      .matrix();
    Eigen::VectorXd h =
        (go.col(t).array() * cell.col(t).array().tanh()).matrix();
    out.mat().col(t) = h;
    h_prev = h;
    c_prev = cell.col(t);
  }

  auto px = x.node(), pwx = wx.node(), pwh = wh.node(), pb = b.node();
  return detail::make_op(
      std::move(out), {px, pwx, pwh, pb},
      [px, pwx, pwh, pb, gi = std::move(gi), gf = std::move(gf),
       gc = std::move(gc), go = std::move(go), cell = std::move(cell), hidden,
       frames, reverse](detail::Node& self) {
        const auto hi = static_cast<Eigen::Index>(hidden);
        const auto ji = static_cast<Eigen::Index>(frames);
        auto visit = [reverse, frames](std::size_t s) {
          return static_cast<Eigen::Index>(reverse ? frames - 1 - s : s);
        };
        const auto& h_out = self.value.mat();
        RowMajorMatrix dpre = RowMajorMatrix::Zero(4 * hi, ji);
        RowMajorMatrix h_prev_mat = RowMajorMatrix::Zero(hi, ji);
        Eigen::VectorXd dh_acc = Eigen::VectorXd::Zero(hi);
        Eigen::VectorXd dc_acc = Eigen::VectorXd::Zero(hi);
        for (std::size_t s = frames; s-- > 0;) {
          const Eigen::Index t = visit(s);
          Eigen::VectorXd c_prev =
              s > 0 ? Eigen::VectorXd(cell.col(visit(s - 1)))
                    : Eigen::VectorXd::Zero(hi);
          if (s > 0) h_prev_mat.col(t) = h_out.col(visit(s - 1));
          Eigen::ArrayXd dh = self.grad.mat().col(t).array() + dh_acc.array();
          Eigen::ArrayXd hc = cell.col(t).array().tanh();
          Eigen::ArrayXd d_o = dh * hc;
          Eigen::ArrayXd dc =
              dc_acc.array() + dh * go.col(t).array() * (1.0 - hc.square());
          Eigen::ArrayXd d_i = dc * gc.col(t).array();
          Eigen::ArrayXd d_gc = dc * gi.col(t).array();
          Eigen::ArrayXd d_f = dc * c_prev.array();
          dpre.col(t).head(hi) =
              (d_i * gi.col(t).array() * (1.0 - gi.col(t).array())).matrix();
          dpre.col(t).segment(hi, hi) =
              (d_f * gf.col(t).array() * (1.0 - gf.col(t).array())).matrix();
          dpre.col(t).segment(2 * hi, hi) =
              (d_gc * (1.0 - gc.col(t).array().square())).matrix();
          dpre.col(t).tail(hi) =
              (d_o * go.col(t).array() * (1.0 - go.col(t).array())).matrix();
          dh_acc = pwh->value.mat().transpose() * dpre.col(t);
          dc_acc = (dc * gf.col(t).array()).matrix();
        }
        if (pwx->requires_grad)
          pwx->ensure_grad().mat().noalias() +=
              dpre * px->value.mat().transpose();
        if (pwh->requires_grad)
          pwh->ensure_grad().mat().noalias() +=
              dpre * h_prev_mat.transpose();
        if (pb->requires_grad)
          pb->ensure_grad().mat().col(0) += dpre.rowwise().sum();
        if (px->requires_grad)
          px->ensure_grad().mat().noalias() +=
              pwx->value.mat().transpose() * dpre;
      });
}

/// Bidirectional LSTM: forward and backward passes concatenated -> {2H,J}.
inline Var blstm(const Var& x, const Var& wx_f, const Var& wh_f,
                 const Var& b_f, const Var& wx_b, const Var& wh_b,
                 const Var& b_b) {
  return concat_rows(lstm_seq(x, wx_f, wh_f, b_f, false),
                     lstm_seq(x, wx_b, wh_b, b_b, true));
}

// ---------------------------------------------------------------------------
// Convolutions (im2col + GEMM; columns rebuilt in backward to save memory).
// ---------------------------------------------------------------------------

namespace convdetail {

inline std::size_t out_extent(std::size_t in, std::size_t k, std::size_t pad,
                              std::size_t stride) {
  require(in + 2 * pad >= k, "conv: spatial input smaller than kernel");
  return (in + 2 * pad - k) / stride + 1;
}

/// Gathers one frame's receptive fields: col {Cin*kh*kw, Ho*Wo}.
inline void im2col_frame(const NDArray& x, std::size_t f, std::size_t kh,
                         std::size_t kw, std::size_t pad, std::size_t stride,
                         RowMajorMatrix& col) {
  const std::size_t cin = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = out_extent(h, kh, pad, stride);
  const std::size_t wo = out_extent(w, kw, pad, stride);
  col.setZero(static_cast<Eigen::Index>(cin * kh * kw),
              static_cast<Eigen::Index>(ho * wo));
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t dh = 0; dh < kh; ++dh)
      for (std::size_t dw = 0; dw < kw; ++dw) {
        const auto row =
            static_cast<Eigen::Index>((ci * kh + dh) * kw + dw);
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih =
              static_cast<std::ptrdiff_t>(oh * stride + dh) -
              static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * stride + dw) -
                static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            col(row, static_cast<Eigen::Index>(oh * wo + ow)) =
                x.at4(ci, f, static_cast<std::size_t>(ih),
                      static_cast<std::size_t>(iw));
          }
        }
      }
}

inline void col2im_frame(const RowMajorMatrix& dcol, std::size_t f,
                         std::size_t kh, std::size_t kw, std::size_t pad,
                         std::size_t stride, NDArray& dx) {
  const std::size_t cin = dx.dim(0), h = dx.dim(2), w = dx.dim(3);
  const std::size_t ho = out_extent(h, kh, pad, stride);
  const std::size_t wo = out_extent(w, kw, pad, stride);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t dh = 0; dh < kh; ++dh)
      for (std::size_t dw = 0; dw < kw; ++dw) {
        const auto row =
            static_cast<Eigen::Index>((ci * kh + dh) * kw + dw);
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih =
              static_cast<std::ptrdiff_t>(oh * stride + dh) -
              static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * stride + dw) -
                static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            dx.at4(ci, f, static_cast<std::size_t>(ih),
                   static_cast<std::size_t>(iw)) +=
                dcol(row, static_cast<Eigen::Index>(oh * wo + ow));
          }
        }
      }
}

/// Temporal gather for 3D conv: col {Cin*kt*kh*kw, Ho*Wo} for output frame fo.
inline void im2col_3d(const NDArray& x, std::size_t fo, std::size_t kt,
                      std::size_t kh, std::size_t kw, std::size_t pt,
                      std::size_t ps, RowMajorMatrix& col) {
  const std::size_t cin = x.dim(0), frames = x.dim(1), h = x.dim(2),
                    w = x.dim(3);
  const std::size_t ho = out_extent(h, kh, ps, 1);
  const std::size_t wo = out_extent(w, kw, ps, 1);
  col.setZero(static_cast<Eigen::Index>(cin * kt * kh * kw),
              static_cast<Eigen::Index>(ho * wo));
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t dt = 0; dt < kt; ++dt) {
      const std::ptrdiff_t fi = static_cast<std::ptrdiff_t>(fo + dt) -
                                static_cast<std::ptrdiff_t>(pt);
      if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(frames)) continue;
      for (std::size_t dh = 0; dh < kh; ++dh)
        for (std::size_t dw = 0; dw < kw; ++dw) {
          const auto row = static_cast<Eigen::Index>(
              ((ci * kt + dt) * kh + dh) * kw + dw);
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + dh) -
                                      static_cast<std::ptrdiff_t>(ps);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + dw) -
                                        static_cast<std::ptrdiff_t>(ps);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
              col(row, static_cast<Eigen::Index>(oh * wo + ow)) =
                  x.at4(ci, static_cast<std::size_t>(fi),
                        static_cast<std::size_t>(ih),
                        static_cast<std::size_t>(iw));
            }
          }
        }
    }
}

inline void col2im_3d(const RowMajorMatrix& dcol, std::size_t fo,
                      std::size_t kt, std::size_t kh, std::size_t kw,
                      std::size_t pt, std::size_t ps, NDArray& dx) {
  const std::size_t cin = dx.dim(0), frames = dx.dim(1), h = dx.dim(2),
                    w = dx.dim(3);
  const std::size_t ho = out_extent(h, kh, ps, 1);
  const std::size_t wo = out_extent(w, kw, ps, 1);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t dt = 0; dt < kt; ++dt) {
      const std::ptrdiff_t fi = static_cast<std::ptrdiff_t>(fo + dt) -
                                static_cast<std::ptrdiff_t>(pt);
      if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(frames)) continue;
      for (std::size_t dh = 0; dh < kh; ++dh)
        for (std::size_t dw = 0; dw < kw; ++dw) {
          const auto row = static_cast<Eigen::Index>(
              ((ci * kt + dt) * kh + dh) * kw + dw);
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + dh) -
                                      static_cast<std::ptrdiff_t>(ps);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + dw) -
                                        static_cast<std::ptrdiff_t>(ps);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
              dx.at4(ci, static_cast<std::size_t>(fi),
                     static_cast<std::size_t>(ih),
                     static_cast<std::size_t>(iw)) +=
                  dcol(row, static_cast<Eigen::Index>(oh * wo + ow));
            }
          }
        }
    }
}

}  // namespace convdetail

/// Per-frame 2D convolution over {C,F,H,W}; weight {Cout, Cin*kh*kw},
/// bias {Cout,1}. Frames act as the batch dimension.
inline Var conv2d_frames(const Var& x, const Var& weight, const Var& bias,
                         std::size_t kh, std::size_t kw, std::size_t stride,
                         std::size_t pad) {
  require(x.value().rank() == 4, "conv2d_frames: x rank");
  const std::size_t cin = x.value().dim(0), frames = x.value().dim(1),
                    h = x.value().dim(2), w = x.value().dim(3);
  require(weight.value().cols() == cin * kh * kw, "conv2d_frames: weight");
  const std::size_t cout = weight.value().rows();
  require(bias.value().rows() == cout && bias.value().cols() == 1,
          "conv2d_frames: bias");
  const std::size_t ho = convdetail::out_extent(h, kh, pad, stride);
  const std::size_t wo = convdetail::out_extent(w, kw, pad, stride);

  NDArray out({cout, frames, ho, wo});
  RowMajorMatrix col;
  for (std::size_t f = 0; f < frames; ++f) {
    convdetail::im2col_frame(x.value(), f, kh, kw, pad, stride, col);
    RowMajorMatrix y = weight.value().mat() * col;
    y.colwise() += Eigen::VectorXd(bias.value().mat().col(0));
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t p = 0; p < ho * wo; ++p)
        out.at4(co, f, p / wo, p % wo) =
            y(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(p));
  }

  auto px = x.node(), pw = weight.node(), pb = bias.node();
  return detail::make_op(
      std::move(out), {px, pw, pb},
      [px, pw, pb, kh, kw, stride, pad, cout, frames, ho,
       wo](detail::Node& self) {
        RowMajorMatrix col, dy(static_cast<Eigen::Index>(cout),
                               static_cast<Eigen::Index>(ho * wo));
        for (std::size_t f = 0; f < frames; ++f) {
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t p = 0; p < ho * wo; ++p)
              dy(static_cast<Eigen::Index>(co),
                 static_cast<Eigen::Index>(p)) =
                  self.grad.at4(co, f, p / wo, p % wo);
          if (pw->requires_grad || px->requires_grad)
            convdetail::im2col_frame(px->value, f, kh, kw, pad, stride, col);
          if (pw->requires_grad)
            pw->ensure_grad().mat().noalias() += dy * col.transpose();
          if (pb->requires_grad)
            pb->ensure_grad().mat().col(0) += dy.rowwise().sum();
          if (px->requires_grad) {
            RowMajorMatrix dcol = pw->value.mat().transpose() * dy;
            convdetail::col2im_frame(dcol, f, kh, kw, pad, stride,
                                     px->ensure_grad());
          }
        }
      });
}

/// 3D convolution over {Cin,F,H,W} with stride 1; weight {Cout,
/// Cin*kt*kh*kw}, bias {Cout,1}. Temporal/spatial padding preserves F and
/// (for the 5x7x7 / (2,3,3) case) H, W.
inline Var conv3d(const Var& x, const Var& weight, const Var& bias,
                  std::size_t kt, std::size_t kh, std::size_t kw,
                  std::size_t pad_t, std::size_t pad_s) {
  require(x.value().rank() == 4, "conv3d: x rank");
  const std::size_t cin = x.value().dim(0), frames = x.value().dim(1),
                    h = x.value().dim(2), w = x.value().dim(3);
  require(weight.value().cols() == cin * kt * kh * kw, "conv3d: weight");
  const std::size_t cout = weight.value().rows();
  require(bias.value().rows() == cout && bias.value().cols() == 1,
          "conv3d: bias");
  require(frames + 2 * pad_t >= kt, "conv3d: too few frames");
  const std::size_t fo_count = frames + 2 * pad_t - kt + 1;
  const std::size_t ho = convdetail::out_extent(h, kh, pad_s, 1);
  const std::size_t wo = convdetail::out_extent(w, kw, pad_s, 1);

  NDArray out({cout, fo_count, ho, wo});
  RowMajorMatrix col;
  for (std::size_t fo = 0; fo < fo_count; ++fo) {
    convdetail::im2col_3d(x.value(), fo, kt, kh, kw, pad_t, pad_s, col);
    RowMajorMatrix y = weight.value().mat() * col;
    y.colwise() += Eigen::VectorXd(bias.value().mat().col(0));
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t p = 0; p < ho * wo; ++p)
        out.at4(co, fo, p / wo, p % wo) =
            y(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(p));
  }

  auto px = x.node(), pw = weight.node(), pb = bias.node();
  return detail::make_op(
      std::move(out), {px, pw, pb},
      [px, pw, pb, kt, kh, kw, pad_t, pad_s, cout, fo_count, ho,
       wo](detail::Node& self) {
        RowMajorMatrix col, dy(static_cast<Eigen::Index>(cout),
                               static_cast<Eigen::Index>(ho * wo));
        for (std::size_t fo = 0; fo < fo_count; ++fo) {
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t p = 0; p < ho * wo; ++p)
              dy(static_cast<Eigen::Index>(co),
                 static_cast<Eigen::Index>(p)) =
                  self.grad.at4(co, fo, p / wo, p % wo);
          if (pw->requires_grad || px->requires_grad)
            convdetail::im2col_3d(px->value, fo, kt, kh, kw, pad_t, pad_s,
                                  col);
          if (pw->requires_grad)
            pw->ensure_grad().mat().noalias() += dy * col.transpose();
          if (pb->requires_grad)
            pb->ensure_grad().mat().col(0) += dy.rowwise().sum();
          if (px->requires_grad) {
            RowMajorMatrix dcol = pw->value.mat().transpose() * dy;
            convdetail::col2im_3d(dcol, fo, kt, kh, kw, pad_t, pad_s,
                                  px->ensure_grad());
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Batch norm, pooling, squeeze-excite plumbing.
// ---------------------------------------------------------------------------

/// Per-channel batch normalization over {C,F,H,W} with frames x spatial as
/// the statistics population. In train mode batch statistics are used and the
/// running buffers (owned by the layer) are updated as a side effect; in eval
/// mode the running buffers are used.
inline Var batchnorm_frames(const Var& x, const Var& gamma, const Var& beta,
                            NDArray& running_mean, NDArray& running_var,
                            double momentum, double eps, bool train) {
  require(x.value().rank() == 4, "batchnorm_frames: x rank");
  const std::size_t ch = x.value().dim(0);
  const std::size_t m = x.value().dim(1) * x.value().dim(2) * x.value().dim(3);
  require(gamma.value().rows() == ch && beta.value().rows() == ch,
          "batchnorm_frames: affine shape");
  require(running_mean.size() == ch && running_var.size() == ch,
          "batchnorm_frames: buffer shape");
  require(m >= 1, "batchnorm_frames: empty population");

  const auto ci = static_cast<Eigen::Index>(ch);
  const auto mi = static_cast<Eigen::Index>(m);
  ConstMatMap xm(x.value().data(), ci, mi);

  Eigen::VectorXd mean(ci), invstd(ci);
  if (train) {
    mean = xm.rowwise().mean();
    Eigen::VectorXd var(ci);
    for (Eigen::Index c = 0; c < ci; ++c)
      var[c] = (xm.row(c).array() - mean[c]).square().mean();
    for (Eigen::Index c = 0; c < ci; ++c)
      invstd[c] = 1.0 / std::sqrt(var[c] + eps);
    const double unbias = m > 1 ? static_cast<double>(m) / (m - 1.0) : 1.0;
    for (Eigen::Index c = 0; c < ci; ++c) {
      running_mean[static_cast<std::size_t>(c)] =
          (1.0 - momentum) * running_mean[static_cast<std::size_t>(c)] +
          momentum * mean[c];
      running_var[static_cast<std::size_t>(c)] =
          (1.0 - momentum) * running_var[static_cast<std::size_t>(c)] +
          momentum * var[c] * unbias;
    }
  } else {
    for (Eigen::Index c = 0; c < ci; ++c) {
      mean[c] = running_mean[static_cast<std::size_t>(c)];
      invstd[c] =
          1.0 / std::sqrt(running_var[static_cast<std::size_t>(c)] + eps);
    }
  }

  NDArray out(x.value().shape());
  MatMap om(out.data(), ci, mi);
  RowMajorMatrix xhat(ci, mi);
  for (Eigen::Index c = 0; c < ci; ++c) {
    xhat.row(c) = (xm.row(c).array() - mean[c]) * invstd[c];
    om.row(c) = xhat.row(c) * gamma.value()[static_cast<std::size_t>(c)] +
                Eigen::RowVectorXd::Constant(
                    mi, beta.value()[static_cast<std::size_t>(c)]);
  }

  auto px = x.node(), pg = gamma.node(), pbt = beta.node();
  return detail::make_op(
      std::move(out), {px, pg, pbt},
      [px, pg, pbt, xhat = std::move(xhat), invstd = std::move(invstd), ch, m,
       train](detail::Node& self) {
        const auto ci = static_cast<Eigen::Index>(ch);
        const auto mi = static_cast<Eigen::Index>(m);
        ConstMatMap gy(self.grad.data(), ci, mi);
        if (pg->requires_grad)
          for (Eigen::Index c = 0; c < ci; ++c)
            pg->ensure_grad()[static_cast<std::size_t>(c)] +=
                (gy.row(c).array() * xhat.row(c).array()).sum();
        if (pbt->requires_grad)
          for (Eigen::Index c = 0; c < ci; ++c)
            pbt->ensure_grad()[static_cast<std::size_t>(c)] +=
                gy.row(c).sum();
        if (px->requires_grad) {
          MatMap gx(px->ensure_grad().data(), ci, mi);
          for (Eigen::Index c = 0; c < ci; ++c) {
            const double g = pg->value[static_cast<std::size_t>(c)];
            if (train) {
              const double mean_dy = gy.row(c).mean();
              const double mean_dy_xhat =
                  (gy.row(c).array() * xhat.row(c).array()).mean();
              gx.row(c).array() +=
                  g * invstd[c] *
                  (gy.row(c).array() - mean_dy -
                   xhat.row(c).array() * mean_dy_xhat);
            } else {
              gx.row(c).array() += g * invstd[c] * gy.row(c).array();
            }
          }
        }
      });
}

/// Per-frame max pooling over {C,F,H,W}.
inline Var maxpool_frames(const Var& x, std::size_t k, std::size_t stride,
                          std::size_t pad) {
  require(x.value().rank() == 4, "maxpool_frames: x rank");
  const std::size_t ch = x.value().dim(0), frames = x.value().dim(1),
                    h = x.value().dim(2), w = x.value().dim(3);
  const std::size_t ho = convdetail::out_extent(h, k, pad, stride);
  const std::size_t wo = convdetail::out_extent(w, k, pad, stride);
  NDArray out({ch, frames, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  std::size_t oi = 0;
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_src = 0;
          bool found = false;
          for (std::size_t dh = 0; dh < k; ++dh) {
            const std::ptrdiff_t ih =
                static_cast<std::ptrdiff_t>(oh * stride + dh) -
                static_cast<std::ptrdiff_t>(pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t dw = 0; dw < k; ++dw) {
              const std::ptrdiff_t iw =
                  static_cast<std::ptrdiff_t>(ow * stride + dw) -
                  static_cast<std::ptrdiff_t>(pad);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
              const double v = x.value().at4(
                  c, f, static_cast<std::size_t>(ih),
                  static_cast<std::size_t>(iw));
              if (!found || v > best) {
                best = v;
                best_src = ((c * frames + f) * h +
                            static_cast<std::size_t>(ih)) *
                               w +
                           static_cast<std::size_t>(iw);
                found = true;
              }
            }
          }
          require(found, "maxpool_frames: empty window");
          out[oi] = best;
          argmax[oi] = best_src;
        }
  auto px = x.node();
  return detail::make_op(
      std::move(out), {px},
      [px, argmax = std::move(argmax)](detail::Node& self) {
        if (!px->requires_grad) return;
        NDArray& gx = px->ensure_grad();
        for (std::size_t i = 0; i < argmax.size(); ++i)
          gx[argmax[i]] += self.grad[i];
      });
}

/// Global average pooling over the spatial dims: {C,F,H,W} -> {C,F}.
inline Var gap_spatial(const Var& x) {
  require(x.value().rank() == 4, "gap_spatial: x rank");
  const std::size_t ch = x.value().dim(0), frames = x.value().dim(1),
                    hw = x.value().dim(2) * x.value().dim(3);
  NDArray out({ch, frames});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t f = 0; f < frames; ++f) {
      const double* p = x.value().data() + (c * frames + f) * hw;
      out.at(c, f) = ConstVecMap(p, static_cast<Eigen::Index>(hw)).mean();
    }
  auto px = x.node();
  return detail::make_op(
      std::move(out), {px}, [px, ch, frames, hw](detail::Node& self) {
        if (!px->requires_grad) return;
        NDArray& gx = px->ensure_grad();
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t f = 0; f < frames; ++f) {
            const double g = self.grad.at(c, f) / static_cast<double>(hw);
            double* p = gx.data() + (c * frames + f) * hw;
            VecMap(p, static_cast<Eigen::Index>(hw)).array() += g;
          }
      });
}

/// y[c,f,:,:] = x[c,f,:,:] * s[c,f]. The squeeze-excite recalibration.
inline Var channel_scale(const Var& x, const Var& s) {
  require(x.value().rank() == 4 && s.value().rank() == 2 &&
              s.value().rows() == x.value().dim(0) &&
              s.value().cols() == x.value().dim(1),
          "channel_scale: shape mismatch");
  const std::size_t ch = x.value().dim(0), frames = x.value().dim(1),
                    hw = x.value().dim(2) * x.value().dim(3);
  NDArray out(x.value().shape());
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t f = 0; f < frames; ++f) {
      const double* p = x.value().data() + (c * frames + f) * hw;
      double* q = out.data() + (c * frames + f) * hw;
      VecMap(q, static_cast<Eigen::Index>(hw)) =
          ConstVecMap(p, static_cast<Eigen::Index>(hw)) * s.value().at(c, f);
    }
  auto px = x.node(), ps = s.node();
  return detail::make_op(
      std::move(out), {px, ps}, [px, ps, ch, frames, hw](detail::Node& self) {
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t f = 0; f < frames; ++f) {
            const std::size_t off = (c * frames + f) * hw;
            ConstVecMap g(self.grad.data() + off,
                          static_cast<Eigen::Index>(hw));
            if (px->requires_grad)
              VecMap(px->ensure_grad().data() + off,
                     static_cast<Eigen::Index>(hw)) +=
                  g * ps->value.at(c, f);
            if (ps->requires_grad)
              ps->ensure_grad().at(c, f) +=
                  g.dot(ConstVecMap(px->value.data() + off,
                                    static_cast<Eigen::Index>(hw)));
          }
      });
}

/// Zero-pads channels: {C,F,H,W} -> {new_c,F,H,W}, original channels first.
/// The identity-shortcut fix-up when a block widens its output.
inline Var pad_channels(const Var& x, std::size_t new_c) {
  require(x.value().rank() == 4 && new_c >= x.value().dim(0),
          "pad_channels: new_c < C");
  const std::size_t ch = x.value().dim(0);
  if (new_c == ch) return x;
  NDArray out({new_c, x.value().dim(1), x.value().dim(2), x.value().dim(3)});
  std::copy(x.value().data(), x.value().data() + x.value().size(),
            out.data());
  auto px = x.node();
  return detail::make_op(std::move(out), {px}, [px](detail::Node& self) {
    if (!px->requires_grad) return;
    NDArray& gx = px->ensure_grad();
    VecMap(gx.data(), static_cast<Eigen::Index>(gx.size())) +=
        ConstVecMap(self.grad.data(), static_cast<Eigen::Index>(gx.size()));
  });
}

/// Strided identity: y[c,f,oh,ow] = x[c,f,oh*s,ow*s]. The downsampling half
/// of the zero-padded shortcut.
inline Var spatial_subsample(const Var& x, std::size_t stride) {
  require(x.value().rank() == 4 && stride >= 1, "spatial_subsample: args");
  if (stride == 1) return x;
  const std::size_t ch = x.value().dim(0), frames = x.value().dim(1),
                    h = x.value().dim(2), w = x.value().dim(3);
  const std::size_t ho = (h + stride - 1) / stride;
  const std::size_t wo = (w + stride - 1) / stride;
  NDArray out({ch, frames, ho, wo});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow)
          out.at4(c, f, oh, ow) = x.value().at4(c, f, oh * stride,
                                                ow * stride);
  auto px = x.node();
  return detail::make_op(
      std::move(out), {px},
      [px, ch, frames, ho, wo, stride](detail::Node& self) {
        if (!px->requires_grad) return;
        NDArray& gx = px->ensure_grad();
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t oh = 0; oh < ho; ++oh)
              for (std::size_t ow = 0; ow < wo; ++ow)
                gx.at4(c, f, oh * stride, ow * stride) +=
                    self.grad.at4(c, f, oh, ow);
      });
}

}  // namespace avsep::nn
