// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef NRB_QUALITY_METRICS_HPP_
#define NRB_QUALITY_METRICS_HPP_

// Full-reference quality metrics. MS-SSIM is built out of tape ops so the
// same forward path serves both plain scoring and differentiable attack
// objectives; MSE/PSNR have direct implementations plus graph twins.

#include <algorithm>
#include <cmath>
#include <vector>

#include "nrb/core/array.hpp"
#include "nrb/core/diag.hpp"
#include "nrb/core/error.hpp"
#include "nrb/core/ops.hpp"
#include "nrb/core/tape.hpp"

namespace nrb {

// ---------------------------------------------------------------------------
// Color.
// ---------------------------------------------------------------------------

// Full-range BT.601. Rows: Y, Cb, Cr; Cb/Cr are offset by +0.5 so that
// neutral gray maps to (g, 0.5, 0.5).
inline const real* ycbcr_rows() {
  static const real rows[9] = {
      0.299,               0.587,               0.114,
      -0.299 * 0.5 / 0.886, -0.587 * 0.5 / 0.886, 0.5,
      0.5,                 -0.587 * 0.5 / 0.701, -0.114 * 0.5 / 0.701};
  return rows;
}

inline NdArray rgb_to_ycbcr(const NdArray& rgb) {
  check(rgb.rank() == 3 && rgb.c() == 3, "rgb_to_ycbcr: want (H,W,3), got ",
        shape_str(rgb.shape));
  const real* m = ycbcr_rows();
  NdArray out(rgb.shape);
  const size_t n = static_cast<size_t>(rgb.h()) * rgb.w();
  for (size_t i = 0; i < n; ++i) {
    const real r = rgb.data[3 * i], g = rgb.data[3 * i + 1], b = rgb.data[3 * i + 2];
    out.data[3 * i + 0] = m[0] * r + m[1] * g + m[2] * b;
    out.data[3 * i + 1] = m[3] * r + m[4] * g + m[5] * b + 0.5;
    out.data[3 * i + 2] = m[6] * r + m[7] * g + m[8] * b + 0.5;
  }
  return out;
}

// 1x1 convolution with fixed coefficients; shared by the graph color ops.
inline Var channel_mix_graph(Tape& t, Var x, const std::vector<real>& rows,
                             const std::vector<real>& off, int out_c) {
  const int in_c = t.val(x).c();
  check(static_cast<int>(rows.size()) == in_c * out_c,
        "channel_mix_graph: coefficient count mismatch");
  NdArray w({1, 1, in_c, out_c});
  for (int co = 0; co < out_c; ++co)
    for (int ci = 0; ci < in_c; ++ci)
      w.data[static_cast<size_t>(ci) * out_c + co] = rows[static_cast<size_t>(co) * in_c + ci];
  NdArray b({out_c});
  for (int co = 0; co < out_c; ++co) b.data[co] = off[co];
  return conv2d(x, t.constant(std::move(w)), t.constant(std::move(b)), 1, 0);
}

inline Var rgb_to_ycbcr_graph(Tape& t, Var x) {
  check(t.val(x).rank() == 3 && t.val(x).c() == 3,
        "rgb_to_ycbcr_graph: want (H,W,3), got ", shape_str(t.val(x).shape));
  const real* m = ycbcr_rows();
  return channel_mix_graph(t, x, std::vector<real>(m, m + 9), {0.0, 0.5, 0.5}, 3);
}

// (H,W,3) -> (H,W,1) BT.601 luma; single-channel input passes through.
inline Var luminance_graph(Tape& t, Var x) {
  const NdArray& v = t.val(x);
  check(v.rank() == 3, "luminance_graph: want rank-3 image, got ", shape_str(v.shape));
  if (v.c() == 1) return x;
  check(v.c() == 3, "luminance_graph: want 1 or 3 channels, got ", v.c());
  const real* m = ycbcr_rows();
  return channel_mix_graph(t, x, {m[0], m[1], m[2]}, {0.0}, 1);
}

inline NdArray luminance(const NdArray& img) {
  Tape t;
  return t.val(luminance_graph(t, t.constant(img)));
}

// ---------------------------------------------------------------------------
// MSE / PSNR.
// ---------------------------------------------------------------------------

inline double mse(const NdArray& a, const NdArray& b) {
  check(a.same_shape(b), "mse: shape mismatch ", shape_str(a.shape), " vs ",
        shape_str(b.shape));
  check(a.numel() > 0, "mse: empty input");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

// Peak signal-to-noise ratio for unit-range signals, capped at 100 dB so
// identical inputs stay finite and comparable.
inline double psnr(const NdArray& a, const NdArray& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / m));
}

inline Var mse_graph(Tape& t, Var a, Var b) {
  check(t.val(a).same_shape(t.val(b)), "mse_graph: shape mismatch");
  return mean(square(sub(a, b)));
}

// ---------------------------------------------------------------------------
// SSIM / MS-SSIM.
// ---------------------------------------------------------------------------

struct MsSsimParams {
  int scales = 5;
  int window = 11;
  double sigma = 1.5;
};

// Largest usable scale count: every scale's pyramid extent (successive
// floor-halving) must still fit the window.
inline int ms_ssim_usable_scales(int h, int w, const MsSsimParams& p = {}) {
  int usable = 0;
  for (int s = 1; s <= p.scales; ++s) {
    const int ext = std::min(h, w) >> (s - 1);
    if (ext >= p.window) usable = s;
  }
  return usable;
}

namespace detail {

inline Var gaussian_blur_valid(Tape& t, Var x, int taps, double sigma) {
  std::vector<real> g(taps);
  const double c = (taps - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < taps; ++i) {
    g[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  NdArray w({taps, taps, 1, 1});
  for (int y = 0; y < taps; ++y)
    for (int z = 0; z < taps; ++z)
      w.data[static_cast<size_t>(y) * taps + z] = g[y] * g[z] / (sum * sum);
  return conv2d(x, t.constant(std::move(w)), t.constant(NdArray({1}, 0.0)), 1, 0);
}

// Elementwise a/b for a provably positive denominator.
inline Var div_pos(Var a, Var b) { return mul(a, exp_op(scale(log_op(b), -1.0))); }

}  // namespace detail

// Multi-scale SSIM on the tape. Inputs are (H,W,1) or (H,W,3) images in
// [0,1]; RGB is converted to BT.601 luma first. When the image cannot
// support the requested pyramid the scale count is reduced and the weight
// prefix renormalized (diag().msssim_scales_reduced counts it). Identical
// inputs give exactly 1.0; the value lies in (0,1].
inline Var ms_ssim_graph(Tape& t, Var a, Var b, const MsSsimParams& p = {}) {
  static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  const NdArray& av = t.val(a);
  const NdArray& bv = t.val(b);
  check(av.same_shape(bv), "ms_ssim: shape mismatch ", shape_str(av.shape),
        " vs ", shape_str(bv.shape));
  check(av.rank() == 3, "ms_ssim: want rank-3 image, got ", shape_str(av.shape));
  check(p.scales >= 1 && p.scales <= 5, "ms_ssim: scale count must be in [1,5]");
  const real lo = std::min(min_value(av), min_value(bv));
  const real hi = std::max(max_value(av), max_value(bv));
  check(lo >= -1e-9 && hi <= 1.0 + 1e-9, "ms_ssim: values outside [0,1] (min ",
        lo, ", max ", hi, ")");

  const int usable = ms_ssim_usable_scales(av.h(), av.w(), p);
  check(usable >= 1, "ms_ssim: image ", av.h(), "x", av.w(),
        " smaller than the ", p.window, "-tap window");
  if (usable < p.scales) diag().msssim_scales_reduced++;
  double wsum = 0.0;
  for (int s = 0; s < usable; ++s) wsum += kWeights[s];

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  Var xa = luminance_graph(t, a);
  Var xb = luminance_graph(t, b);
  Var result;
  for (int s = 0; s < usable; ++s) {
    Var mu_a = detail::gaussian_blur_valid(t, xa, p.window, p.sigma);
    Var mu_b = detail::gaussian_blur_valid(t, xb, p.window, p.sigma);
    Var e_aa = detail::gaussian_blur_valid(t, square(xa), p.window, p.sigma);
    Var e_bb = detail::gaussian_blur_valid(t, square(xb), p.window, p.sigma);
    Var e_ab = detail::gaussian_blur_valid(t, mul(xa, xb), p.window, p.sigma);
    Var saa = sub(e_aa, square(mu_a));
    Var sbb = sub(e_bb, square(mu_b));
    Var sab = sub(e_ab, mul(mu_a, mu_b));
    // Both denominators are bounded below by their stabilizer: the variance
    // estimates can only go negative by rounding noise, orders of magnitude
    // below c2.
    Var cs = detail::div_pos(shift(scale(sab, 2.0), c2), shift(add(saa, sbb), c2));
    Var m;
    if (s + 1 < usable) {
      m = mean(cs);
      xa = avg_pool(xa, 2);
      xb = avg_pool(xb, 2);
    } else {
      Var l = detail::div_pos(shift(scale(mul(mu_a, mu_b), 2.0), c1),
                              shift(add(square(mu_a), square(mu_b)), c1));
      m = mean(mul(l, cs));
    }
    Var term = pow_floor(m, kWeights[s] / wsum);
    result = result.valid() ? mul(result, term) : term;
  }
  return result;
}

inline double ms_ssim(const NdArray& a, const NdArray& b, const MsSsimParams& p = {}) {
  // Bitwise-equal inputs score exactly 1. The windowed evaluation lands
  // within an ulp of it, and exact-identity invariants downstream (an
  // identity codec must score zero deltas) need the equality to be exact,
  // like the psnr cap above. Input validation must not get skipped.
  if (a.same_shape(b) && a.data == b.data) {
    check(a.rank() == 3, "ms_ssim: want rank-3 image, got ",
          shape_str(a.shape));
    check(p.scales >= 1 && p.scales <= 5,
          "ms_ssim: scale count must be in [1,5]");
    check(min_value(a) >= -1e-9 && max_value(a) <= 1.0 + 1e-9,
          "ms_ssim: values outside [0,1] (min ", min_value(a), ", max ",
          max_value(a), ")");
    check(ms_ssim_usable_scales(a.h(), a.w(), p) >= 1, "ms_ssim: image ",
          a.h(), "x", a.w(), " smaller than the ", p.window, "-tap window");
    return 1.0;
  }
  Tape t;
  return t.val(ms_ssim_graph(t, t.constant(a), t.constant(b), p)).data[0];
}

// Single-scale SSIM: the one-scale pyramid with its weight renormalized to
// one, i.e. the mean of the full luminance*contrast-structure map.
inline double ssim(const NdArray& a, const NdArray& b) {
  MsSsimParams p;
  p.scales = 1;
  return ms_ssim(a, b, p);
}

}  // namespace nrb

#endif  // NRB_QUALITY_METRICS_HPP_
