// Copyright (c) the nrbench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "nrb/core/random.hpp"
#include "nrb/core/tape.hpp"

namespace nrb {

// ─── Elementwise binary ops with limited broadcasting ─────────────────────
//
// Shapes must be equal, or one operand must be a scalar {1}, or a rank-1
// vector matching the other operand's last extent (a per-channel vector
// against an (H,W,C) array). Anything else is a shape error.

namespace detail {

struct BcastInfo {
  bool a_scalar = false, b_scalar = false;
  int a_chan = 0, b_chan = 0;  // nonzero = channel-vector length
};

inline BcastInfo bcast_info(const NdArray& a, const NdArray& b,
                            const char* opname) {
  BcastInfo info;
  if (a.same_shape(b)) return info;
  if (b.numel() == 1) {
    info.b_scalar = true;
    return info;
  }
  if (a.numel() == 1) {
    info.a_scalar = true;
    return info;
  }
  if (b.rank() == 1 && a.rank() > 1 && a.shape.back() == b.shape[0]) {
    info.b_chan = b.shape[0];
    return info;
  }
  if (a.rank() == 1 && b.rank() > 1 && b.shape.back() == a.shape[0]) {
    info.a_chan = a.shape[0];
    return info;
  }
  fail(opname, ": incompatible shapes ", shape_str(a.shape), " vs ",
       shape_str(b.shape));
}

inline real pick(const NdArray& v, size_t i, bool scalar, int chan) {
  if (scalar) return v.data[0];
  if (chan) return v.data[i % static_cast<size_t>(chan)];
  return v.data[i];
}

// Reduce a full-shaped gradient onto a broadcast operand's shape.
inline NdArray reduce_to(const NdArray& g, const std::vector<int>& target) {
  if (g.shape == target) return g;
  NdArray out(target);
  if (out.numel() == 1) {
    real s = 0;
    for (real v : g.data) s += v;
    out.data[0] = s;
    return out;
  }
  int c = target[0];
  int64_t rows = g.numel() / c;
  for (int64_t r = 0; r < rows; ++r)
    for (int i = 0; i < c; ++i)
      out.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(r * c + i)];
  return out;
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const NdArray &av = t.val(a), &bv = t.val(b);
  auto bc = detail::bcast_info(av, bv, "add");
  const NdArray& big = bc.a_scalar || bc.a_chan ? bv : av;
  NdArray out(big.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = detail::pick(av, i, bc.a_scalar, bc.a_chan) +
                  detail::pick(bv, i, bc.b_scalar, bc.b_chan);
  return t.node(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    if (tp.needs_grad(a)) tp.add_grad(a, detail::reduce_to(g, tp.val(a).shape));
    if (tp.needs_grad(b)) tp.add_grad(b, detail::reduce_to(g, tp.val(b).shape));
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const NdArray &av = t.val(a), &bv = t.val(b);
  auto bc = detail::bcast_info(av, bv, "sub");
  const NdArray& big = bc.a_scalar || bc.a_chan ? bv : av;
  NdArray out(big.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = detail::pick(av, i, bc.a_scalar, bc.a_chan) -
                  detail::pick(bv, i, bc.b_scalar, bc.b_chan);
  return t.node(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    if (tp.needs_grad(a)) tp.add_grad(a, detail::reduce_to(g, tp.val(a).shape));
    if (tp.needs_grad(b)) {
      NdArray neg(g.shape);
      for (size_t i = 0; i < g.data.size(); ++i) neg.data[i] = -g.data[i];
      tp.add_grad(b, detail::reduce_to(neg, tp.val(b).shape));
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const NdArray &av = t.val(a), &bv = t.val(b);
  auto bc = detail::bcast_info(av, bv, "mul");
  const NdArray& big = bc.a_scalar || bc.a_chan ? bv : av;
  NdArray out(big.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = detail::pick(av, i, bc.a_scalar, bc.a_chan) *
                  detail::pick(bv, i, bc.b_scalar, bc.b_chan);
  return t.node(std::move(out), {a, b}, [a, b, bc](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray &av2 = tp.val(a), &bv2 = tp.val(b);
    if (tp.needs_grad(a)) {
      NdArray ga(g.shape);
      for (size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] = g.data[i] * detail::pick(bv2, i, bc.b_scalar, bc.b_chan);
      tp.add_grad(a, detail::reduce_to(ga, av2.shape));
    }
    if (tp.needs_grad(b)) {
      NdArray gb(g.shape);
      for (size_t i = 0; i < g.data.size(); ++i)
        gb.data[i] = g.data[i] * detail::pick(av2, i, bc.a_scalar, bc.a_chan);
      tp.add_grad(b, detail::reduce_to(gb, bv2.shape));
    }
  });
}

// ─── Elementwise unary ops ─────────────────────────────────────────────────

// scalar multiply by a compile-time-known constant
inline Var scale(Var x, real c) {
  Tape& t = *x.tape;
  NdArray out(t.val(x).shape);
  const NdArray& xv = t.val(x);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] * c;
  return t.node(std::move(out), {x}, [x, c](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] = g.data[i] * c;
    tp.add_grad(x, gx);
  });
}

// add a scalar constant
inline Var shift(Var x, real c) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] + c;
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    tp.add_grad(x, tp.grad_ref(self));
  });
}

inline Var square(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] * xv.data[i];
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] = 2 * g.data[i] * xv2.data[i];
    tp.add_grad(x, gx);
  });
}

// |x|; subgradient 0 at x == 0
inline Var abs_op(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::abs(xv.data[i]);
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i) {
      real s = xv2.data[i] > 0 ? 1 : (xv2.data[i] < 0 ? real(-1) : real(0));
      gx.data[i] = g.data[i] * s;
    }
    tp.add_grad(x, gx);
  });
}

inline Var log_op(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    check(xv.data[i] > 0, "log: non-positive input ", xv.data[i]);
    out.data[i] = std::log(xv.data[i]);
  }
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] = g.data[i] / xv2.data[i];
    tp.add_grad(x, gx);
  });
}

inline Var exp_op(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::exp(xv.data[i]);
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& ov = tp.val(self);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] = g.data[i] * ov.data[i];
    tp.add_grad(x, gx);
  });
}

// sqrt with a defined subgradient 0 at the origin, so norms of zero vectors
// are exactly 0 with a finite gradient
inline Var sqrt0(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::sqrt(std::max(xv.data[i], real(0)));
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& ov = tp.val(self);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] = ov.data[i] > 0 ? g.data[i] * real(0.5) / ov.data[i] : real(0);
    tp.add_grad(x, gx);
  });
}

// x^p with the base floored at `floor_at` (> 0), so the power and its
// gradient stay finite for degenerate non-positive bases. x >= floor_at is
// the smooth region; pow(1, p) == 1 exactly.
inline Var pow_floor(Var x, real p, real floor_at = 1e-12) {
  Tape& t = *x.tape;
  check(floor_at > 0, "pow_floor: floor must be positive");
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::pow(std::max(xv.data[i], floor_at), p);
  return t.node(std::move(out), {x}, [x, p, floor_at](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] = xv2.data[i] > floor_at
                       ? g.data[i] * p * std::pow(xv2.data[i], p - 1)
                       : real(0);
    tp.add_grad(x, gx);
  });
}

// clamp to [0,1]; gradient 1 where the input lies inside [0,1], 0 outside
inline Var clamp01(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::min(real(1), std::max(real(0), xv.data[i]));
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] = (xv2.data[i] >= 0 && xv2.data[i] <= 1) ? g.data[i] : real(0);
    tp.add_grad(x, gx);
  });
}

inline Var leaky(Var x, real slope = 0.2) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = xv.data[i] >= 0 ? xv.data[i] : slope * xv.data[i];
  return t.node(std::move(out), {x}, [x, slope](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(g.shape);
    for (size_t i = 0; i < g.data.size(); ++i)
      gx.data[i] = xv2.data[i] >= 0 ? g.data[i] : slope * g.data[i];
    tp.add_grad(x, gx);
  });
}

// Quantizer. ste=true rounds in the forward pass and passes the gradient
// through unchanged; ste=false is the hard, non-differentiable rounding used
// for evaluation (gradient flow simply stops there). Ties round to even.
inline Var round_op(Var x, bool ste) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::nearbyint(xv.data[i]);
  if (!ste) return t.node(std::move(out), {x}, nullptr);
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    tp.add_grad(x, tp.grad_ref(self));
  });
}

// Quantization surrogate for training: adds noise drawn once at forward time
// (identity in the backward pass).
inline Var add_uniform_noise(Var x, Rng& rng, real lo = -0.5, real hi = 0.5) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  NdArray out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] + rng.uniform(lo, hi);
  return t.node(std::move(out), {x}, [x](Tape& tp, Var self) {
    tp.add_grad(x, tp.grad_ref(self));
  });
}

// ─── Reductions ────────────────────────────────────────────────────────────

inline Var sum(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  real s = 0;
  for (real v : xv.data) s += v;
  return t.node(NdArray::scalar(s), {x}, [x](Tape& tp, Var self) {
    real g = tp.grad_ref(self).data[0];
    NdArray gx(tp.val(x).shape, g);
    tp.add_grad(x, gx);
  });
}

inline Var mean(Var x) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.numel() > 0, "mean: empty array");
  real s = 0;
  for (real v : xv.data) s += v;
  real n = static_cast<real>(xv.numel());
  return t.node(NdArray::scalar(s / n), {x}, [x, n](Tape& tp, Var self) {
    real g = tp.grad_ref(self).data[0] / n;
    NdArray gx(tp.val(x).shape, g);
    tp.add_grad(x, gx);
  });
}

// ─── Spatial ops on (H,W,C) arrays ─────────────────────────────────────────

enum class PadMode { Zero, Reflect };

// Reflect padding is symmetric (edge included: cba|abc), which keeps pads up
// to the full extent legal even on tiny images.
inline Var pad2d(Var x, int top, int bottom, int left, int right,
                 PadMode mode = PadMode::Reflect) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "pad2d: expected (H,W,C), got ", shape_str(xv.shape));
  const int h = xv.h(), w = xv.w(), c = xv.c();
  check(top >= 0 && bottom >= 0 && left >= 0 && right >= 0,
        "pad2d: negative pad");
  if (mode == PadMode::Reflect)
    check(top <= h && bottom <= h && left <= w && right <= w,
          "pad2d: reflect pad exceeds extent ", shape_str(xv.shape));
  const int oh = h + top + bottom, ow = w + left + right;
  auto src_index = [](int o, int offset, int n) -> int {
    int i = o - offset;
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  NdArray out({oh, ow, c});
  for (int oy = 0; oy < oh; ++oy) {
    int iy = oy - top;
    bool y_in = iy >= 0 && iy < h;
    if (!y_in && mode == PadMode::Zero) continue;
    int sy = mode == PadMode::Zero ? iy : src_index(oy, top, h);
    for (int ox = 0; ox < ow; ++ox) {
      int ix = ox - left;
      bool x_in = ix >= 0 && ix < w;
      if (!x_in && mode == PadMode::Zero) continue;
      int sx = mode == PadMode::Zero ? ix : src_index(ox, left, w);
      for (int ch = 0; ch < c; ++ch) out.at3(oy, ox, ch) = xv.at3(sy, sx, ch);
    }
  }
  return t.node(std::move(out), {x},
                [x, top, left, h, w, mode, src_index](Tape& tp, Var self) {
                  const NdArray& g = tp.grad_ref(self);
                  NdArray gx({h, w, g.c()});
                  for (int oy = 0; oy < g.h(); ++oy) {
                    int iy = oy - top;
                    int sy;
                    if (mode == PadMode::Zero) {
                      if (iy < 0 || iy >= h) continue;
                      sy = iy;
                    } else {
                      sy = src_index(oy, top, h);
                    }
                    for (int ox = 0; ox < g.w(); ++ox) {
                      int ix = ox - left;
                      int sx;
                      if (mode == PadMode::Zero) {
                        if (ix < 0 || ix >= w) continue;
                        sx = ix;
                      } else {
                        sx = src_index(ox, left, w);
                      }
                      for (int ch = 0; ch < g.c(); ++ch)
                        gx.at3(sy, sx, ch) += g.at3(oy, ox, ch);
                    }
                  }
                  tp.add_grad(x, gx);
                });
}

inline Var crop2d(Var x, int top, int left, int oh, int ow) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "crop2d: expected (H,W,C), got ", shape_str(xv.shape));
  check(top >= 0 && left >= 0 && top + oh <= xv.h() && left + ow <= xv.w(),
        "crop2d: window (", top, ",", left, ",", oh, ",", ow,
        ") outside ", shape_str(xv.shape));
  const int c = xv.c();
  NdArray out({oh, ow, c});
  for (int y = 0; y < oh; ++y)
    for (int xcol = 0; xcol < ow; ++xcol)
      for (int ch = 0; ch < c; ++ch)
        out.at3(y, xcol, ch) = xv.at3(y + top, xcol + left, ch);
  return t.node(std::move(out), {x}, [x, top, left](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    NdArray gx(xv2.shape);
    for (int y = 0; y < g.h(); ++y)
      for (int xcol = 0; xcol < g.w(); ++xcol)
        for (int ch = 0; ch < g.c(); ++ch)
          gx.at3(y + top, xcol + left, ch) = g.at3(y, xcol, ch);
    tp.add_grad(x, gx);
  });
}

// Non-overlapping k x k average pooling with floor semantics (trailing rows
// and columns that do not fill a window are dropped).
inline Var avg_pool(Var x, int k) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "avg_pool: expected (H,W,C)");
  check(k >= 1, "avg_pool: window must be >= 1");
  const int h = xv.h(), w = xv.w(), c = xv.c();
  const int oh = h / k, ow = w / k;
  check(oh >= 1 && ow >= 1, "avg_pool: window ", k, " larger than input ",
        shape_str(xv.shape));
  NdArray out({oh, ow, c});
  const real inv = real(1) / (static_cast<real>(k) * k);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx)
          for (int ch = 0; ch < c; ++ch)
            out.at3(oy, ox, ch) += xv.at3(oy * k + dy, ox * k + dx, ch) * inv;
  return t.node(std::move(out), {x}, [x, k, inv](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    NdArray gx(tp.val(x).shape);
    for (int oy = 0; oy < g.h(); ++oy)
      for (int ox = 0; ox < g.w(); ++ox)
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            for (int ch = 0; ch < g.c(); ++ch)
              gx.at3(oy * k + dy, ox * k + dx, ch) += g.at3(oy, ox, ch) * inv;
    tp.add_grad(x, gx);
  });
}

// ─── Convolutions ──────────────────────────────────────────────────────────
//
// x is (H,W,Cin), w is (kh,kw,Cin,Cout), b is (Cout) or an invalid Var for
// no bias. Zero padding happens inside the kernel. The channel dimension is
// innermost in every loop so the hot loops vectorize.

inline Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  const NdArray& wv = t.val(w);
  check(xv.rank() == 3 && wv.rank() == 4, "conv2d: expected x(H,W,Cin), w(kh,kw,Cin,Cout)");
  const int h = xv.h(), wd = xv.w(), ci = xv.c();
  const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
  check(wv.dim(2) == ci, "conv2d: channel mismatch, x has ", ci,
        " input channels, w expects ", wv.dim(2));
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  check(oh >= 1 && ow >= 1, "conv2d: kernel ", kh, "x", kw,
        " larger than padded input ", shape_str(xv.shape));
  bool has_bias = b.valid();
  if (has_bias)
    check(t.val(b).rank() == 1 && t.val(b).dim(0) == co,
          "conv2d: bias shape mismatch");

  NdArray out({oh, ow, co});
  const real* X = xv.data.data();
  const real* W = wv.data.data();
  real* O = out.data.data();
  for (int oy = 0; oy < oh; ++oy) {
    const int iy0 = oy * stride - pad;
    for (int ox = 0; ox < ow; ++ox) {
      const int ix0 = ox * stride - pad;
      real* orow = O + (static_cast<int64_t>(oy) * ow + ox) * co;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = iy0 + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ix0 + kx;
          if (ix < 0 || ix >= wd) continue;
          const real* xrow = X + (static_cast<int64_t>(iy) * wd + ix) * ci;
          const real* wrow = W + ((static_cast<int64_t>(ky) * kw + kx) * ci) * co;
          for (int c2 = 0; c2 < ci; ++c2) {
            const real xvv = xrow[c2];
            const real* wc = wrow + static_cast<int64_t>(c2) * co;
            for (int c3 = 0; c3 < co; ++c3) orow[c3] += xvv * wc[c3];
          }
        }
      }
    }
  }
  if (has_bias) {
    const real* B = t.val(b).data.data();
    for (int64_t p = 0; p < static_cast<int64_t>(oh) * ow; ++p)
      for (int c3 = 0; c3 < co; ++c3) O[p * co + c3] += B[c3];
  }

  std::vector<Var> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  return t.node(std::move(out), inputs,
                [x, w, b, stride, pad, has_bias](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    const NdArray& wv2 = tp.val(w);
    const int h = xv2.h(), wd = xv2.w(), ci = xv2.c();
    const int kh = wv2.dim(0), kw = wv2.dim(1), co = wv2.dim(3);
    const int oh = g.h(), ow = g.w();
    const real* G = g.data.data();
    const real* X = xv2.data.data();
    const real* W = wv2.data.data();
    if (has_bias && tp.needs_grad(b)) {
      NdArray gb({co});
      for (int64_t p = 0; p < static_cast<int64_t>(oh) * ow; ++p)
        for (int c3 = 0; c3 < co; ++c3) gb.data[static_cast<size_t>(c3)] += G[p * co + c3];
      tp.add_grad(b, gb);
    }
    const bool need_x = tp.needs_grad(x);
    const bool need_w = tp.needs_grad(w);
    if (!need_x && !need_w) return;
    NdArray gx = need_x ? NdArray(xv2.shape) : NdArray();
    NdArray gw = need_w ? NdArray(wv2.shape) : NdArray();
    for (int oy = 0; oy < oh; ++oy) {
      const int iy0 = oy * stride - pad;
      for (int ox = 0; ox < ow; ++ox) {
        const int ix0 = ox * stride - pad;
        const real* grow = G + (static_cast<int64_t>(oy) * ow + ox) * co;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = iy0 + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ix0 + kx;
            if (ix < 0 || ix >= wd) continue;
            const int64_t xoff = (static_cast<int64_t>(iy) * wd + ix) * ci;
            const int64_t woff = (static_cast<int64_t>(ky) * kw + kx) * ci * co;
            if (need_x) {
              real* gxr = gx.data.data() + xoff;
              for (int c2 = 0; c2 < ci; ++c2) {
                const real* wc = W + woff + static_cast<int64_t>(c2) * co;
                real s = 0;
                for (int c3 = 0; c3 < co; ++c3) s += wc[c3] * grow[c3];
                gxr[c2] += s;
              }
            }
            if (need_w) {
              const real* xrow = X + xoff;
              for (int c2 = 0; c2 < ci; ++c2) {
                real* gwc = gw.data.data() + woff + static_cast<int64_t>(c2) * co;
                const real xvv = xrow[c2];
                for (int c3 = 0; c3 < co; ++c3) gwc[c3] += xvv * grow[c3];
              }
            }
          }
        }
      }
    }
    if (need_x) tp.add_grad(x, gx);
    if (need_w) tp.add_grad(w, gw);
  });
}

// Transposed convolution, the adjoint of conv2d with the same kernel/stride/
// pad geometry. The output extent is passed explicitly because the floor in
// the conv arithmetic makes it ambiguous.
inline Var tconv2d(Var x, Var w, Var b, int stride, int pad, int out_h, int out_w) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  const NdArray& wv = t.val(w);
  check(xv.rank() == 3 && wv.rank() == 4,
        "tconv2d: expected x(H,W,Cin), w(kh,kw,Cin,Cout)");
  const int ih = xv.h(), iw = xv.w(), ci = xv.c();
  const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
  check(wv.dim(2) == ci, "tconv2d: channel mismatch");
  check((out_h + 2 * pad - kh) / stride + 1 == ih &&
            (out_w + 2 * pad - kw) / stride + 1 == iw,
        "tconv2d: output extent (", out_h, ",", out_w,
        ") inconsistent with input ", shape_str(xv.shape));
  bool has_bias = b.valid();
  if (has_bias)
    check(t.val(b).rank() == 1 && t.val(b).dim(0) == co,
          "tconv2d: bias shape mismatch");

  NdArray out({out_h, out_w, co});
  const real* X = xv.data.data();
  const real* W = wv.data.data();
  real* O = out.data.data();
  for (int iy = 0; iy < ih; ++iy) {
    const int oy0 = iy * stride - pad;
    for (int ix = 0; ix < iw; ++ix) {
      const int ox0 = ix * stride - pad;
      const real* xrow = X + (static_cast<int64_t>(iy) * iw + ix) * ci;
      for (int ky = 0; ky < kh; ++ky) {
        const int oy = oy0 + ky;
        if (oy < 0 || oy >= out_h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ox = ox0 + kx;
          if (ox < 0 || ox >= out_w) continue;
          real* orow = O + (static_cast<int64_t>(oy) * out_w + ox) * co;
          const real* wrow = W + ((static_cast<int64_t>(ky) * kw + kx) * ci) * co;
          for (int c2 = 0; c2 < ci; ++c2) {
            const real xvv = xrow[c2];
            const real* wc = wrow + static_cast<int64_t>(c2) * co;
            for (int c3 = 0; c3 < co; ++c3) orow[c3] += xvv * wc[c3];
          }
        }
      }
    }
  }
  if (has_bias) {
    const real* B = t.val(b).data.data();
    for (int64_t p = 0; p < static_cast<int64_t>(out_h) * out_w; ++p)
      for (int c3 = 0; c3 < co; ++c3) O[p * co + c3] += B[c3];
  }

  std::vector<Var> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  return t.node(std::move(out), inputs,
                [x, w, b, stride, pad, has_bias](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const NdArray& xv2 = tp.val(x);
    const NdArray& wv2 = tp.val(w);
    const int ih = xv2.h(), iw = xv2.w(), ci = xv2.c();
    const int kh = wv2.dim(0), kw = wv2.dim(1), co = wv2.dim(3);
    const int oh = g.h(), ow = g.w();
    const real* G = g.data.data();
    const real* X = xv2.data.data();
    const real* W = wv2.data.data();
    if (has_bias && tp.needs_grad(b)) {
      NdArray gb({co});
      for (int64_t p = 0; p < static_cast<int64_t>(oh) * ow; ++p)
        for (int c3 = 0; c3 < co; ++c3) gb.data[static_cast<size_t>(c3)] += G[p * co + c3];
      tp.add_grad(b, gb);
    }
    const bool need_x = tp.needs_grad(x);
    const bool need_w = tp.needs_grad(w);
    if (!need_x && !need_w) return;
    NdArray gx = need_x ? NdArray(xv2.shape) : NdArray();
    NdArray gw = need_w ? NdArray(wv2.shape) : NdArray();
    for (int iy = 0; iy < ih; ++iy) {
      const int oy0 = iy * stride - pad;
      for (int ix = 0; ix < iw; ++ix) {
        const int ox0 = ix * stride - pad;
        const int64_t xoff = (static_cast<int64_t>(iy) * iw + ix) * ci;
        for (int ky = 0; ky < kh; ++ky) {
          const int oy = oy0 + ky;
          if (oy < 0 || oy >= oh) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ox = ox0 + kx;
            if (ox < 0 || ox >= ow) continue;
            const real* grow = G + (static_cast<int64_t>(oy) * ow + ox) * co;
            const int64_t woff = (static_cast<int64_t>(ky) * kw + kx) * ci * co;
            if (need_x) {
              real* gxr = gx.data.data() + xoff;
              for (int c2 = 0; c2 < ci; ++c2) {
                const real* wc = W + woff + static_cast<int64_t>(c2) * co;
                real s = 0;
                for (int c3 = 0; c3 < co; ++c3) s += wc[c3] * grow[c3];
                gxr[c2] += s;
              }
            }
            if (need_w) {
              const real* xrow = X + xoff;
              for (int c2 = 0; c2 < ci; ++c2) {
                real* gwc = gw.data.data() + woff + static_cast<int64_t>(c2) * co;
                const real xvv = xrow[c2];
                for (int c3 = 0; c3 < co; ++c3) gwc[c3] += xvv * grow[c3];
              }
            }
          }
        }
      }
    }
    if (need_x) tp.add_grad(x, gx);
    if (need_w) tp.add_grad(w, gw);
  });
}

// ─── Linear index-map ops (defense and metric plumbing) ────────────────────

// flip along spatial axes
inline Var flip2d(Var x, bool flip_h, bool flip_w) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "flip2d: expected (H,W,C)");
  const int h = xv.h(), w = xv.w(), c = xv.c();
  NdArray out({h, w, c});
  for (int y = 0; y < h; ++y) {
    int sy = flip_h ? h - 1 - y : y;
    for (int xcol = 0; xcol < w; ++xcol) {
      int sx = flip_w ? w - 1 - xcol : xcol;
      for (int ch = 0; ch < c; ++ch) out.at3(y, xcol, ch) = xv.at3(sy, sx, ch);
    }
  }
  return t.node(std::move(out), {x}, [x, flip_h, flip_w](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const int h = g.h(), w = g.w(), c = g.c();
    NdArray gx({h, w, c});
    for (int y = 0; y < h; ++y) {
      int sy = flip_h ? h - 1 - y : y;
      for (int xcol = 0; xcol < w; ++xcol) {
        int sx = flip_w ? w - 1 - xcol : xcol;
        for (int ch = 0; ch < c; ++ch) gx.at3(sy, sx, ch) += g.at3(y, xcol, ch);
      }
    }
    tp.add_grad(x, gx);
  });
}

// quarter-turn rotation, counterclockwise. Odd turns swap H and W.
inline Var rot90(Var x, int quarter_turns) {
  Tape& t = *x.tape;
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return x;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "rot90: expected (H,W,C)");
  const int h = xv.h(), w = xv.w(), c = xv.c();
  const int oh = (k % 2 == 0) ? h : w;
  const int ow = (k % 2 == 0) ? w : h;
  auto src = [h, w, k](int y, int x_) {
    switch (k) {
      case 1: return std::pair<int, int>{x_, w - 1 - y};
      case 2: return std::pair<int, int>{h - 1 - y, w - 1 - x_};
      default: return std::pair<int, int>{h - 1 - x_, y};
    }
  };
  NdArray out({oh, ow, c});
  for (int y = 0; y < oh; ++y)
    for (int xcol = 0; xcol < ow; ++xcol) {
      auto [sy, sx] = src(y, xcol);
      for (int ch = 0; ch < c; ++ch) out.at3(y, xcol, ch) = xv.at3(sy, sx, ch);
    }
  return t.node(std::move(out), {x}, [x, src](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    NdArray gx(tp.val(x).shape);
    for (int y = 0; y < g.h(); ++y)
      for (int xcol = 0; xcol < g.w(); ++xcol) {
        auto [sy, sx] = src(y, xcol);
        for (int ch = 0; ch < g.c(); ++ch)
          gx.at3(sy, sx, ch) += g.at3(y, xcol, ch);
      }
    tp.add_grad(x, gx);
  });
}

// cyclic shift: out[i + shift mod n] = in[i] along axis 0 (H) or 1 (W)
inline Var roll2d(Var x, int axis, int shift) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "roll2d: expected (H,W,C)");
  check(axis == 0 || axis == 1, "roll2d: axis must be 0 (H) or 1 (W)");
  const int h = xv.h(), w = xv.w(), c = xv.c();
  const int n = axis == 0 ? h : w;
  const int s = ((shift % n) + n) % n;
  NdArray out({h, w, c});
  for (int y = 0; y < h; ++y) {
    int oy = axis == 0 ? (y + s) % n : y;
    for (int xcol = 0; xcol < w; ++xcol) {
      int ox = axis == 1 ? (xcol + s) % n : xcol;
      for (int ch = 0; ch < c; ++ch) out.at3(oy, ox, ch) = xv.at3(y, xcol, ch);
    }
  }
  return t.node(std::move(out), {x}, [x, axis, s](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const int h = g.h(), w = g.w(), c = g.c();
    const int n = axis == 0 ? h : w;
    NdArray gx({h, w, c});
    for (int y = 0; y < h; ++y) {
      int oy = axis == 0 ? (y + s) % n : y;
      for (int xcol = 0; xcol < w; ++xcol) {
        int ox = axis == 1 ? (xcol + s) % n : xcol;
        for (int ch = 0; ch < c; ++ch) gx.at3(y, xcol, ch) += g.at3(oy, ox, ch);
      }
    }
    tp.add_grad(x, gx);
  });
}

// out[..., c] = in[..., perm[c]]
inline Var permute_channels(Var x, const std::vector<int>& perm) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3 && static_cast<int>(perm.size()) == xv.c(),
        "permute_channels: perm size must equal channel count");
  const int h = xv.h(), w = xv.w(), c = xv.c();
  NdArray out({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int xcol = 0; xcol < w; ++xcol)
      for (int ch = 0; ch < c; ++ch)
        out.at3(y, xcol, ch) = xv.at3(y, xcol, perm[static_cast<size_t>(ch)]);
  return t.node(std::move(out), {x}, [x, perm](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    NdArray gx(g.shape);
    for (int y = 0; y < g.h(); ++y)
      for (int xcol = 0; xcol < g.w(); ++xcol)
        for (int ch = 0; ch < g.c(); ++ch)
          gx.at3(y, xcol, perm[static_cast<size_t>(ch)]) += g.at3(y, xcol, ch);
    tp.add_grad(x, gx);
  });
}

// Fixed linear combination across channels: out(.,.,j) = off[j] + sum_i
// M[j*cin+i] * in(.,.,i). Used for color-space changes (the map is constant,
// so the backward pass is its transpose).
inline Var channel_affine(Var x, std::vector<real> m, std::vector<real> off) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "channel_affine: expected (H,W,C)");
  const int ci = xv.c();
  const int co = static_cast<int>(off.size());
  check(static_cast<int>(m.size()) == ci * co,
        "channel_affine: matrix size must be cout*cin");
  const int h = xv.h(), w = xv.w();
  NdArray out({h, w, co});
  for (int y = 0; y < h; ++y)
    for (int xcol = 0; xcol < w; ++xcol)
      for (int j = 0; j < co; ++j) {
        real s = off[static_cast<size_t>(j)];
        for (int i = 0; i < ci; ++i)
          s += m[static_cast<size_t>(j * ci + i)] * xv.at3(y, xcol, i);
        out.at3(y, xcol, j) = s;
      }
  return t.node(std::move(out), {x}, [x, m, ci, co](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    NdArray gx(tp.val(x).shape);
    for (int y = 0; y < g.h(); ++y)
      for (int xcol = 0; xcol < g.w(); ++xcol)
        for (int j = 0; j < co; ++j) {
          real gv = g.at3(y, xcol, j);
          for (int i = 0; i < ci; ++i)
            gx.at3(y, xcol, i) += m[static_cast<size_t>(j * ci + i)] * gv;
        }
    tp.add_grad(x, gx);
  });
}

// Sparse linear gather over spatial positions: each output pixel is a fixed
// weighted sum of up to `taps` input pixels (all channels share the plan).
// This is how bilinear rotation stays differentiable: the sampling grid is
// data-independent, so the op is linear in the image.
struct GatherPlan {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int taps = 4;
  std::vector<int32_t> idx;  // out_h*out_w*taps, spatial index or -1
  std::vector<real> wgt;     // same layout
};

inline Var gather_linear(Var x, std::shared_ptr<const GatherPlan> plan) {
  Tape& t = *x.tape;
  const NdArray& xv = t.val(x);
  check(xv.rank() == 3, "gather_linear: expected (H,W,C)");
  check(xv.h() == plan->in_h && xv.w() == plan->in_w,
        "gather_linear: plan built for (", plan->in_h, ",", plan->in_w,
        "), got ", shape_str(xv.shape));
  const int c = xv.c();
  NdArray out({plan->out_h, plan->out_w, c});
  const int64_t npix = static_cast<int64_t>(plan->out_h) * plan->out_w;
  for (int64_t p = 0; p < npix; ++p) {
    real* orow = out.data.data() + p * c;
    for (int k = 0; k < plan->taps; ++k) {
      int32_t src = plan->idx[static_cast<size_t>(p * plan->taps + k)];
      if (src < 0) continue;
      real wv = plan->wgt[static_cast<size_t>(p * plan->taps + k)];
      const real* xrow = xv.data.data() + static_cast<int64_t>(src) * c;
      for (int ch = 0; ch < c; ++ch) orow[ch] += wv * xrow[ch];
    }
  }
  return t.node(std::move(out), {x}, [x, plan](Tape& tp, Var self) {
    const NdArray& g = tp.grad_ref(self);
    const int c = g.c();
    NdArray gx(tp.val(x).shape);
    const int64_t npix = static_cast<int64_t>(plan->out_h) * plan->out_w;
    for (int64_t p = 0; p < npix; ++p) {
      const real* grow = g.data.data() + p * c;
      for (int k = 0; k < plan->taps; ++k) {
        int32_t src = plan->idx[static_cast<size_t>(p * plan->taps + k)];
        if (src < 0) continue;
        real wv = plan->wgt[static_cast<size_t>(p * plan->taps + k)];
        real* gxr = gx.data.data() + static_cast<int64_t>(src) * c;
        for (int ch = 0; ch < c; ++ch) gxr[ch] += wv * grow[ch];
      }
    }
    tp.add_grad(x, gx);
  });
}

}  // namespace nrb
