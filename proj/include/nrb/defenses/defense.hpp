// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_DEFENSES_DEFENSE_HPP_
#define NRB_DEFENSES_DEFENSE_HPP_

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nrb/codecs/codec.hpp"
#include "nrb/core/ops.hpp"
#include "nrb/core/random.hpp"
#include "nrb/quality/metrics.hpp"

namespace nrb {

// ---------------------------------------------------------------------------
// Transform defenses wrap a codec as post ∘ C ∘ pre. Randomized kinds
// resample their parameters on every codec call (derived from a base seed
// and a call counter), so attack crafting and evaluation see different
// draws while whole runs stay reproducible.
// ---------------------------------------------------------------------------

enum class DefenseKind {
  Identity,
  Flip,
  RandomRoll,
  RandomRotate,
  RandomColorReorder,
  RandomEnsemble,
  SelfEnsemble,
  SmoothingPurifier,
};

inline const char* defense_name(DefenseKind k) {
  switch (k) {
    case DefenseKind::Identity: return "identity";
    case DefenseKind::Flip: return "flip";
    case DefenseKind::RandomRoll: return "random_roll";
    case DefenseKind::RandomRotate: return "random_rotate";
    case DefenseKind::RandomColorReorder: return "random_color_reorder";
    case DefenseKind::RandomEnsemble: return "random_ensemble";
    case DefenseKind::SelfEnsemble: return "self_ensemble";
    case DefenseKind::SmoothingPurifier: return "smoothing_purifier";
  }
  fail("defense_name: bad kind");
}

inline DefenseKind defense_from_name(const std::string& name) {
  const DefenseKind kinds[] = {
      DefenseKind::Identity,       DefenseKind::Flip,
      DefenseKind::RandomRoll,     DefenseKind::RandomRotate,
      DefenseKind::RandomColorReorder, DefenseKind::RandomEnsemble,
      DefenseKind::SelfEnsemble,   DefenseKind::SmoothingPurifier};
  for (DefenseKind k : kinds)
    if (name == defense_name(k)) return k;
  if (name == "geometric_self_ensemble") return DefenseKind::SelfEnsemble;
  fail("unknown defense '", name, "'");
}

// One primitive preprocessing step with its sampled parameters. src_h/src_w
// record the extent the action was sampled for; rotation geometry and the
// postprocess crop are recomputed from them.
struct TransformAction {
  enum class Kind { FlipBoth, Roll, Rotate, ColorReorder, Blur };
  Kind kind = Kind::FlipBoth;
  int src_h = 0, src_w = 0;
  int axis = 0;   // Roll: 0 shifts rows (H), 1 shifts columns (W)
  int shift = 0;  // Roll amount, in [0, extent-1]
  int angle = 0;  // Rotate degrees, in [0, 359]
  std::array<int, 3> perm = {0, 1, 2};  // ColorReorder
};

struct DefenseTransform {
  DefenseKind kind = DefenseKind::Identity;
  bool sampled = false;
  std::vector<TransformAction> actions;  // pre applies in order
};

namespace detail {

// Rotation works on a reflect-padded square large enough to hold the image
// under any angle; the postprocess rotates back and crops the pad away.
struct RotateGeometry {
  int side = 0, top = 0, left = 0;
};

inline RotateGeometry rotate_geometry(int h, int w) {
  check(h >= 1 && w >= 1, "rotate: empty image");
  const double diag = std::sqrt(static_cast<double>(h) * h +
                                static_cast<double>(w) * w);
  RotateGeometry g;
  g.side = static_cast<int>(std::ceil(diag));
  g.top = (g.side - h) / 2;
  g.left = (g.side - w) / 2;
  // Symmetric reflect padding supports at most one full extent per side.
  check(g.side - h - g.top <= h && g.side - w - g.left <= w,
        "rotate: aspect ratio of ", h, "x", w,
        " too eccentric for reflect padding to a square");
  return g;
}

// Bilinear sampling plan for rotating a side x side square about its center.
// Quarter-turn angles use exact integer axes so lattice rotations stay
// bitwise exact; sample taps are clamped to the square.
inline std::shared_ptr<const GatherPlan> rotation_plan(int side, int deg) {
  auto plan = std::make_shared<GatherPlan>();
  plan->in_h = plan->in_w = plan->out_h = plan->out_w = side;
  plan->taps = 4;
  const size_t n = static_cast<size_t>(side) * side * 4;
  plan->idx.assign(n, -1);
  plan->wgt.assign(n, 0.0);

  const int amod = ((deg % 360) + 360) % 360;
  double c = 0.0, s = 0.0;
  switch (amod) {
    case 0: c = 1.0; break;
    case 90: s = 1.0; break;
    case 180: c = -1.0; break;
    case 270: s = -1.0; break;
    default: {
      const double th = amod * (std::acos(-1.0) / 180.0);
      c = std::cos(th);
      s = std::sin(th);
    }
  }
  const double ctr = (side - 1) / 2.0;
  size_t p = 0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x, ++p) {
      const double dy = y - ctr, dx = x - ctr;
      const double sy = c * dy - s * dx + ctr;
      const double sx = s * dy + c * dx + ctr;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      const double wt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx,
                            fy * (1 - fx), fy * fx};
      const int ty[4] = {y0, y0, y0 + 1, y0 + 1};
      const int tx[4] = {x0, x0 + 1, x0, x0 + 1};
      for (int k = 0; k < 4; ++k) {
        const int cy = std::clamp(ty[k], 0, side - 1);
        const int cx = std::clamp(tx[k], 0, side - 1);
        plan->idx[p * 4 + k] = static_cast<int32_t>(cy * side + cx);
        plan->wgt[p * 4 + k] = wt[k];
      }
    }
  }
  return plan;
}

inline std::vector<real> gaussian_taps5(double sigma) {
  std::vector<real> g(5);
  real sum = 0;
  for (int i = 0; i < 5; ++i) {
    g[static_cast<size_t>(i)] =
        std::exp(-(i - 2) * (i - 2) / (2.0 * sigma * sigma));
    sum += g[static_cast<size_t>(i)];
  }
  for (real& v : g) v /= sum;
  return g;
}

// 5x5 Gaussian blur applied per channel (reflect-padded, extent preserved).
inline Var depthwise_blur5(Var x, double sigma = 0.8) {
  Tape& t = *x.tape;
  const int c = t.val(x).c();
  const std::vector<real> g = gaussian_taps5(sigma);
  NdArray w({5, 5, c, c});
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      for (int i = 0; i < c; ++i)
        w.data[static_cast<size_t>(((a * 5 + b) * c + i) * c + i)] =
            g[static_cast<size_t>(a)] * g[static_cast<size_t>(b)];
  Var xp = pad2d(x, 2, 2, 2, 2, PadMode::Reflect);
  return conv2d(xp, t.constant(std::move(w)), t.constant(NdArray({c}, 0.0)),
                1, 0);
}

inline std::array<int, 3> inverse_perm(const std::array<int, 3>& p) {
  std::array<int, 3> inv{};
  for (int i = 0; i < 3; ++i) inv[static_cast<size_t>(p[static_cast<size_t>(i)])] = i;
  return inv;
}

inline void check_action_extent(const NdArray& v, const TransformAction& a,
                                const char* where) {
  check(v.h() == a.src_h && v.w() == a.src_w, where,
        ": transform was sampled for ", a.src_h, "x", a.src_w, ", got ",
        shape_str(v.shape));
}

}  // namespace detail

inline Var apply_action_pre(Var x, const TransformAction& a) {
  using K = TransformAction::Kind;
  Tape& t = *x.tape;
  switch (a.kind) {
    case K::FlipBoth:
      return flip2d(x, true, true);
    case K::Roll:
      detail::check_action_extent(t.val(x), a, "roll pre");
      return roll2d(x, a.axis, a.shift);
    case K::ColorReorder:
      return permute_channels(x, {a.perm[0], a.perm[1], a.perm[2]});
    case K::Blur:
      return detail::depthwise_blur5(x);
    case K::Rotate: {
      detail::check_action_extent(t.val(x), a, "rotate pre");
      const detail::RotateGeometry geo =
          detail::rotate_geometry(a.src_h, a.src_w);
      Var padded = pad2d(x, geo.top, geo.side - a.src_h - geo.top, geo.left,
                         geo.side - a.src_w - geo.left, PadMode::Reflect);
      return gather_linear(padded, detail::rotation_plan(geo.side, a.angle));
    }
  }
  fail("apply_action_pre: bad action kind");
}

inline Var apply_action_post(Var y, const TransformAction& a) {
  using K = TransformAction::Kind;
  Tape& t = *y.tape;
  switch (a.kind) {
    case K::FlipBoth:
      return flip2d(y, true, true);
    case K::Roll:
      return roll2d(y, a.axis, -a.shift);
    case K::ColorReorder: {
      const std::array<int, 3> inv = detail::inverse_perm(a.perm);
      return permute_channels(y, {inv[0], inv[1], inv[2]});
    }
    case K::Blur:
      return y;  // purification does nothing in the postprocess
    case K::Rotate: {
      const detail::RotateGeometry geo =
          detail::rotate_geometry(a.src_h, a.src_w);
      const NdArray& yv = t.val(y);
      check(yv.h() == geo.side && yv.w() == geo.side,
            "rotate post: expected ", geo.side, "x", geo.side, ", got ",
            shape_str(yv.shape));
      Var un = gather_linear(y, detail::rotation_plan(geo.side, -a.angle));
      return crop2d(un, geo.top, geo.left, a.src_h, a.src_w);
    }
  }
  fail("apply_action_post: bad action kind");
}

inline Var apply_pre(const DefenseTransform& tr, Var x) {
  check(tr.sampled, "defense transform used before its parameters were sampled");
  for (const TransformAction& a : tr.actions) x = apply_action_pre(x, a);
  return x;
}

// Inverse actions in reverse order.
inline Var apply_post(const DefenseTransform& tr, Var y) {
  check(tr.sampled, "defense transform used before its parameters were sampled");
  for (auto it = tr.actions.rbegin(); it != tr.actions.rend(); ++it)
    y = apply_action_post(y, *it);
  return y;
}

inline NdArray apply_pre(const DefenseTransform& tr, const NdArray& x) {
  Tape t;
  return t.val(apply_pre(tr, t.constant(x)));
}

inline NdArray apply_post(const DefenseTransform& tr, const NdArray& y) {
  Tape t;
  return t.val(apply_post(tr, t.constant(y)));
}

// Samples transform parameters for an h x w input. Sampling is separate from
// application so pre and post agree on the same draw.
inline DefenseTransform sample_transform(DefenseKind kind, int h, int w,
                                         uint64_t seed) {
  using K = TransformAction::Kind;
  DefenseTransform tr;
  tr.kind = kind;
  tr.sampled = true;
  Rng rng(mix_seed(seed, "defense-sample"));
  int ch = h, cw = w;  // extent evolves as rotations enlarge the canvas

  auto push_roll = [&] {
    TransformAction a;
    a.kind = K::Roll;
    a.src_h = ch;
    a.src_w = cw;
    a.axis = rng.uniform_int(0, 1);
    a.shift = rng.uniform_int(0, (a.axis == 0 ? ch : cw) - 1);
    tr.actions.push_back(a);
  };
  auto push_rotate = [&] {
    TransformAction a;
    a.kind = K::Rotate;
    a.src_h = ch;
    a.src_w = cw;
    a.angle = rng.uniform_int(0, 359);
    tr.actions.push_back(a);
    ch = cw = detail::rotate_geometry(a.src_h, a.src_w).side;
  };
  auto push_color = [&] {
    static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    TransformAction a;
    a.kind = K::ColorReorder;
    a.src_h = ch;
    a.src_w = cw;
    const int* p = kPerms[rng.uniform_int(0, 5)];
    a.perm = {p[0], p[1], p[2]};
    tr.actions.push_back(a);
  };

  switch (kind) {
    case DefenseKind::Identity:
      break;
    case DefenseKind::Flip: {
      TransformAction a;
      a.kind = K::FlipBoth;
      a.src_h = ch;
      a.src_w = cw;
      tr.actions.push_back(a);
      break;
    }
    case DefenseKind::RandomRoll:
      push_roll();
      break;
    case DefenseKind::RandomRotate:
      push_rotate();
      break;
    case DefenseKind::RandomColorReorder:
      push_color();
      break;
    case DefenseKind::SmoothingPurifier: {
      TransformAction a;
      a.kind = K::Blur;
      a.src_h = ch;
      a.src_w = cw;
      tr.actions.push_back(a);
      break;
    }
    case DefenseKind::RandomEnsemble:
      // 10 actions drawn from {roll, rotate, color reorder} at weights 4:4:1.
      for (int i = 0; i < 10; ++i) {
        const int r = rng.uniform_int(0, 8);
        if (r < 4) push_roll();
        else if (r < 8) push_rotate();
        else push_color();
      }
      break;
    case DefenseKind::SelfEnsemble:
      fail("self-ensemble is an ensemble strategy, not a sampled transform");
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Geometric self-ensemble: run the codec on all 8 dihedral variants of the
// input and keep the reconstruction closest to the original in MSE.
// ---------------------------------------------------------------------------

namespace detail {

// Variants 0..3 are quarter turns; 4..7 add a horizontal flip first.
inline Var dihedral_pre(Var x, int variant) {
  check(variant >= 0 && variant < 8, "dihedral variant must be in [0,8)");
  Var y = variant >= 4 ? flip2d(x, false, true) : x;
  return rot90(y, variant % 4);
}

inline Var dihedral_post(Var y, int variant) {
  Var u = rot90(y, (4 - variant % 4) % 4);
  return variant >= 4 ? flip2d(u, false, true) : u;
}

}  // namespace detail

struct SelfEnsembleChoice {
  int variant_id = 0;
  double mse_to_input = std::numeric_limits<double>::infinity();
};

// Ties break toward the lowest variant id (the identity variant is id 0).
inline SelfEnsembleChoice select_self_ensemble_variant(const ICodec& codec,
                                                       const NdArray& x,
                                                       QuantMode mode,
                                                       uint64_t call_seed) {
  SelfEnsembleChoice best;
  for (int v = 0; v < 8; ++v) {
    Tape t;
    CodecGraph g = codec.forward_graph(t, detail::dihedral_pre(t.constant(x), v),
                                       mode, call_seed);
    const double m = mse(t.val(detail::dihedral_post(g.reconstruction, v)), x);
    if (m < best.mse_to_input) {
      best.mse_to_input = m;
      best.variant_id = v;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// A codec wrapped in a defense. Exposes the plain codec interface; in STE
// mode the whole pipeline stays differentiable, which is what adaptive
// attacks differentiate through (one sampled transform instance per call).
// The rate is measured inside the transform, i.e. for C(T(x)).
// ---------------------------------------------------------------------------

class DefendedCodec : public ICodec {
 public:
  DefendedCodec(const ICodec& base, DefenseKind kind, uint64_t seed)
      : base_(&base), kind_(kind), seed_(seed) {}

  std::string name() const override {
    return base_->name() + "+" + defense_name(kind_);
  }
  size_t param_count() const override { return base_->param_count(); }

  CodecGraph forward_graph(Tape& t, Var x, QuantMode mode,
                           uint64_t call_seed) const override {
    if (kind_ == DefenseKind::SelfEnsemble) {
      const SelfEnsembleChoice c =
          select_self_ensemble_variant(*base_, t.val(x), mode, call_seed);
      CodecGraph g = base_->forward_graph(
          t, detail::dihedral_pre(x, c.variant_id), mode, call_seed);
      g.reconstruction = detail::dihedral_post(g.reconstruction, c.variant_id);
      return g;
    }
    const uint64_t draw =
        mix_seed(mix_seed(seed_, "defense-call"), counter_.fetch_add(1));
    const NdArray& xv = t.val(x);
    const DefenseTransform tr = sample_transform(kind_, xv.h(), xv.w(), draw);
    CodecGraph g = base_->forward_graph(t, apply_pre(tr, x), mode, call_seed);
    g.reconstruction = apply_post(tr, g.reconstruction);
    return g;
  }

  uint64_t calls() const { return counter_.load(); }

 private:
  const ICodec* base_;
  DefenseKind kind_;
  uint64_t seed_;
  mutable std::atomic<uint64_t> counter_{0};
};

}  // namespace nrb

#endif  // NRB_DEFENSES_DEFENSE_HPP_
