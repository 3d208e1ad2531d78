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

#ifndef NRB_ATTACKS_ATTACK_HPP_
#define NRB_ATTACKS_ATTACK_HPP_

// Adversarial attacks on image codecs. Shared contract for every attack:
//   - the result satisfies ||x_adv - x||_inf <= epsilon and lies in [0,1];
//   - (attack, objective, config, codec, image, seed) determines x_adv;
//   - iterative attacks return the best iterate seen, and the trace holds
//     the running-best objective, so the last entry equals the objective
//     recomputed at x_adv.
// Cores take the objective as an injected callable, so they can be driven
// by stub objectives in tests as well as by real codec pipelines.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nrb/attacks/objective.hpp"
#include "nrb/core/array.hpp"
#include "nrb/core/error.hpp"
#include "nrb/core/random.hpp"
#include "nrb/core/tape.hpp"

namespace nrb {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  int steps = 50;
  double lr = 0.01;
  uint64_t seed = 0;
  // query-based attacks
  int query_budget = 10000;
  int nes_samples = 50;       // antithetic pairs per estimation round
  double nes_sigma = 0.001;   // smoothing radius
  double square_side_fraction = 0.1;
  // noise control
  double gaussian_sigma = 10.0 / 255.0;
};

// Two fixed parameter sets used throughout the benchmark tables.
inline AttackConfig attack_preset(int id) {
  AttackConfig c;
  if (id == 0) {
    c.steps = 50;
    c.lr = 0.01;
  } else if (id == 1) {
    c.steps = 100;
    c.lr = 0.04;
  } else {
    fail("unknown attack preset ", id, " (want 0 or 1)");
  }
  return c;
}

struct AttackResult {
  NdArray x_adv;
  std::vector<double> trace;  // running-best objective per evaluation event
  int queries_used = 0;       // query-based attacks only
};

namespace detail {

inline NdArray sign_of(const NdArray& g) {
  NdArray s(g.shape);
  for (size_t i = 0; i < g.data.size(); ++i)
    s.data[i] = g.data[i] > 0 ? 1.0 : (g.data[i] < 0 ? -1.0 : 0.0);
  return s;
}

// Joint projection onto the epsilon box around x0 and the unit range.
inline NdArray project_ball(const NdArray& x0, NdArray cand, double eps) {
  for (size_t i = 0; i < cand.data.size(); ++i) {
    const real lo = std::max(real(0), x0.data[i] - eps);
    const real hi = std::min(real(1), x0.data[i] + eps);
    cand.data[i] = std::clamp(cand.data[i], lo, hi);
  }
  return cand;
}

inline NdArray clamp01_array(NdArray v) {
  for (real& x : v.data) x = std::clamp(x, real(0), real(1));
  return v;
}

struct ValGrad {
  double value = 0.0;
  NdArray grad;
};

inline ValGrad value_and_grad(const ObjectiveGraphFn& f, const NdArray& point) {
  Tape t;
  NdArray p = point;
  p.requires_grad = true;
  Var x = t.leaf(std::move(p));
  Var loss = f(t, x);
  ValGrad out;
  out.value = t.val(loss).data[0];
  Tape::GradMap g = t.backward(loss);
  out.grad = g.at(x);
  check(out.grad.all_finite(), "attack step: non-finite objective gradient");
  return out;
}

inline double eval_point(const ObjectiveGraphFn& f, const NdArray& point) {
  Tape t;
  return t.val(f(t, t.constant(point))).data[0];
}

// Keeps the best-objective iterate and the running-best trace.
struct BestTracker {
  double best = -std::numeric_limits<double>::infinity();
  NdArray point;
  std::vector<double> trace;
  void observe(double v, const NdArray& p) {
    if (v > best) {
      best = v;
      point = p;
    }
    trace.push_back(best);
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Sign-ascent family (I-FGSM and its random-start variant).
// ---------------------------------------------------------------------------

namespace detail {

inline AttackResult iterated_sign_ascent(const NdArray& x, const AttackConfig& cfg,
                                         const ObjectiveGraphFn& f,
                                         bool random_init) {
  NdArray xc = x;
  if (random_init) {
    Rng rng(mix_seed(cfg.seed, "pgd-init"));
    NdArray u = rng.uniform_array(x.shape, -cfg.epsilon, cfg.epsilon);
    for (size_t i = 0; i < xc.data.size(); ++i) xc.data[i] += u.data[i];
    xc = project_ball(x, std::move(xc), cfg.epsilon);
  }
  BestTracker bt;
  for (int k = 0; k < cfg.steps; ++k) {
    ValGrad vg = value_and_grad(f, xc);
    bt.observe(vg.value, xc);
    NdArray s = sign_of(vg.grad);
    for (size_t i = 0; i < xc.data.size(); ++i) xc.data[i] += cfg.lr * s.data[i];
    xc = project_ball(x, std::move(xc), cfg.epsilon);
  }
  bt.observe(eval_point(f, xc), xc);
  return AttackResult{std::move(bt.point), std::move(bt.trace), 0};
}

}  // namespace detail

inline AttackResult ifgsm_core(const NdArray& x, const AttackConfig& cfg,
                               const ObjectiveGraphFn& f) {
  return detail::iterated_sign_ascent(x, cfg, f, /*random_init=*/false);
}

inline AttackResult pgd_core(const NdArray& x, const AttackConfig& cfg,
                             const ObjectiveGraphFn& f) {
  return detail::iterated_sign_ascent(x, cfg, f, /*random_init=*/true);
}

// ---------------------------------------------------------------------------
// Adaptive-moment ascent with per-step projection. sign_step switches to
// sign updates of the moment direction.
// ---------------------------------------------------------------------------

inline AttackResult ftda_core(const NdArray& x, const AttackConfig& cfg,
                              const ObjectiveGraphFn& f, bool sign_step = false) {
  constexpr double b1 = 0.9, b2 = 0.999, fuzz = 1e-8;
  NdArray m(x.shape), v(x.shape);
  NdArray xc = x;
  detail::BestTracker bt;
  for (int k = 0; k < cfg.steps; ++k) {
    detail::ValGrad vg = detail::value_and_grad(f, xc);
    bt.observe(vg.value, xc);
    const double bc1 = 1.0 - std::pow(b1, k + 1);
    const double bc2 = 1.0 - std::pow(b2, k + 1);
    for (size_t i = 0; i < xc.data.size(); ++i) {
      const double g = vg.grad.data[i];
      m.data[i] = b1 * m.data[i] + (1 - b1) * g;
      v.data[i] = b2 * v.data[i] + (1 - b2) * g * g;
      double d = (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + fuzz);
      if (sign_step) d = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      xc.data[i] += cfg.lr * d;
    }
    xc = detail::project_ball(x, std::move(xc), cfg.epsilon);
  }
  bt.observe(detail::eval_point(f, xc), xc);
  return AttackResult{std::move(bt.point), std::move(bt.trace), 0};
}

// ---------------------------------------------------------------------------
// Proxy-constrained ascent: when the proxy distance is at its budget, the
// objective gradient is projected onto the proxy's level set.
// ---------------------------------------------------------------------------

enum class MadcProxy { L2, Linf, Mixed };

// g minus its component along h; plain g when h is degenerate.
inline NdArray madc_project(const NdArray& g, const NdArray& h) {
  const double hh = dot(h, h);
  if (hh <= 0.0) return g;
  const double coef = dot(g, h) / hh;
  NdArray out(g.shape);
  for (size_t i = 0; i < g.data.size(); ++i)
    out.data[i] = g.data[i] - coef * h.data[i];
  return out;
}

namespace detail {

struct ProxyEval {
  double rho = 0.0;
  NdArray grad;
};

inline ProxyEval proxy_l2(const NdArray& delta) {
  ProxyEval p;
  p.rho = l2_norm(delta);
  p.grad = NdArray(delta.shape);
  if (p.rho > 0)
    for (size_t i = 0; i < delta.data.size(); ++i)
      p.grad.data[i] = delta.data[i] / p.rho;
  return p;
}

// Smooth max via log-sum-exp of |delta| at fixed temperature.
inline ProxyEval proxy_linf(const NdArray& delta, double temp = 50.0) {
  ProxyEval p;
  p.grad = NdArray(delta.shape);
  real mx = 0.0;
  for (real v : delta.data) mx = std::max(mx, std::abs(v));
  double z = 0.0;
  for (real v : delta.data) z += std::exp(temp * (std::abs(v) - mx));
  p.rho = mx + std::log(z) / temp;
  for (size_t i = 0; i < delta.data.size(); ++i) {
    const real v = delta.data[i];
    const real sgn = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    p.grad.data[i] = sgn * std::exp(temp * (std::abs(v) - mx)) / z;
  }
  return p;
}

}  // namespace detail

inline AttackResult madc_core(const NdArray& x, const AttackConfig& cfg,
                              const ObjectiveGraphFn& f, MadcProxy proxy) {
  const double n = static_cast<double>(x.numel());
  NdArray xc = x;
  detail::BestTracker bt;
  for (int k = 0; k < cfg.steps; ++k) {
    detail::ValGrad vg = detail::value_and_grad(f, xc);
    // The running iterate is only softly constrained; score a feasible
    // snapshot so the returned point always satisfies the contract.
    NdArray snap = detail::project_ball(x, xc, cfg.epsilon);
    const bool moved = snap.data != xc.data;
    bt.observe(moved ? detail::eval_point(f, snap) : vg.value, snap);

    const MadcProxy active =
        proxy == MadcProxy::Mixed ? (k % 2 == 0 ? MadcProxy::L2 : MadcProxy::Linf)
                                  : proxy;
    NdArray delta(x.shape);
    for (size_t i = 0; i < delta.data.size(); ++i)
      delta.data[i] = xc.data[i] - x.data[i];
    detail::ProxyEval pe = active == MadcProxy::L2 ? detail::proxy_l2(delta)
                                                   : detail::proxy_linf(delta);
    const double budget = active == MadcProxy::L2 ? cfg.epsilon * std::sqrt(n)
                                                  : cfg.epsilon;
    NdArray dir = (pe.rho >= budget * (1.0 - 1e-3))
                      ? madc_project(vg.grad, pe.grad)
                      : vg.grad;
    if (active == MadcProxy::Linf) {
      dir = detail::sign_of(dir);
      for (size_t i = 0; i < xc.data.size(); ++i)
        xc.data[i] += cfg.lr * dir.data[i];
    } else {
      const double dn = l2_norm(dir);
      if (dn > 0)
        for (size_t i = 0; i < xc.data.size(); ++i)
          xc.data[i] += cfg.lr / dn * dir.data[i];
    }
    // Keep the iterate a valid image so image-domain objectives stay
    // defined; the epsilon constraint is enforced by the proxy and by the
    // final projection.
    xc = detail::clamp01_array(std::move(xc));
  }
  NdArray xf = detail::project_ball(x, std::move(xc), cfg.epsilon);
  bt.observe(detail::eval_point(f, xf), xf);
  return AttackResult{std::move(bt.point), std::move(bt.trace), 0};
}

// ---------------------------------------------------------------------------
// High-frequency perturbation: updates pass through a single-level Haar
// transform with the low-low band zeroed, so the accumulated perturbation
// has no low-frequency content before the final projection.
// ---------------------------------------------------------------------------

// Orthonormal single-level 2D Haar transform, quadrant-packed (LL in the
// top-left block). Extents must be even.
inline NdArray haar_forward(const NdArray& in) {
  check(in.rank() == 3 && in.h() % 2 == 0 && in.w() % 2 == 0,
        "haar_forward: want even (H,W,C), got ", shape_str(in.shape));
  const int h2 = in.h() / 2, w2 = in.w() / 2, ch = in.c();
  NdArray out(in.shape);
  for (int y = 0; y < h2; ++y)
    for (int x = 0; x < w2; ++x)
      for (int c = 0; c < ch; ++c) {
        const real a = in.at3(2 * y, 2 * x, c);
        const real b = in.at3(2 * y, 2 * x + 1, c);
        const real cc = in.at3(2 * y + 1, 2 * x, c);
        const real d = in.at3(2 * y + 1, 2 * x + 1, c);
        out.at3(y, x, c) = 0.5 * (a + b + cc + d);
        out.at3(y, x + w2, c) = 0.5 * (a - b + cc - d);
        out.at3(y + h2, x, c) = 0.5 * (a + b - cc - d);
        out.at3(y + h2, x + w2, c) = 0.5 * (a - b - cc + d);
      }
  return out;
}

inline NdArray haar_inverse(const NdArray& in) {
  check(in.rank() == 3 && in.h() % 2 == 0 && in.w() % 2 == 0,
        "haar_inverse: want even (H,W,C), got ", shape_str(in.shape));
  const int h2 = in.h() / 2, w2 = in.w() / 2, ch = in.c();
  NdArray out(in.shape);
  for (int y = 0; y < h2; ++y)
    for (int x = 0; x < w2; ++x)
      for (int c = 0; c < ch; ++c) {
        const real ll = in.at3(y, x, c);
        const real hh_ = in.at3(y, x + w2, c);
        const real vv = in.at3(y + h2, x, c);
        const real dd = in.at3(y + h2, x + w2, c);
        out.at3(2 * y, 2 * x, c) = 0.5 * (ll + hh_ + vv + dd);
        out.at3(2 * y, 2 * x + 1, c) = 0.5 * (ll - hh_ + vv - dd);
        out.at3(2 * y + 1, 2 * x, c) = 0.5 * (ll + hh_ - vv - dd);
        out.at3(2 * y + 1, 2 * x + 1, c) = 0.5 * (ll - hh_ - vv + dd);
      }
  return out;
}

// Zeroes the low-low band. Odd extents are zero-padded to even for the
// transform and cropped back, so the exact-zero property holds on the
// padded grid.
inline NdArray haar_highpass(const NdArray& u) {
  const int ph = u.h() % 2, pw = u.w() % 2;
  NdArray work = u;
  if (ph || pw) {
    NdArray padded({u.h() + ph, u.w() + pw, u.c()});
    for (int y = 0; y < u.h(); ++y)
      for (int x = 0; x < u.w(); ++x)
        for (int c = 0; c < u.c(); ++c) padded.at3(y, x, c) = u.at3(y, x, c);
    work = std::move(padded);
  }
  NdArray coef = haar_forward(work);
  const int h2 = coef.h() / 2, w2 = coef.w() / 2;
  for (int y = 0; y < h2; ++y)
    for (int x = 0; x < w2; ++x)
      for (int c = 0; c < coef.c(); ++c) coef.at3(y, x, c) = 0.0;
  NdArray inv = haar_inverse(coef);
  if (!ph && !pw) return inv;
  NdArray out(u.shape);
  for (int y = 0; y < u.h(); ++y)
    for (int x = 0; x < u.w(); ++x)
      for (int c = 0; c < u.c(); ++c) out.at3(y, x, c) = inv.at3(y, x, c);
  return out;
}

inline AttackResult ssah_core(const NdArray& x, const AttackConfig& cfg,
                              const ObjectiveGraphFn& f) {
  NdArray p(x.shape);  // accumulated high-frequency perturbation
  detail::BestTracker bt;
  auto feasible = [&]() {
    NdArray cand(x.shape);
    for (size_t i = 0; i < cand.data.size(); ++i)
      cand.data[i] = x.data[i] + p.data[i];
    return detail::project_ball(x, std::move(cand), cfg.epsilon);
  };
  for (int k = 0; k < cfg.steps; ++k) {
    NdArray point = feasible();
    detail::ValGrad vg = detail::value_and_grad(f, point);
    bt.observe(vg.value, point);
    NdArray step = detail::sign_of(vg.grad);
    for (real& v : step.data) v *= cfg.lr;
    NdArray upd = haar_highpass(step);
    for (size_t i = 0; i < p.data.size(); ++i) p.data[i] += upd.data[i];
  }
  NdArray xf = feasible();
  bt.observe(detail::eval_point(f, xf), xf);
  return AttackResult{std::move(bt.point), std::move(bt.trace), 0};
}

// ---------------------------------------------------------------------------
// Non-adversarial control: seeded Gaussian noise at matched budget.
// ---------------------------------------------------------------------------

inline AttackResult gaussian_noise_baseline(const NdArray& x, double sigma,
                                            double eps, uint64_t seed) {
  check(sigma >= 0, "gaussian baseline: sigma must be non-negative");
  NdArray cand = x;
  if (sigma > 0) {
    Rng rng(mix_seed(seed, "gaussian-noise"));
    NdArray noise = rng.normal_array(x.shape, 0.0, sigma);
    for (size_t i = 0; i < cand.data.size(); ++i) cand.data[i] += noise.data[i];
  }
  AttackResult r;
  r.x_adv = detail::project_ball(x, std::move(cand), eps);
  return r;  // trace deliberately empty: nothing was optimized
}

// ---------------------------------------------------------------------------
// Query-based attacks (codec treated as a black box in hard mode).
// ---------------------------------------------------------------------------

// Antithetic Gaussian gradient estimate around `center`; 2m queries.
// Sample points are clamped to the unit range to stay in the objective's
// domain.
inline NdArray nes_gradient(const NdArray& center, int m, double sigma, Rng& rng,
                            const ObjectiveEvalFn& f, int* queries) {
  check(m >= 1 && sigma > 0, "nes_gradient: bad sampling parameters");
  NdArray ghat(center.shape);
  NdArray plus(center.shape), minus(center.shape);
  for (int i = 0; i < m; ++i) {
    NdArray u = rng.normal_array(center.shape, 0.0, 1.0);
    for (size_t j = 0; j < u.data.size(); ++j) {
      plus.data[j] = std::clamp(center.data[j] + sigma * u.data[j], real(0), real(1));
      minus.data[j] = std::clamp(center.data[j] - sigma * u.data[j], real(0), real(1));
    }
    const double dv = f(plus) - f(minus);
    *queries += 2;
    for (size_t j = 0; j < u.data.size(); ++j) ghat.data[j] += dv * u.data[j];
  }
  const double scale_ = 1.0 / (2.0 * m * sigma);
  for (real& v : ghat.data) v *= scale_;
  return ghat;
}

inline AttackResult nes_core(const NdArray& x, const AttackConfig& cfg,
                             const ObjectiveEvalFn& f) {
  check(cfg.query_budget >= 2 * cfg.nes_samples, "nes: query budget ",
        cfg.query_budget, " cannot fund one estimation round (need ",
        2 * cfg.nes_samples, ")");
  Rng rng(mix_seed(cfg.seed, "nes"));
  NdArray xc = x;
  AttackResult r;
  detail::BestTracker bt;
  bt.observe(f(xc), xc);
  r.queries_used = 1;
  while (r.queries_used + 2 * cfg.nes_samples + 1 <= cfg.query_budget) {
    NdArray ghat = nes_gradient(xc, cfg.nes_samples, cfg.nes_sigma, rng, f,
                                &r.queries_used);
    NdArray s = detail::sign_of(ghat);
    for (size_t i = 0; i < xc.data.size(); ++i) xc.data[i] += cfg.lr * s.data[i];
    xc = detail::project_ball(x, std::move(xc), cfg.epsilon);
    bt.observe(f(xc), xc);
    ++r.queries_used;
  }
  r.x_adv = std::move(bt.point);
  r.trace = std::move(bt.trace);
  return r;
}

inline AttackResult square_core(const NdArray& x, const AttackConfig& cfg,
                                const ObjectiveEvalFn& f) {
  check(cfg.query_budget > 0, "square: query budget must be positive");
  Rng rng(mix_seed(cfg.seed, "square"));
  const int h = x.h(), w = x.w(), ch = x.c();
  const int base_side = std::min(h, w);

  AttackResult r;
  NdArray best = x;
  double vb = f(best);
  r.queries_used = 1;
  r.trace.push_back(vb);

  while (r.queries_used < cfg.query_budget) {
    const double frac = static_cast<double>(r.queries_used) / cfg.query_budget;
    double pfrac = cfg.square_side_fraction;
    for (double thr : {0.1, 0.25, 0.5, 0.75})
      if (frac >= thr) pfrac *= 0.5;
    const int side = std::max(1, static_cast<int>(std::lround(pfrac * base_side)));

    const int y0 = rng.uniform_int(0, h - side);
    const int x0 = rng.uniform_int(0, w - side);
    NdArray cand = best;
    for (int c = 0; c < ch; ++c) {
      const double s = rng.uniform_int(0, 1) ? cfg.epsilon : -cfg.epsilon;
      for (int yy = y0; yy < y0 + side; ++yy)
        for (int xx = x0; xx < x0 + side; ++xx)
          cand.at3(yy, xx, c) =
              std::clamp(x.at3(yy, xx, c) + s, real(0), real(1));
    }
    const double v = f(cand);
    ++r.queries_used;
    if (v > vb) {
      vb = v;
      best = std::move(cand);
    }
    r.trace.push_back(vb);
  }
  r.x_adv = std::move(best);
  return r;
}

// ---------------------------------------------------------------------------
// Registry.
// ---------------------------------------------------------------------------

enum class AttackKind {
  Ifgsm, Pgd, Ftda, FtdaLinf, MadcL2, MadcLinf, MadcMixed, Ssah,
  Gaussian, Nes, Square,
};

inline const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::Ifgsm: return "ifgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Ftda: return "ftda";
    case AttackKind::FtdaLinf: return "ftda_linf";
    case AttackKind::MadcL2: return "madc_l2";
    case AttackKind::MadcLinf: return "madc_linf";
    case AttackKind::MadcMixed: return "madc_mixed";
    case AttackKind::Ssah: return "ssah";
    case AttackKind::Gaussian: return "gaussian";
    case AttackKind::Nes: return "nes";
    case AttackKind::Square: return "square";
  }
  fail("attack_name: bad kind");
}

inline AttackKind attack_from_name(const std::string& name) {
  const AttackKind kinds[] = {
      AttackKind::Ifgsm,    AttackKind::Pgd,       AttackKind::Ftda,
      AttackKind::FtdaLinf, AttackKind::MadcL2,    AttackKind::MadcLinf,
      AttackKind::MadcMixed, AttackKind::Ssah,     AttackKind::Gaussian,
      AttackKind::Nes,      AttackKind::Square};
  for (AttackKind k : kinds)
    if (name == attack_name(k)) return k;
  fail("unknown attack '", name, "'");
}

inline bool attack_is_query_based(AttackKind k) {
  return k == AttackKind::Nes || k == AttackKind::Square;
}

// White-box attacks differentiate through the codec with straight-through
// rounding; query-based attacks see only hard-mode objective values.
inline AttackResult run_attack(AttackKind kind, const ICodec& codec,
                               const NdArray& x, const Objective& obj,
                               const AttackConfig& cfg) {
  if (kind == AttackKind::Gaussian)
    return gaussian_noise_baseline(x, cfg.gaussian_sigma, cfg.epsilon, cfg.seed);
  const uint64_t call_seed = mix_seed(cfg.seed, "codec-call");
  if (attack_is_query_based(kind)) {
    ObjectiveEvalFn f = make_objective_eval(obj, codec, x, QuantMode::Hard, call_seed);
    return kind == AttackKind::Nes ? nes_core(x, cfg, f) : square_core(x, cfg, f);
  }
  ObjectiveGraphFn f = make_objective_graph(obj, codec, x, QuantMode::Ste, call_seed);
  switch (kind) {
    case AttackKind::Ifgsm: return ifgsm_core(x, cfg, f);
    case AttackKind::Pgd: return pgd_core(x, cfg, f);
    case AttackKind::Ftda: return ftda_core(x, cfg, f, false);
    case AttackKind::FtdaLinf: return ftda_core(x, cfg, f, true);
    case AttackKind::MadcL2: return madc_core(x, cfg, f, MadcProxy::L2);
    case AttackKind::MadcLinf: return madc_core(x, cfg, f, MadcProxy::Linf);
    case AttackKind::MadcMixed: return madc_core(x, cfg, f, MadcProxy::Mixed);
    case AttackKind::Ssah: return ssah_core(x, cfg, f);
    default: fail("run_attack: unhandled attack kind");
  }
}

}  // namespace nrb

#endif  // NRB_ATTACKS_ATTACK_HPP_
