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
#include <functional>
#include <string>

#include "nrb/core/ops.hpp"

namespace nrb {

// f builds a scalar graph from a leaf holding x; the same callable serves the
// autodiff pass and the value-only finite-difference probes. Any randomness
// inside f must be re-seeded per call so the probes see a frozen function.
using ScalarGraphFn = std::function<Var(Tape&, Var)>;

struct FdReport {
  double max_abs_dev = 0;
  double max_rel_dev = 0;  // per element, floored denominator
  double vec_rel_dev = 0;  // ||ad - fd||2 / ||fd||2
  bool pass = false;
  std::string note;
  int n_checked = 0;
};

// Central finite differences against the tape gradient, elementwise over all
// of x. Pass criterion: the vector-relative deviation stays under tol.
// Purely flat functions (both gradients zero) pass; a probe that jumps while
// the tape reports zero is flagged as a suspected non-differentiable point.
inline FdReport finite_diff_check(const ScalarGraphFn& f, const NdArray& x,
                                  double step, double tol) {
  check(step > 0 && tol > 0, "finite_diff_check: step and tol must be positive");

  auto eval = [&](const NdArray& point) -> double {
    Tape t;
    NdArray p = point;
    p.requires_grad = false;
    Var leaf = t.leaf(std::move(p));
    Var out = f(t, leaf);
    check(t.val(out).numel() == 1, "finite_diff_check: f must be scalar");
    double v = t.val(out).data[0];
    check(std::isfinite(v), "finite_diff_check: non-finite value of f");
    return v;
  };

  NdArray ad;
  {
    Tape t;
    NdArray p = x;
    p.requires_grad = true;
    Var leaf = t.leaf(std::move(p));
    Var out = f(t, leaf);
    check(t.val(out).numel() == 1, "finite_diff_check: f must be scalar");
    check(std::isfinite(t.val(out).data[0]),
          "finite_diff_check: non-finite value of f");
    auto grads = t.backward(out);
    ad = grads.at(leaf);
  }

  FdReport rep;
  rep.n_checked = static_cast<int>(x.numel());
  double diff_sq = 0, fd_sq = 0;
  NdArray probe = x;
  for (size_t i = 0; i < probe.data.size(); ++i) {
    const real orig = probe.data[i];
    probe.data[i] = orig + step;
    double fp = eval(probe);
    probe.data[i] = orig - step;
    double fm = eval(probe);
    probe.data[i] = orig;
    double fd = (fp - fm) / (2 * step);
    double a = ad.data[i];
    double d = std::abs(a - fd);
    rep.max_abs_dev = std::max(rep.max_abs_dev, d);
    rep.max_rel_dev = std::max(
        rep.max_rel_dev, d / std::max({std::abs(a), std::abs(fd), 1e-6}));
    diff_sq += d * d;
    fd_sq += fd * fd;
    if (std::abs(fd) > 100 * (std::abs(a) + 1) && rep.note.empty())
      rep.note = "suspected non-differentiable point (jump along probe at index " +
                 std::to_string(i) + ")";
  }
  double fd_norm = std::sqrt(fd_sq);
  rep.vec_rel_dev = fd_norm > 0 ? std::sqrt(diff_sq) / fd_norm
                                : (diff_sq > 0 ? 1.0 : 0.0);
  rep.pass = rep.vec_rel_dev <= tol && rep.note.empty();
  return rep;
}

}  // namespace nrb
