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

#ifndef NRB_QUALITY_SCORES_HPP_
#define NRB_QUALITY_SCORES_HPP_

// Robustness scoring: every attack evaluation reduces to four full-reference
// comparisons between the clean image x, the adversarial image x', and their
// reconstructions cx = C(x), cx' = C(x').

#include <string>

#include "nrb/core/array.hpp"
#include "nrb/core/error.hpp"
#include "nrb/quality/metrics.hpp"

namespace nrb {

enum class Metric { Mse, Psnr, MsSsim };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::Mse: return "mse";
    case Metric::Psnr: return "psnr";
    case Metric::MsSsim: return "ms_ssim";
  }
  fail("metric_name: bad metric");
}

inline Metric metric_from_name(const std::string& name) {
  if (name == "mse") return Metric::Mse;
  if (name == "psnr") return Metric::Psnr;
  if (name == "ms_ssim") return Metric::MsSsim;
  fail("unknown metric '", name, "' (want mse|psnr|ms_ssim)");
}

inline double metric_value(Metric m, const NdArray& a, const NdArray& b) {
  switch (m) {
    case Metric::Mse: return mse(a, b);
    case Metric::Psnr: return psnr(a, b);
    case Metric::MsSsim: return ms_ssim(a, b);
  }
  fail("metric_value: bad metric");
}

// The four comparisons behind the two robustness deltas.
struct PairScores {
  double x_xadv = 0.0;      // FR(x, x')
  double cx_cxadv = 0.0;    // FR(C(x), C(x'))
  double x_cx = 0.0;        // FR(x, C(x))
  double xadv_cxadv = 0.0;  // FR(x', C(x'))

  // How much more the codec distorts the perturbation than the input pair
  // suggests: FR(x, x') - FR(C(x), C(x')).
  double delta() const { return x_xadv - cx_cxadv; }
  // Reconstruction quality lost on the adversarial input:
  // FR(x, C(x)) - FR(x', C(x')).
  double small_delta() const { return x_cx - xadv_cxadv; }
};

inline PairScores pair_scores(Metric m, const NdArray& x, const NdArray& x_adv,
                              const NdArray& cx, const NdArray& cx_adv) {
  PairScores s;
  s.x_xadv = metric_value(m, x, x_adv);
  s.cx_cxadv = metric_value(m, cx, cx_adv);
  s.x_cx = metric_value(m, x, cx);
  s.xadv_cxadv = metric_value(m, x_adv, cx_adv);
  return s;
}

// Rate impact of the attack, in bits per pixel.
inline double delta_bpp(double bpp_clean, double bpp_adv) {
  return bpp_adv - bpp_clean;
}

}  // namespace nrb

#endif  // NRB_QUALITY_SCORES_HPP_
