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

#ifndef NRB_ATTACKS_OBJECTIVE_HPP_
#define NRB_ATTACKS_OBJECTIVE_HPP_

// Attack objectives. All are phrased as maximization targets over the
// adversarial input x'; quantities that depend only on the clean input
// (the source x and its reconstruction C(x)) are precomputed once and
// enter the graph as constants.

#include <functional>
#include <string>

#include "nrb/codecs/codec.hpp"
#include "nrb/core/array.hpp"
#include "nrb/core/error.hpp"
#include "nrb/core/ops.hpp"
#include "nrb/core/tape.hpp"
#include "nrb/quality/metrics.hpp"

namespace nrb {

enum class ObjectiveKind {
  ReconstructionL2,        // ||C(x') - x'||_2
  FtdaL2,                  // ||C(x') - C(x)||_2, C(x) constant
  AddedNoises,             // ||(C(x') - C(x)) - (x' - x)||_2
  ReconstructionMsSsim,    // 1 - ms_ssim(x', C(x'))
  FtdaMsSsim,              // 1 - ms_ssim(C(x), C(x'))
  BppIncrease,             // bpp(x')
  SourceReconstructionL2,  // ||C(x') - x||_2, x constant
};

struct Objective {
  ObjectiveKind kind = ObjectiveKind::ReconstructionL2;
  // Restrict image-space distances to the BT.601 Y channel. The structural
  // similarity objectives already score luma and the rate objective has no
  // image-space distance, so the flag only changes the L2 kinds.
  bool y_only = false;
};

inline const char* objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::ReconstructionL2: return "rec_l2";
    case ObjectiveKind::FtdaL2: return "ftda_l2";
    case ObjectiveKind::AddedNoises: return "added_noises";
    case ObjectiveKind::ReconstructionMsSsim: return "rec_msssim";
    case ObjectiveKind::FtdaMsSsim: return "ftda_msssim";
    case ObjectiveKind::BppIncrease: return "bpp_increase";
    case ObjectiveKind::SourceReconstructionL2: return "src_rec_l2";
  }
  fail("objective_kind_name: bad kind");
}

inline std::string objective_name(const Objective& o) {
  std::string s = objective_kind_name(o.kind);
  if (o.y_only && o.kind != ObjectiveKind::BppIncrease) s += "_y";
  return s;
}

inline Objective objective_from_name(std::string name) {
  Objective o;
  if (name.size() > 2 && name.compare(name.size() - 2, 2, "_y") == 0) {
    o.y_only = true;
    name.resize(name.size() - 2);
  }
  const ObjectiveKind kinds[] = {
      ObjectiveKind::ReconstructionL2,    ObjectiveKind::FtdaL2,
      ObjectiveKind::AddedNoises,         ObjectiveKind::ReconstructionMsSsim,
      ObjectiveKind::FtdaMsSsim,          ObjectiveKind::BppIncrease,
      ObjectiveKind::SourceReconstructionL2};
  for (ObjectiveKind k : kinds)
    if (name == objective_kind_name(k)) {
      o.kind = k;
      if (k == ObjectiveKind::BppIncrease) o.y_only = false;
      return o;
    }
  fail("unknown objective '", name, "'");
}

// Builds the scalar objective for an adversarial candidate. The returned
// function may be called many times (once per attack step); each call runs
// the codec forward on the given tape.
using ObjectiveGraphFn = std::function<Var(Tape&, Var)>;
// Plain evaluation for query-based attacks.
using ObjectiveEvalFn = std::function<double(const NdArray&)>;

inline Var l2_distance_graph(Var a, Var b) {
  return sqrt0(sum(square(sub(a, b))));
}

// obj + codec + clean source -> reusable graph builder. `mode` selects the
// quantization path attacks differentiate through (Ste for white-box,
// Hard for query-based evaluation); `call_seed` only matters in Noise mode.
inline ObjectiveGraphFn make_objective_graph(const Objective& obj,
                                             const ICodec& codec,
                                             const NdArray& x_clean,
                                             QuantMode mode,
                                             uint64_t call_seed = 0) {
  const bool needs_cx = obj.kind == ObjectiveKind::FtdaL2 ||
                        obj.kind == ObjectiveKind::AddedNoises ||
                        obj.kind == ObjectiveKind::FtdaMsSsim;
  NdArray cx;
  if (needs_cx) cx = codec.forward(x_clean, mode, call_seed).reconstruction;

  const bool y = obj.y_only;
  NdArray x_ref = y ? luminance(x_clean) : x_clean;
  NdArray cx_ref = (needs_cx && y) ? luminance(cx) : cx;

  const ICodec* c = &codec;
  return [obj, c, mode, call_seed, y, x_ref = std::move(x_ref),
          cx_ref = std::move(cx_ref)](Tape& t, Var x_adv) -> Var {
    auto proj = [&](Var v) { return y ? luminance_graph(t, v) : v; };
    switch (obj.kind) {
      case ObjectiveKind::BppIncrease:
        return c->forward_graph(t, x_adv, mode, call_seed).bpp;
      case ObjectiveKind::ReconstructionL2: {
        Var rec = c->forward_graph(t, x_adv, mode, call_seed).reconstruction;
        return l2_distance_graph(proj(rec), proj(x_adv));
      }
      case ObjectiveKind::FtdaL2: {
        Var rec = c->forward_graph(t, x_adv, mode, call_seed).reconstruction;
        return l2_distance_graph(proj(rec), t.constant(cx_ref));
      }
      case ObjectiveKind::AddedNoises: {
        Var rec = c->forward_graph(t, x_adv, mode, call_seed).reconstruction;
        Var rec_shift = sub(proj(rec), t.constant(cx_ref));
        Var input_shift = sub(proj(x_adv), t.constant(x_ref));
        return l2_distance_graph(rec_shift, input_shift);
      }
      case ObjectiveKind::ReconstructionMsSsim: {
        Var rec = c->forward_graph(t, x_adv, mode, call_seed).reconstruction;
        return shift(scale(ms_ssim_graph(t, x_adv, rec), -1.0), 1.0);
      }
      case ObjectiveKind::FtdaMsSsim: {
        Var rec = c->forward_graph(t, x_adv, mode, call_seed).reconstruction;
        return shift(scale(ms_ssim_graph(t, t.constant(cx_ref), rec), -1.0), 1.0);
      }
      case ObjectiveKind::SourceReconstructionL2: {
        Var rec = c->forward_graph(t, x_adv, mode, call_seed).reconstruction;
        return l2_distance_graph(proj(rec), t.constant(x_ref));
      }
    }
    fail("objective: bad kind");
  };
}

inline ObjectiveEvalFn make_objective_eval(const Objective& obj,
                                           const ICodec& codec,
                                           const NdArray& x_clean,
                                           QuantMode mode,
                                           uint64_t call_seed = 0) {
  ObjectiveGraphFn g = make_objective_graph(obj, codec, x_clean, mode, call_seed);
  return [g = std::move(g)](const NdArray& cand) {
    Tape t;
    return t.val(g(t, t.constant(cand))).data[0];
  };
}

// One-off evaluation, used for records and trace-consistency checks.
inline double objective_value(const Objective& obj, const ICodec& codec,
                              const NdArray& x_clean, const NdArray& x_adv,
                              QuantMode mode = QuantMode::Ste,
                              uint64_t call_seed = 0) {
  return make_objective_eval(obj, codec, x_clean, mode, call_seed)(x_adv);
}

}  // namespace nrb

#endif  // NRB_ATTACKS_OBJECTIVE_HPP_
