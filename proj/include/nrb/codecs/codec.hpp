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

#ifndef NRB_CODECS_CODEC_HPP_
#define NRB_CODECS_CODEC_HPP_

// Small learned transform-coding codecs built on the tape, so attacks can
// differentiate straight through analysis, quantization proxy, rate model,
// and synthesis. Two families: a fully factorized entropy model and a
// hyperprior-style one whose scales are predicted from a second latent.

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nrb/core/array.hpp"
#include "nrb/core/diag.hpp"
#include "nrb/core/error.hpp"
#include "nrb/core/ops.hpp"
#include "nrb/core/random.hpp"
#include "nrb/core/tape.hpp"

namespace nrb {

enum class CodecFamily { Factorized, Hyperprior };

inline const char* family_name(CodecFamily f) {
  return f == CodecFamily::Factorized ? "factorized" : "hyperprior";
}

inline CodecFamily family_from_name(const std::string& s) {
  if (s == "factorized") return CodecFamily::Factorized;
  if (s == "hyperprior") return CodecFamily::Hyperprior;
  fail("unknown codec family '", s, "' (want factorized|hyperprior)");
}

// How the latent is discretized in the forward pass.
//  Noise: additive uniform noise in [-0.5, 0.5), the training-time proxy.
//  Ste:   round, with the gradient passed through unchanged.
//  Hard:  round, gradient stops (deployment behavior).
enum class QuantMode { Noise, Ste, Hard };

struct CodecSpec {
  CodecFamily family = CodecFamily::Factorized;
  int latent_channels = 8;
  double lambda = 0.05;  // rate weight of the training objective

  int hidden_channels() const { return 2 * latent_channels; }
  static constexpr int kDownsample = 4;  // analysis stride product
};

// ---------------------------------------------------------------------------
// Rate model node.
// ---------------------------------------------------------------------------

// Bits under a logistic distribution integrated over the width-1 bin around
// each value: bits = -log2(sigma((y+.5)/s) - sigma((y-.5)/s)), s = exp(ls).
// One fused node: composing exp/log primitives overflows for far-tail
// values, while this forward saturates cleanly and then floors the
// probability at 1e-9 (diag().likelihood_floored counts floored entries,
// which get zero gradient). log_scale is either a per-channel vector or a
// full map matching y.
inline Var box_bits(Var y, Var log_scale) {
  constexpr real kPFloor = 1e-9;
  Tape& t = *y.tape;
  const NdArray& yv = t.val(y);
  const NdArray& lv = t.val(log_scale);
  const bool per_channel = lv.shape != yv.shape;
  if (per_channel)
    check(lv.rank() == 1 && yv.rank() == 3 && lv.dim(0) == yv.c(),
          "box_bits: log_scale must match y or be a per-channel vector, got ",
          shape_str(lv.shape), " vs ", shape_str(yv.shape));
  const int ch = per_channel ? yv.c() : 0;

  NdArray out(yv.shape);
  uint64_t floored = 0;
  for (size_t i = 0; i < yv.data.size(); ++i) {
    const real ls = per_channel ? lv.data[i % ch] : lv.data[i];
    const real inv_s = std::exp(-ls);
    const real tp = std::tanh(0.5 * (yv.data[i] + 0.5) * inv_s);
    const real tm = std::tanh(0.5 * (yv.data[i] - 0.5) * inv_s);
    const real p = 0.5 * (tp - tm);
    if (p < kPFloor) ++floored;
    out.data[i] = -std::log2(std::max(p, kPFloor));
  }
  if (floored) diag().likelihood_floored += floored;

  return t.node(std::move(out), {y, log_scale},
                [y, log_scale, per_channel, ch](Tape& tp_, Var self) {
    const NdArray& g = tp_.grad_ref(self);
    const NdArray& yv2 = tp_.val(y);
    const NdArray& lv2 = tp_.val(log_scale);
    const bool need_y = tp_.needs_grad(y);
    const bool need_l = tp_.needs_grad(log_scale);
    NdArray gy = need_y ? NdArray(yv2.shape) : NdArray({1});
    NdArray gl = need_l ? NdArray(lv2.shape) : NdArray({1});
    constexpr real kInvLn2 = 1.4426950408889634;
    for (size_t i = 0; i < yv2.data.size(); ++i) {
      const real ls = per_channel ? lv2.data[i % ch] : lv2.data[i];
      const real inv_s = std::exp(-ls);
      const real up = (yv2.data[i] + 0.5) * inv_s;
      const real um = (yv2.data[i] - 0.5) * inv_s;
      const real tp2 = std::tanh(0.5 * up);
      const real tm2 = std::tanh(0.5 * um);
      const real p = 0.5 * (tp2 - tm2);
      if (p < kPFloor) continue;  // floored: constant output, zero gradient
      const real dp = -kInvLn2 / p * g.data[i];  // dbits/dp * upstream
      const real sp = 0.25 * (1 - tp2 * tp2);    // logistic pdf at up
      const real sm = 0.25 * (1 - tm2 * tm2);
      if (need_y) gy.data[i] = dp * (sp - sm) * inv_s;
      if (need_l) {
        const real dls = dp * (-sp * up + sm * um);
        gl.data[per_channel ? i % ch : i] += dls;
      }
    }
    if (need_y) tp_.add_grad(y, gy);
    if (need_l) tp_.add_grad(log_scale, gl);
  });
}

// Squashes an unbounded map into [-3, 3] with slope 1.5 at zero; used to
// keep hyperprior scale offsets from running away early in training.
inline Var bounded_offset(Var raw) {
  return scale(shift(clamp01(shift(scale(raw, 0.25), 0.5)), -0.5), 6.0);
}

// ---------------------------------------------------------------------------
// Codec interface.
// ---------------------------------------------------------------------------

struct CodecGraph {
  Var reconstruction;  // same extent as the input, clamped to [0,1]
  Var bpp;             // scalar: total bits / source pixels
  Var bits;            // scalar: total bits
  Var latent;          // quantized image latent (tests, diagnostics)
};

struct CodecResult {
  NdArray reconstruction;
  double bpp = 0.0;
  double bits = 0.0;
};

class ICodec {
 public:
  virtual ~ICodec() = default;
  virtual std::string name() const = 0;
  virtual size_t param_count() const = 0;
  // call_seed fixes the noise draw in Noise mode; Ste/Hard ignore it.
  virtual CodecGraph forward_graph(Tape& t, Var x, QuantMode mode,
                                   uint64_t call_seed) const = 0;

  CodecResult forward(const NdArray& x, QuantMode mode, uint64_t call_seed) const {
    Tape t;
    CodecGraph g = forward_graph(t, t.constant(x), mode, call_seed);
    CodecResult r;
    r.reconstruction = t.val(g.reconstruction);
    r.bpp = t.val(g.bpp).data[0];
    r.bits = t.val(g.bits).data[0];
    return r;
  }
};

// ---------------------------------------------------------------------------
// The two toy families.
// ---------------------------------------------------------------------------

struct ParamTensor {
  std::string name;
  NdArray value;
};

namespace detail {

struct ConvDef {
  std::string wname, bname;
  int cin = 0, cout = 0, stride = 1;
  bool transposed = false;
  bool activated = true;   // leaky(0.2) after the layer
  bool zero_init = false;  // last hyper-decoder layer starts silent
  real bias_init = 0.0;
};

struct ArchDefs {
  std::vector<ConvDef> enc, dec, henc, hdec;
  // entropy parameter tensors: name -> channel count
  std::vector<std::pair<std::string, int>> scales;
};

inline ArchDefs arch_defs(const CodecSpec& s) {
  const int h = s.hidden_channels(), l = s.latent_channels;
  auto conv = [](std::string base, int i, int ci, int co, int st, bool tr,
                 bool act) {
    ConvDef d;
    d.wname = base + "." + std::to_string(i) + ".w";
    d.bname = base + "." + std::to_string(i) + ".b";
    d.cin = ci;
    d.cout = co;
    d.stride = st;
    d.transposed = tr;
    d.activated = act;
    return d;
  };
  ArchDefs a;
  a.enc = {conv("enc", 0, 3, h, 2, false, true),
           conv("enc", 1, h, h, 1, false, true),
           conv("enc", 2, h, h, 2, false, true),
           conv("enc", 3, h, l, 1, false, false)};
  a.dec = {conv("dec", 0, l, h, 1, true, true),
           conv("dec", 1, h, h, 2, true, true),
           conv("dec", 2, h, h, 1, true, true),
           conv("dec", 3, h, 3, 2, true, false)};
  a.dec.back().bias_init = 0.5;  // start the synthesis at mid-gray
  a.scales.emplace_back("prior.log_scale", l);
  if (s.family == CodecFamily::Hyperprior) {
    a.henc = {conv("henc", 0, l, l, 2, false, true),
              conv("henc", 1, l, l, 1, false, false)};
    a.hdec = {conv("hdec", 0, l, l, 1, true, true),
              conv("hdec", 1, l, l, 2, true, false)};
    a.hdec.back().zero_init = true;
    a.scales.emplace_back("hyper.log_scale", l);
  }
  return a;
}

}  // namespace detail

// Every tensor the codec owns, in canonical order, with its shape. Used for
// initialization and for validating loaded parameter files.
inline std::vector<std::pair<std::string, std::vector<int>>> tensor_layout(
    const CodecSpec& s) {
  detail::ArchDefs a = detail::arch_defs(s);
  std::vector<std::pair<std::string, std::vector<int>>> out;
  auto push = [&out](const std::vector<detail::ConvDef>& block) {
    for (const detail::ConvDef& d : block) {
      out.emplace_back(d.wname, std::vector<int>{3, 3, d.cin, d.cout});
      out.emplace_back(d.bname, std::vector<int>{d.cout});
    }
  };
  push(a.enc);
  push(a.dec);
  push(a.henc);
  push(a.hdec);
  for (const auto& [name, ch] : a.scales)
    out.emplace_back(name, std::vector<int>{ch});
  return out;
}

class ToyCodec : public ICodec {
 public:
  // Fresh random initialization.
  ToyCodec(const CodecSpec& spec, uint64_t init_seed) : spec_(spec) {
    detail::ArchDefs a = detail::arch_defs(spec);
    Rng rng(mix_seed(init_seed, "codec-init"));
    auto init_block = [&](const std::vector<detail::ConvDef>& block) {
      for (const detail::ConvDef& d : block) {
        NdArray w({3, 3, d.cin, d.cout});
        if (!d.zero_init) {
          const real std = std::sqrt(2.0 / (9.0 * d.cin));
          w = rng.normal_array(w.shape, 0.0, std);
        }
        params_.push_back({d.wname, std::move(w)});
        params_.push_back({d.bname, NdArray({d.cout}, d.zero_init ? 0.0 : d.bias_init)});
      }
    };
    init_block(a.enc);
    init_block(a.dec);
    init_block(a.henc);
    init_block(a.hdec);
    for (const auto& [name, ch] : a.scales)
      params_.push_back({name, NdArray({ch}, 0.0)});
    build_index();
  }

  // From an explicit tensor set (e.g. a parameter file). Order-insensitive;
  // requires exactly the tensors of tensor_layout(spec) with exact shapes.
  ToyCodec(const CodecSpec& spec, std::vector<ParamTensor> tensors) : spec_(spec) {
    auto layout = tensor_layout(spec);
    check(tensors.size() == layout.size(), "codec parameters: expected ",
          layout.size(), " tensors, got ", tensors.size());
    std::unordered_map<std::string, NdArray*> by_name;
    for (ParamTensor& p : tensors) by_name[p.name] = &p.value;
    for (const auto& [name, shape] : layout) {
      auto it = by_name.find(name);
      check(it != by_name.end(), "codec parameters: missing tensor '", name, "'");
      check(it->second->shape == shape, "codec parameters: tensor '", name,
            "' has shape ", shape_str(it->second->shape), ", expected ",
            shape_str(shape));
      params_.push_back({name, std::move(*it->second)});
    }
    build_index();
  }

  const CodecSpec& spec() const { return spec_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  std::vector<ParamTensor>& mutable_params() { return params_; }

  std::string name() const override {
    std::ostringstream os;
    os << family_name(spec_.family) << "-l" << spec_.lambda;
    return os.str();
  }

  size_t param_count() const override {
    size_t n = 0;
    for (const ParamTensor& p : params_) n += p.value.numel();
    return n;
  }

  CodecGraph forward_graph(Tape& t, Var x, QuantMode mode,
                           uint64_t call_seed) const override {
    std::vector<Var> pv(params_.size());
    for (size_t i = 0; i < params_.size(); ++i)
      pv[i] = t.constant(params_[i].value);
    return build(t, x, mode, call_seed, pv);
  }

  // Same graph with parameters as gradient leaves; used by the trainer.
  CodecGraph forward_graph_trainable(Tape& t, Var x, QuantMode mode,
                                     uint64_t call_seed,
                                     std::vector<Var>* leaves) const {
    std::vector<Var> pv(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      NdArray v = params_[i].value;
      v.requires_grad = true;
      pv[i] = t.leaf(std::move(v));
    }
    *leaves = pv;
    return build(t, x, mode, call_seed, pv);
  }

 private:
  void build_index() {
    for (size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
  }
  Var p(const std::vector<Var>& pv, const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "codec: no tensor named '", name, "'");
    return pv[it->second];
  }

  static Var quantize(Var y, QuantMode mode, Rng& noise_rng) {
    switch (mode) {
      case QuantMode::Noise: return add_uniform_noise(y, noise_rng);
      case QuantMode::Ste: return round_op(y, /*ste=*/true);
      case QuantMode::Hard: return round_op(y, /*ste=*/false);
    }
    fail("quantize: bad mode");
  }

  Var run_block(Var x, const std::vector<detail::ConvDef>& block,
                const std::vector<Var>& pv,
                const std::vector<std::pair<int, int>>* out_dims = nullptr) const {
    for (size_t i = 0; i < block.size(); ++i) {
      const detail::ConvDef& d = block[i];
      Var w = p(pv, d.wname), b = p(pv, d.bname);
      if (d.transposed) {
        const auto [oh, ow] = (*out_dims)[i];
        x = tconv2d(x, w, b, d.stride, 1, oh, ow);
      } else {
        x = conv2d(x, w, b, d.stride, 1);
      }
      if (d.activated) x = leaky(x, 0.2);
    }
    return x;
  }

  CodecGraph build(Tape& t, Var x, QuantMode mode, uint64_t call_seed,
                   const std::vector<Var>& pv) const {
    const NdArray& xv = t.val(x);
    check(xv.rank() == 3 && xv.c() == 3, "codec: want an (H,W,3) image, got ",
          shape_str(xv.shape));
    const int src_h = xv.h(), src_w = xv.w();
    const int f = CodecSpec::kDownsample;
    check(src_h >= f && src_w >= f, "codec: image must be at least ", f, "x", f);

    const int pad_h = (f - src_h % f) % f;
    const int pad_w = (f - src_w % f) % f;
    Var xin = (pad_h || pad_w) ? pad2d(x, 0, pad_h, 0, pad_w, PadMode::Reflect) : x;
    const int ph = src_h + pad_h, pw = src_w + pad_w;

    detail::ArchDefs a = detail::arch_defs(spec_);
    Var y = run_block(xin, a.enc, pv);
    const int yh = ph / f, yw = pw / f;

    Rng noise_rng(mix_seed(call_seed, "quant-noise"));
    Var yq = quantize(y, mode, noise_rng);

    Var bits_total;
    if (spec_.family == CodecFamily::Factorized) {
      bits_total = sum(box_bits(yq, p(pv, "prior.log_scale")));
    } else {
      Var z = run_block(y, a.henc, pv);
      Var zq = quantize(z, mode, noise_rng);
      const NdArray& zv = t.val(zq);
      const std::vector<std::pair<int, int>> hdec_dims = {
          {zv.h(), zv.w()}, {yh, yw}};
      Var raw = run_block(zq, a.hdec, pv, &hdec_dims);
      Var ls_map = add(bounded_offset(raw), p(pv, "prior.log_scale"));
      bits_total = add(sum(box_bits(yq, ls_map)),
                       sum(box_bits(zq, p(pv, "hyper.log_scale"))));
    }

    const std::vector<std::pair<int, int>> dec_dims = {
        {yh, yw}, {2 * yh, 2 * yw}, {2 * yh, 2 * yw}, {ph, pw}};
    Var rec = clamp01(run_block(yq, a.dec, pv, &dec_dims));
    if (pad_h || pad_w) rec = crop2d(rec, 0, 0, src_h, src_w);

    CodecGraph g;
    g.reconstruction = rec;
    g.bits = bits_total;
    g.bpp = scale(bits_total, 1.0 / (static_cast<double>(src_h) * src_w));
    g.latent = yq;
    return g;
  }

  CodecSpec spec_;
  std::vector<ParamTensor> params_;
  std::unordered_map<std::string, size_t> index_;
};

// Pass-through control codec: reconstruction equals the input and the rate
// is zero. Useful as a null hypothesis (perturbations are never amplified).
class IdentityCodec : public ICodec {
 public:
  std::string name() const override { return "identity"; }
  size_t param_count() const override { return 0; }
  CodecGraph forward_graph(Tape& t, Var x, QuantMode,
                           uint64_t) const override {
    CodecGraph g;
    g.reconstruction = x;
    g.bits = t.constant(NdArray::scalar(0.0));
    g.bpp = t.constant(NdArray::scalar(0.0));
    g.latent = x;
    return g;
  }
};

}  // namespace nrb

#endif  // NRB_CODECS_CODEC_HPP_
