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

#ifndef NRB_CODECS_TRAIN_HPP_
#define NRB_CODECS_TRAIN_HPP_

// Rate-distortion training of a ToyCodec with Adam on
//   loss = lambda * bpp + MSE(reconstruction, input)
// in noise quantization mode (one image per step). Parameters are snapped
// to f32 afterwards so a saved codec reproduces the in-memory one exactly.

#include <cmath>
#include <vector>

#include "nrb/codecs/codec.hpp"
#include "nrb/codecs/params_io.hpp"
#include "nrb/core/error.hpp"
#include "nrb/core/ops.hpp"
#include "nrb/core/random.hpp"
#include "nrb/core/tape.hpp"

namespace nrb {

struct TrainConfig {
  int steps = 300;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> loss_curve;  // one entry per step
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

inline TrainReport train_codec(ToyCodec& codec, const std::vector<NdArray>& images,
                               const TrainConfig& cfg) {
  check(!images.empty(), "train_codec: no training images");
  check(cfg.steps >= 1, "train_codec: steps must be positive");

  const size_t n_tensors = codec.params().size();
  std::vector<NdArray> m1(n_tensors), m2(n_tensors);
  for (size_t i = 0; i < n_tensors; ++i) {
    m1[i] = NdArray(codec.params()[i].value.shape);
    m2[i] = NdArray(codec.params()[i].value.shape);
  }

  Rng pick(mix_seed(cfg.seed, "train-pick"));
  TrainReport rep;
  rep.loss_curve.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    const NdArray& img = images[static_cast<size_t>(
        pick.uniform_int(0, static_cast<int>(images.size()) - 1))];

    Tape t;
    std::vector<Var> leaves;
    Var x = t.constant(img);
    CodecGraph g = codec.forward_graph_trainable(
        t, x, QuantMode::Noise, mix_seed(cfg.seed, static_cast<uint64_t>(step)),
        &leaves);
    Var distortion = mean(square(sub(g.reconstruction, x)));
    Var loss = add(scale(g.bpp, codec.spec().lambda), distortion);

    const double lv = t.val(loss).data[0];
    check(std::isfinite(lv), "training diverged: non-finite loss at step ", step);
    if (step == 0) rep.initial_loss = lv;
    check(lv < 1e6 * (std::abs(rep.initial_loss) + 1.0),
          "training diverged: loss ", lv, " at step ", step);
    rep.loss_curve.push_back(lv);

    Tape::GradMap grads = t.backward(loss);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step + 1);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step + 1);
    for (size_t i = 0; i < n_tensors; ++i) {
      const NdArray& gr = grads.at(leaves[i]);
      NdArray& p = codec.mutable_params()[i].value;
      for (size_t j = 0; j < p.data.size(); ++j) {
        const double gj = gr.data[j];
        m1[i].data[j] = cfg.beta1 * m1[i].data[j] + (1.0 - cfg.beta1) * gj;
        m2[i].data[j] = cfg.beta2 * m2[i].data[j] + (1.0 - cfg.beta2) * gj * gj;
        p.data[j] -= cfg.lr * (m1[i].data[j] / bc1) /
                     (std::sqrt(m2[i].data[j] / bc2) + cfg.eps);
      }
    }
  }

  rep.final_loss = rep.loss_curve.back();
  snap_params_to_f32(codec);
  return rep;
}

}  // namespace nrb

#endif  // NRB_CODECS_TRAIN_HPP_
