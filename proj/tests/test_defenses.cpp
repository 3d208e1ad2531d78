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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "nrb/codecs/codec.hpp"
#include "nrb/core/random.hpp"
#include "nrb/defenses/defense.hpp"
#include "nrb/quality/metrics.hpp"

using namespace nrb;

namespace {

// Piecewise-linear ramp: smooth enough that bilinear resampling is nearly
// exact away from edges.
NdArray ramp_image(int h, int w, int c) {
  NdArray x({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ci = 0; ci < c; ++ci)
        x.at3(y, xx, ci) = 0.15 + 0.5 * y / (h - 1) + 0.25 * xx / (w - 1) +
                           0.05 * ci;
  return x;
}

double mean_abs_diff(const NdArray& a, const NdArray& b) {
  REQUIRE(a.same_shape(b));
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / a.numel();
}

DefenseTransform single_action(DefenseKind kind, TransformAction a) {
  DefenseTransform tr;
  tr.kind = kind;
  tr.sampled = true;
  tr.actions.push_back(a);
  return tr;
}

}  // namespace

TEST_CASE("defense names round trip") {
  const DefenseKind kinds[] = {
      DefenseKind::Identity,       DefenseKind::Flip,
      DefenseKind::RandomRoll,     DefenseKind::RandomRotate,
      DefenseKind::RandomColorReorder, DefenseKind::RandomEnsemble,
      DefenseKind::SelfEnsemble,   DefenseKind::SmoothingPurifier};
  for (DefenseKind k : kinds) CHECK(defense_from_name(defense_name(k)) == k);
  CHECK(defense_from_name("geometric_self_ensemble") == DefenseKind::SelfEnsemble);
  CHECK_THROWS_AS(defense_from_name("jpeg"), Error);
}

TEST_CASE("flip transform") {
  Rng rng(3);
  NdArray x = rng.uniform_array({7, 9, 3}, 0.0, 1.0);
  DefenseTransform tr = sample_transform(DefenseKind::Flip, 7, 9, 1);
  NdArray y = apply_pre(tr, x);
  CHECK(y.at3(0, 0, 1) == x.at3(6, 8, 1));  // both axes reversed
  CHECK(apply_post(tr, y).data == x.data);
}

TEST_CASE("roll transform round trips for every axis and size") {
  Rng rng(5);
  NdArray x = rng.uniform_array({9, 7, 3}, 0.0, 1.0);
  for (int axis = 0; axis < 2; ++axis) {
    const int ext = axis == 0 ? 9 : 7;
    for (int s = 0; s < ext; ++s) {
      TransformAction a;
      a.kind = TransformAction::Kind::Roll;
      a.src_h = 9;
      a.src_w = 7;
      a.axis = axis;
      a.shift = s;
      DefenseTransform tr = single_action(DefenseKind::RandomRoll, a);
      CHECK(apply_post(tr, apply_pre(tr, x)).data == x.data);
    }
  }

  // Sampled parameters stay in range and cover both axes.
  bool axis0 = false, axis1 = false;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    DefenseTransform tr = sample_transform(DefenseKind::RandomRoll, 9, 7, seed);
    REQUIRE(tr.actions.size() == 1);
    const TransformAction& a = tr.actions[0];
    const int ext = a.axis == 0 ? 9 : 7;
    CHECK(a.shift >= 0);
    CHECK(a.shift < ext);
    (a.axis == 0 ? axis0 : axis1) = true;
  }
  CHECK(axis0);
  CHECK(axis1);
}

TEST_CASE("rotation transform") {
  SECTION("quarter turns are exact, square and non-square") {
    Rng rng(7);
    NdArray sq = rng.uniform_array({32, 32, 3}, 0.0, 1.0);
    NdArray rect = rng.uniform_array({48, 64, 3}, 0.0, 1.0);
    for (int angle : {0, 90, 180, 270}) {
      TransformAction a;
      a.kind = TransformAction::Kind::Rotate;
      a.angle = angle;
      a.src_h = 32;
      a.src_w = 32;
      DefenseTransform tr = single_action(DefenseKind::RandomRotate, a);
      CHECK(apply_post(tr, apply_pre(tr, sq)).data == sq.data);

      a.src_h = 48;
      a.src_w = 64;
      DefenseTransform tr2 = single_action(DefenseKind::RandomRotate, a);
      CHECK(apply_post(tr2, apply_pre(tr2, rect)).data == rect.data);
    }
  }
  SECTION("the preprocess pads to the circumscribing square") {
    NdArray x = ramp_image(48, 64, 3);
    DefenseTransform tr = sample_transform(DefenseKind::RandomRotate, 48, 64, 11);
    NdArray y = apply_pre(tr, x);
    CHECK(y.h() == 80);  // ceil(sqrt(48^2 + 64^2))
    CHECK(y.w() == 80);
  }
  SECTION("arbitrary angles round trip within interpolation error") {
    NdArray x = ramp_image(48, 64, 3);
    for (uint64_t seed = 0; seed < 40; ++seed) {
      DefenseTransform tr =
          sample_transform(DefenseKind::RandomRotate, 48, 64, seed);
      NdArray back = apply_post(tr, apply_pre(tr, x));
      CHECK(mean_abs_diff(back, x) <= 1e-3);
    }
  }
  SECTION("eccentric images are rejected") {
    CHECK_THROWS_AS(sample_transform(DefenseKind::RandomRotate, 4, 64, 1),
                    Error);
  }
}

TEST_CASE("color reorder transform") {
  Rng rng(13);
  NdArray x = rng.uniform_array({6, 5, 3}, 0.0, 1.0);
  int distinct = 0;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    DefenseTransform tr =
        sample_transform(DefenseKind::RandomColorReorder, 6, 5, seed);
    NdArray y = apply_pre(tr, x);
    CHECK(apply_post(tr, y).data == x.data);
    if (y.data != x.data) ++distinct;
  }
  CHECK(distinct > 0);  // non-identity permutations are drawn

  NdArray gray = rng.uniform_array({6, 5, 1}, 0.0, 1.0);
  DefenseTransform tr =
      sample_transform(DefenseKind::RandomColorReorder, 6, 5, 1);
  CHECK_THROWS_AS(apply_pre(tr, gray), Error);
}

TEST_CASE("smoothing purifier") {
  DefenseTransform tr = sample_transform(DefenseKind::SmoothingPurifier, 10, 10, 1);

  NdArray flat({10, 10, 3}, 0.4);
  NdArray smoothed = apply_pre(tr, flat);
  REQUIRE(smoothed.same_shape(flat));
  for (real v : smoothed.data) CHECK(v == Catch::Approx(0.4).margin(1e-12));

  Rng rng(17);
  NdArray noise = rng.uniform_array({32, 32, 1}, 0.2, 0.8);
  NdArray blurred = apply_pre(tr, noise);
  auto variance = [](const NdArray& a) {
    double m = 0;
    for (real v : a.data) m += v;
    m /= a.numel();
    double s = 0;
    for (real v : a.data) s += (v - m) * (v - m);
    return s / a.numel();
  };
  CHECK(variance(blurred) < 0.5 * variance(noise));

  // Purification has no postprocess: values pass through untouched.
  CHECK(apply_post(tr, blurred).data == blurred.data);
}

TEST_CASE("ensemble transform") {
  SECTION("action mix follows the 4:4:1 weights") {
    int rolls = 0, rotates = 0, colors = 0, total = 0;
    for (uint64_t seed = 0; seed < 2000; ++seed) {
      DefenseTransform tr =
          sample_transform(DefenseKind::RandomEnsemble, 64, 64, seed);
      REQUIRE(tr.actions.size() == 10);
      for (const TransformAction& a : tr.actions) {
        ++total;
        if (a.kind == TransformAction::Kind::Roll) ++rolls;
        if (a.kind == TransformAction::Kind::Rotate) ++rotates;
        if (a.kind == TransformAction::Kind::ColorReorder) ++colors;
      }
    }
    CHECK(rolls + rotates + colors == total);
    CHECK(std::abs(double(rolls) / total - 4.0 / 9.0) < 0.02);
    CHECK(std::abs(double(rotates) / total - 4.0 / 9.0) < 0.02);
    CHECK(std::abs(double(colors) / total - 1.0 / 9.0) < 0.02);
  }
  SECTION("same seed gives the same action list") {
    DefenseTransform a = sample_transform(DefenseKind::RandomEnsemble, 48, 40, 21);
    DefenseTransform b = sample_transform(DefenseKind::RandomEnsemble, 48, 40, 21);
    REQUIRE(a.actions.size() == b.actions.size());
    for (size_t i = 0; i < a.actions.size(); ++i) {
      CHECK(a.actions[i].kind == b.actions[i].kind);
      CHECK(a.actions[i].axis == b.actions[i].axis);
      CHECK(a.actions[i].shift == b.actions[i].shift);
      CHECK(a.actions[i].angle == b.actions[i].angle);
      CHECK(a.actions[i].perm == b.actions[i].perm);
    }
  }
  SECTION("composites without rotation round trip exactly") {
    Rng rng(23);
    NdArray x = rng.uniform_array({24, 20, 3}, 0.0, 1.0);
    bool found = false;
    for (uint64_t seed = 0; seed < 5000 && !found; ++seed) {
      DefenseTransform tr =
          sample_transform(DefenseKind::RandomEnsemble, 24, 20, seed);
      bool has_rotate = false;
      for (const TransformAction& a : tr.actions)
        if (a.kind == TransformAction::Kind::Rotate) has_rotate = true;
      if (has_rotate) continue;
      found = true;
      CHECK(apply_post(tr, apply_pre(tr, x)).data == x.data);
    }
    REQUIRE(found);  // P(no rotation) ~ (5/9)^10 per draw
  }
}

TEST_CASE("geometric self-ensemble selection") {
  ToyCodec codec({CodecFamily::Factorized, 4, 0.05}, 61);
  Rng rng(29);
  NdArray x = rng.uniform_array({12, 16, 3}, 0.1, 0.9);

  // Recompute all 8 candidates and their distances independently.
  std::vector<double> mses;
  std::vector<NdArray> recs;
  for (int v = 0; v < 8; ++v) {
    Tape t;
    CodecGraph g = codec.forward_graph(t, detail::dihedral_pre(t.constant(x), v),
                                       QuantMode::Ste, 99);
    recs.push_back(t.val(detail::dihedral_post(g.reconstruction, v)));
    mses.push_back(mse(recs.back(), x));
  }
  double best = mses[0];
  int best_id = 0;
  for (int v = 1; v < 8; ++v)
    if (mses[static_cast<size_t>(v)] < best) {
      best = mses[static_cast<size_t>(v)];
      best_id = v;
    }

  SelfEnsembleChoice c = select_self_ensemble_variant(codec, x, QuantMode::Ste, 99);
  CHECK(c.variant_id == best_id);
  CHECK(c.mse_to_input == best);          // equals the explicit min exactly
  CHECK(c.mse_to_input <= mses[0]);       // never worse than the identity variant

  DefendedCodec defended(codec, DefenseKind::SelfEnsemble, 0);
  CodecResult r = defended.forward(x, QuantMode::Ste, 99);
  CHECK(r.reconstruction.data == recs[static_cast<size_t>(best_id)].data);

  // All-tie case: every candidate of the identity codec reconstructs x
  // exactly, so the lowest variant id wins.
  IdentityCodec id_codec;
  SelfEnsembleChoice tie = select_self_ensemble_variant(id_codec, x, QuantMode::Ste, 1);
  CHECK(tie.variant_id == 0);
  CHECK(tie.mse_to_input == 0.0);
  DefendedCodec id_defended(id_codec, DefenseKind::SelfEnsemble, 0);
  CHECK(id_defended.forward(x, QuantMode::Ste, 1).reconstruction.data == x.data);
}

TEST_CASE("defended codec wrapper") {
  ToyCodec codec({CodecFamily::Factorized, 4, 0.05}, 67);
  Rng rng(31);
  NdArray x = rng.uniform_array({16, 16, 3}, 0.1, 0.9);

  SECTION("identity transform reduces to the bare codec") {
    DefendedCodec defended(codec, DefenseKind::Identity, 7);
    CodecResult a = defended.forward(x, QuantMode::Ste, 99);
    CodecResult b = codec.forward(x, QuantMode::Ste, 99);
    CHECK(a.reconstruction.data == b.reconstruction.data);
    CHECK(a.bpp == b.bpp);
    CHECK(a.bits == b.bits);
  }
  SECTION("flip around an identity codec is a no-op pipeline") {
    IdentityCodec id_codec;
    DefendedCodec defended(id_codec, DefenseKind::Flip, 3);
    CHECK(defended.forward(x, QuantMode::Ste, 1).reconstruction.data == x.data);
    CHECK(defended.name() == "identity+flip");
  }
  SECTION("randomized transforms resample per call, reproducibly") {
    DefendedCodec defended(codec, DefenseKind::RandomRoll, 11);
    CodecResult r1 = defended.forward(x, QuantMode::Ste, 99);
    CodecResult r2 = defended.forward(x, QuantMode::Ste, 99);
    CHECK(defended.calls() == 2);
    CHECK(r1.reconstruction.data != r2.reconstruction.data);  // fresh draw

    DefendedCodec replay(codec, DefenseKind::RandomRoll, 11);
    CodecResult s1 = replay.forward(x, QuantMode::Ste, 99);
    CHECK(s1.reconstruction.data == r1.reconstruction.data);
  }
  SECTION("rate is measured inside the transform") {
    NdArray rect = ramp_image(48, 64, 3);
    DefendedCodec defended(codec, DefenseKind::RandomRotate, 13);
    CodecResult r = defended.forward(rect, QuantMode::Ste, 99);
    REQUIRE(r.bits > 0.0);
    // 48x64 pads to an 80x80 square; the rate is per padded pixel.
    CHECK(r.bits / r.bpp == Catch::Approx(80.0 * 80.0).epsilon(1e-9));
    CHECK(r.reconstruction.same_shape(rect));
  }
  SECTION("gradients flow through the defended pipeline") {
    for (DefenseKind kind : {DefenseKind::Flip, DefenseKind::SmoothingPurifier,
                             DefenseKind::SelfEnsemble}) {
      DefendedCodec defended(codec, kind, 1);
      Tape t;
      NdArray xin = x;
      xin.requires_grad = true;
      Var leaf = t.leaf(std::move(xin));
      CodecGraph g = defended.forward_graph(t, leaf, QuantMode::Ste, 5);
      Tape::GradMap grads = t.backward(sum(g.reconstruction));
      const NdArray& gx = grads.at(leaf);
      REQUIRE(gx.all_finite());
      CHECK(l2_norm(gx) > 0.0);
    }
  }
}

TEST_CASE("unsampled transforms are rejected") {
  Rng rng(37);
  NdArray x = rng.uniform_array({8, 8, 3}, 0.0, 1.0);
  DefenseTransform tr;
  tr.kind = DefenseKind::RandomRoll;  // sampled flag left unset
  CHECK_THROWS_AS(apply_pre(tr, x), Error);
  CHECK_THROWS_AS(apply_post(tr, x), Error);
  CHECK_THROWS_AS(sample_transform(DefenseKind::SelfEnsemble, 8, 8, 1), Error);
}
