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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "nrb/core/check.hpp"
#include "nrb/core/ops.hpp"

using namespace nrb;

namespace {

NdArray random_array(std::vector<int> shape, uint64_t seed, real lo = -1, real hi = 1) {
  Rng rng(seed);
  return rng.uniform_array(std::move(shape), lo, hi);
}

// Gradient of sum(op(x) * r) wrt x via one tape pass.
NdArray grad_of(const ScalarGraphFn& f, const NdArray& x) {
  Tape t;
  NdArray p = x;
  p.requires_grad = true;
  Var leaf = t.leaf(std::move(p));
  Var out = f(t, leaf);
  auto g = t.backward(out);
  return g.at(leaf);
}

}  // namespace

TEST_CASE("add forward and backward on hand values") {
  Tape t;
  NdArray a = NdArray::from({2, 2}, {1, 2, 3, 4});
  a.requires_grad = true;
  NdArray b = NdArray::from({2, 2}, {10, 20, 30, 40});
  b.requires_grad = true;
  Var va = t.leaf(a), vb = t.leaf(b);
  Var s = sum(mul(add(va, vb), t.constant(NdArray::from({2, 2}, {1, 1, 2, 2}))));
  CHECK(t.val(s).data[0] == Catch::Approx(11 + 22 + 2 * 33 + 2 * 44));
  auto g = t.backward(s);
  CHECK(g.at(va).data == std::vector<real>{1, 1, 2, 2});
  CHECK(g.at(vb).data == std::vector<real>{1, 1, 2, 2});
}

TEST_CASE("broadcasting: channel vector and scalar operands") {
  Tape t;
  NdArray x = NdArray::from({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  x.requires_grad = true;
  NdArray v = NdArray::from({3}, {10, 20, 30});
  v.requires_grad = true;
  Var vx = t.leaf(x), vv = t.leaf(v);
  Var out = add(vx, vv);
  CHECK(t.val(out).data == std::vector<real>{11, 22, 33, 14, 25, 36});
  auto g = t.backward(sum(out));
  CHECK(g.at(vv).data == std::vector<real>{2, 2, 2});  // reduced over positions

  Tape t2;
  NdArray y = NdArray::from({2}, {3, 4});
  y.requires_grad = true;
  Var vy = t2.leaf(y);
  Var scaled = mul(vy, t2.constant(NdArray::scalar(5)));
  CHECK(t2.val(scaled).data == std::vector<real>{15, 20});

  Tape t3;
  NdArray bad = NdArray::from({2}, {1, 2});
  CHECK_THROWS_AS(add(t3.leaf(NdArray::from({3}, {1, 2, 3})), t3.leaf(bad)), Error);
}

TEST_CASE("round with straight-through estimator") {
  NdArray x = random_array({4, 4, 2}, 7, -3, 3);
  // STE: forward rounds, backward is exactly identity.
  Tape t;
  NdArray p = x;
  p.requires_grad = true;
  Var leaf = t.leaf(std::move(p));
  Var r = round_op(leaf, /*ste=*/true);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(t.val(r).data[static_cast<size_t>(i)] ==
          std::nearbyint(x.data[static_cast<size_t>(i)]));
  NdArray weights = random_array({4, 4, 2}, 8);
  auto g = t.backward(sum(mul(r, t.constant(weights))));
  CHECK(g.at(leaf).data == weights.data);

  // Hard mode: gradient flow stops entirely.
  Tape t2;
  NdArray p2 = x;
  p2.requires_grad = true;
  Var leaf2 = t2.leaf(std::move(p2));
  Var r2 = round_op(leaf2, /*ste=*/false);
  auto g2 = t2.backward(sum(mul(r2, t2.constant(weights))));
  CHECK(g2.at(leaf2).data == std::vector<real>(32, 0.0));
}

TEST_CASE("clamp01 gradient mask is exact") {
  Tape t;
  NdArray x = NdArray::from({5}, {-0.5, 0.0, 0.5, 1.0, 1.5});
  x.requires_grad = true;
  Var leaf = t.leaf(std::move(x));
  auto g = t.backward(sum(clamp01(leaf)));
  CHECK(g.at(leaf).data == std::vector<real>{0, 1, 1, 1, 0});
}

TEST_CASE("uniform noise op: backward is identity, draw is seeded") {
  NdArray x = random_array({3, 3, 1}, 11, 0, 1);
  auto run = [&](uint64_t seed) {
    Tape t;
    NdArray p = x;
    p.requires_grad = true;
    Var leaf = t.leaf(std::move(p));
    Rng rng(seed);
    Var noisy = add_uniform_noise(leaf, rng);
    NdArray fwd = t.val(noisy);
    auto g = t.backward(sum(noisy));
    return std::make_pair(fwd, g.at(leaf));
  };
  auto [f1, g1] = run(123);
  auto [f2, g2] = run(123);
  CHECK(f1.data == f2.data);  // bit-identical under the same seed
  CHECK(g1.data == std::vector<real>(9, 1.0));
  auto [f3, g3] = run(124);
  CHECK(f1.data != f3.data);
  for (int64_t i = 0; i < 9; ++i) {
    real d = f1.data[static_cast<size_t>(i)] - x.data[static_cast<size_t>(i)];
    CHECK(d >= -0.5);
    CHECK(d <= 0.5);
  }
}

TEST_CASE("conv2d matches an explicit matrix construction on a 3x3 input") {
  // Materialize the conv as a matrix by probing unit inputs, then check both
  // the forward map and the adjoint (input gradient) against it.
  NdArray w = random_array({2, 2, 1, 1}, 21);
  const int h = 3, wd = 3;
  auto forward = [&](const NdArray& x) {
    Tape t;
    Var vx = t.leaf(x);
    Var out = conv2d(vx, t.constant(w), Var{}, /*stride=*/1, /*pad=*/0);
    return t.val(out);
  };
  // out is 2x2 = 4 elements, input 9 elements
  std::vector<std::vector<real>> m(4, std::vector<real>(9, 0));
  for (int i = 0; i < 9; ++i) {
    NdArray e({3, 3, 1});
    e.data[static_cast<size_t>(i)] = 1;
    NdArray out = forward(e);
    for (int j = 0; j < 4; ++j) m[static_cast<size_t>(j)][static_cast<size_t>(i)] = out.data[static_cast<size_t>(j)];
  }
  NdArray x = random_array({h, wd, 1}, 22);
  NdArray out = forward(x);
  for (int j = 0; j < 4; ++j) {
    real expect = 0;
    for (int i = 0; i < 9; ++i) expect += m[static_cast<size_t>(j)][static_cast<size_t>(i)] * x.data[static_cast<size_t>(i)];
    CHECK(out.data[static_cast<size_t>(j)] == Catch::Approx(expect).margin(1e-12));
  }
  // adjoint: grad of <conv(x), r> wrt x must equal M^T r
  NdArray r = random_array({2, 2, 1}, 23);
  NdArray gx = grad_of(
      [&](Tape& t, Var vx) {
        return sum(mul(conv2d(vx, t.constant(w), Var{}, 1, 0), t.constant(r)));
      },
      x);
  for (int i = 0; i < 9; ++i) {
    real expect = 0;
    for (int j = 0; j < 4; ++j) expect += m[static_cast<size_t>(j)][static_cast<size_t>(i)] * r.data[static_cast<size_t>(j)];
    CHECK(gx.data[static_cast<size_t>(i)] == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("tconv2d is the adjoint of conv2d") {
  // <conv(x; w), y> == <x, tconv(y; wT)> where wT swaps the channel dims of
  // w (same spatial orientation, same stride and pad).
  NdArray w = random_array({3, 3, 2, 4}, 31);
  NdArray wt({3, 3, 4, 2});
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx)
      for (int ci = 0; ci < 2; ++ci)
        for (int co = 0; co < 4; ++co)
          wt.data[static_cast<size_t>(((ky * 3 + kx) * 4 + co) * 2 + ci)] =
              w.data[static_cast<size_t>(((ky * 3 + kx) * 2 + ci) * 4 + co)];
  NdArray x = random_array({6, 6, 2}, 32);
  NdArray y = random_array({3, 3, 4}, 33);  // conv output shape at stride 2, pad 1
  Tape t;
  Var cx = conv2d(t.leaf(x), t.constant(w), Var{}, 2, 1);
  REQUIRE(t.val(cx).shape == std::vector<int>{3, 3, 4});
  real lhs = dot(t.val(cx), y);
  Var back = tconv2d(t.leaf(y), t.constant(wt), Var{}, 2, 1, 6, 6);
  REQUIRE(t.val(back).shape == std::vector<int>{6, 6, 2});
  real rhs = dot(x, t.val(back));
  CHECK(lhs == Catch::Approx(rhs).margin(1e-10));
  // and both agree with the conv2d input gradient
  NdArray adj = grad_of(
      [&](Tape& tp, Var vx) {
        return sum(mul(conv2d(vx, tp.constant(w), Var{}, 2, 1), tp.constant(y)));
      },
      x);
  CHECK(linf_distance(adj, t.val(back)) < 1e-12);
}

TEST_CASE("gradient correctness of every primitive against central differences") {
  // Wrap each op in sum(op(x) * r); vector-relative tolerance 1e-4 with
  // step 1e-4. Inputs are kept away from non-smooth points where relevant.
  struct Case {
    const char* name;
    std::vector<int> shape;
    real lo, hi;
    ScalarGraphFn fn;
  };
  NdArray r66 = random_array({6, 6, 2}, 101);
  NdArray r33 = random_array({3, 3, 2}, 102);
  NdArray r63 = random_array({6, 3, 2}, 103);
  NdArray rpad = random_array({8, 9, 2}, 104);
  NdArray rpool = random_array({3, 3, 2}, 105);
  NdArray w33 = random_array({3, 3, 2, 3}, 106);
  NdArray rconv = random_array({3, 3, 3}, 107);
  NdArray rtconv = random_array({6, 6, 3}, 108);
  NdArray rflip = random_array({6, 6, 2}, 109);

  std::vector<Case> cases = {
      {"add", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(add(x, t.constant(random_array({6, 6, 2}, 201))), t.constant(r66))); }},
      {"sub", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(sub(x, t.constant(random_array({6, 6, 2}, 202))), t.constant(r66))); }},
      {"mul", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(mul(x, t.constant(random_array({6, 6, 2}, 203))), t.constant(r66))); }},
      {"scale", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(scale(x, 2.5), t.constant(r66))); }},
      {"square", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(square(x), t.constant(r66))); }},
      {"abs", {6, 6, 2}, 0.2, 1,  // away from the kink at 0
       [&](Tape& t, Var x) { return sum(mul(abs_op(x), t.constant(r66))); }},
      {"log", {6, 6, 2}, 0.5, 2,
       [&](Tape& t, Var x) { return sum(mul(log_op(x), t.constant(r66))); }},
      {"exp", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(exp_op(x), t.constant(r66))); }},
      {"sqrt0", {6, 6, 2}, 0.5, 2,
       [&](Tape& t, Var x) { return sum(mul(sqrt0(x), t.constant(r66))); }},
      {"mean", {6, 6, 2}, -1, 1, [&](Tape&, Var x) { return mean(x); }},
      {"clamp01", {6, 6, 2}, 0.1, 0.9,  // inside the pass-through band
       [&](Tape& t, Var x) { return sum(mul(clamp01(x), t.constant(r66))); }},
      {"leaky", {6, 6, 2}, 0.2, 1,
       [&](Tape& t, Var x) { return sum(mul(leaky(x), t.constant(r66))); }},
      {"leaky_negative", {6, 6, 2}, -1, -0.2,
       [&](Tape& t, Var x) { return sum(mul(leaky(x), t.constant(r66))); }},
      {"pad_reflect", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(pad2d(x, 1, 1, 2, 1), t.constant(rpad))); }},
      {"pad_zero", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(pad2d(x, 1, 1, 2, 1, PadMode::Zero), t.constant(rpad))); }},
      {"crop", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(crop2d(x, 2, 1, 3, 3), t.constant(r33))); }},
      {"avg_pool", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(avg_pool(x, 2), t.constant(rpool))); }},
      {"conv2d", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(conv2d(x, t.constant(w33), Var{}, 2, 1), t.constant(rconv))); }},
      {"tconv2d", {3, 3, 2}, -1, 1,
       [&](Tape& t, Var x) {
         NdArray w2 = random_array({3, 3, 2, 3}, 110);
         return sum(mul(tconv2d(x, t.constant(w2), Var{}, 2, 1, 6, 6), t.constant(rtconv)));
       }},
      {"flip2d", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(flip2d(x, true, true), t.constant(rflip))); }},
      {"roll2d", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) { return sum(mul(roll2d(x, 1, 4), t.constant(rflip))); }},
      {"noise", {6, 6, 2}, -1, 1,
       [&](Tape& t, Var x) {
         Rng rng(42);  // same seed each probe: frozen function
         return sum(mul(add_uniform_noise(x, rng), t.constant(r66)));
       }},
      {"ste_round_as_identity_grad", {6, 6, 2}, 0.2, 0.3,
       // forward rounds to 0 (constant on the probe interval), so the check
       // runs the surrogate sum instead: verified separately above; here we
       // check the downstream composition log(exp(x)) stays exact.
       [&](Tape& t, Var x) { return sum(mul(log_op(exp_op(x)), t.constant(r66))); }},
  };
  for (auto& c : cases) {
    DYNAMIC_SECTION(c.name) {
      int failures = 0;
      for (uint64_t trial = 0; trial < 20; ++trial) {
        NdArray x = random_array(c.shape, 1000 + trial * 13, c.lo, c.hi);
        FdReport rep = finite_diff_check(c.fn, x, 1e-4, 1e-4);
        if (!rep.pass) ++failures;
      }
      CHECK(failures == 0);
    }
  }
}

TEST_CASE("gradients are linear over loss combinations") {
  NdArray x = random_array({5, 5, 2}, 55);
  NdArray cvec = random_array({5, 5, 2}, 56);
  auto f = [&](Tape&, Var vx) { return mean(square(vx)); };
  auto g = [&](Tape& t, Var vx) { return sum(mul(vx, t.constant(cvec))); };
  const real a = 2.25, b = -0.75;
  NdArray gf = grad_of(f, x);
  NdArray gg = grad_of(g, x);
  NdArray gh = grad_of(
      [&](Tape& t, Var vx) { return add(scale(f(t, vx), a), scale(g(t, vx), b)); }, x);
  for (int64_t i = 0; i < x.numel(); ++i) {
    real expect = a * gf.data[static_cast<size_t>(i)] + b * gg.data[static_cast<size_t>(i)];
    CHECK(std::abs(gh.data[static_cast<size_t>(i)] - expect) < 1e-10);
  }
}

TEST_CASE("replaying a graph gives bit-identical forwards and gradients") {
  auto build = [](uint64_t seed) {
    NdArray x = random_array({6, 6, 3}, seed, 0, 1);
    x.requires_grad = true;
    NdArray w = random_array({3, 3, 3, 4}, seed + 1);
    Tape t;
    Var vx = t.leaf(x);
    Rng rng(seed + 2);
    Var h = leaky(conv2d(vx, t.constant(w), Var{}, 2, 1));
    Var n = add_uniform_noise(h, rng);
    Var loss = mean(square(n));
    real fwd = t.val(loss).data[0];
    auto grads = t.backward(loss);
    return std::make_pair(fwd, grads.at(vx).data);
  };
  auto [f1, g1] = build(99);
  auto [f2, g2] = build(99);
  CHECK(f1 == f2);
  CHECK(g1 == g2);
}

TEST_CASE("gradient map holds exactly the requires_grad leaves") {
  Tape t;
  NdArray a = random_array({4}, 61);
  a.requires_grad = true;
  NdArray b = random_array({4}, 62);  // requires_grad stays false
  NdArray c = random_array({4}, 63);
  c.requires_grad = true;  // but not reachable from the loss
  Var va = t.leaf(a), vb = t.leaf(b), vc = t.leaf(c);
  auto g = t.backward(sum(mul(va, vb)));
  CHECK(g.contains(va));
  CHECK_FALSE(g.contains(vb));
  CHECK(g.contains(vc));  // present with zeros: optimizers may rely on it
  CHECK(g.at(vc).data == std::vector<real>(4, 0.0));
  CHECK_THROWS_AS(g.at(vb), Error);
}

TEST_CASE("backward rejects non-scalar losses and non-finite values") {
  Tape t;
  NdArray x = random_array({3}, 71);
  x.requires_grad = true;
  Var vx = t.leaf(x);
  CHECK_THROWS_AS(t.backward(vx), Error);  // vector loss

  Tape t2;
  NdArray y = NdArray::from({1}, {-2});
  y.requires_grad = true;
  Var vy = t2.leaf(y);
  CHECK_THROWS_AS(log_op(vy), Error);  // domain error surfaces at forward time
}

TEST_CASE("finite_diff_check hand cases") {
  SECTION("sum of squares passes at 1e-6") {
    NdArray x = random_array({4, 4, 1}, 81, -2, 2);
    FdReport rep = finite_diff_check(
        [](Tape&, Var v) { return sum(square(v)); }, x, 1e-4, 1e-6);
    CHECK(rep.pass);
    CHECK(rep.note.empty());
  }
  SECTION("two-layer conv net loss passes at 1e-4") {
    NdArray w1 = random_array({3, 3, 1, 3}, 82);
    NdArray w2 = random_array({3, 3, 3, 1}, 83);
    NdArray target = random_array({2, 2, 1}, 84, 0, 1);
    NdArray x = random_array({8, 8, 1}, 85, 0, 1);
    FdReport rep = finite_diff_check(
        [&](Tape& t, Var v) {
          Var h = leaky(conv2d(v, t.constant(w1), Var{}, 2, 1));
          Var o = conv2d(h, t.constant(w2), Var{}, 2, 1);
          return mean(square(sub(o, t.constant(target))));
        },
        x, 1e-4, 1e-4);
    CHECK(rep.pass);
  }
  SECTION("hard round straddling a boundary is flagged") {
    // 0.49995 with step 1e-3 probes across the 0.5 rounding boundary.
    NdArray x = NdArray::from({2}, {0.49995, 0.2});
    FdReport rep = finite_diff_check(
        [](Tape&, Var v) { return sum(round_op(v, /*ste=*/false)); }, x, 1e-3, 1e-3);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.note.empty());
  }
  SECTION("non-finite f is an error") {
    NdArray x = NdArray::from({1}, {-1.0});
    CHECK_THROWS_AS(finite_diff_check(
                        [](Tape&, Var v) { return sqrt0(log_op(exp_op(v))); },
                        NdArray::from({1}, {std::nan("")}), 1e-4, 1e-4),
                    Error);
  }
}
