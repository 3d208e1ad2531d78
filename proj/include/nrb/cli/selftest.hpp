// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_CLI_SELFTEST_HPP_
#define NRB_CLI_SELFTEST_HPP_

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nrb/attacks/attack.hpp"
#include "nrb/bench/grid.hpp"
#include "nrb/bench/record.hpp"
#include "nrb/bench/stats.hpp"
#include "nrb/codecs/codec.hpp"
#include "nrb/core/check.hpp"
#include "nrb/core/random.hpp"
#include "nrb/defenses/defense.hpp"
#include "nrb/quality/metrics.hpp"

namespace nrb {

struct SelftestResult {
  int passed = 0;
  int failed = 0;
  bool ok() const { return failed == 0 && passed > 0; }
};

namespace detail {

class SelftestRunner {
 public:
  explicit SelftestRunner(std::ostream& os) : os_(os) {}

  void run(const char* name, const std::function<void()>& body) {
    try {
      body();
      os_ << "selftest: " << name << ": ok\n";
      ++result_.passed;
    } catch (const std::exception& e) {
      os_ << "selftest: " << name << ": FAIL: " << e.what() << '\n';
      ++result_.failed;
    }
  }

  const SelftestResult& result() const { return result_; }

 private:
  std::ostream& os_;
  SelftestResult result_;
};

inline NdArray selftest_image(uint64_t seed, int h = 16, int w = 16) {
  NdArray x = Rng(seed).uniform_array({h, w, 3}, 0.1, 0.9);
  // Mix in structure so metrics and attacks see non-noise content.
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      x.at3(y, xx, 0) = 0.5 * x.at3(y, xx, 0) + 0.5 * (y + xx) / double(h + w);
  return x;
}

}  // namespace detail

// Fast invariant sweep over every pipeline stage. Prints one line per
// check; intended for `nrbench selftest` and fresh-checkout smoke runs.
inline SelftestResult run_selftest(std::ostream& os) {
  detail::SelftestRunner r(os);

  r.run("tape gradients match finite differences", [] {
    const ToyCodec codec(CodecSpec{CodecFamily::Factorized, 2, 0.05}, 23);
    NdArray x0 = detail::selftest_image(3, 8, 8);
    const auto f = [&](Tape& t, Var x) {
      CodecGraph g = codec.forward_graph(t, x, QuantMode::Noise, 77);
      Var distortion = mean(square(sub(g.reconstruction, x)));
      return add(scale(g.bpp, codec.spec().lambda), distortion);
    };
    const FdReport rep = finite_diff_check(f, x0, 1e-4, 1e-3);
    check(rep.pass, "gradient deviates from finite differences: ",
          rep.vec_rel_dev, " ", rep.note);
  });

  r.run("quality metric identities", [] {
    const NdArray x = detail::selftest_image(5);
    check(std::abs(ms_ssim(x, x) - 1.0) < 1e-12, "ms_ssim(x,x) != 1");
    check(mse(x, x) == 0.0, "mse(x,x) != 0");
    const NdArray a({4, 4, 3}, 0.0);
    const NdArray b({4, 4, 3}, 0.5);
    check(std::abs(psnr(a, b) - 6.0206) < 1e-4,
          "psnr at mse 0.25 should be 6.0206, got ", psnr(a, b));
  });

  r.run("quantizer modes", [] {
    Tape t;
    NdArray v = NdArray::from({3}, {-0.4, 0.6, 2.49});
    v.requires_grad = true;
    Var leaf = t.leaf(std::move(v));
    Var y = round_op(leaf, /*ste=*/true);
    const NdArray& out = t.val(y);
    check(out.data[0] == 0.0 && out.data[1] == 1.0 && out.data[2] == 2.0,
          "hard rounding wrong");
    auto grads = t.backward(sum(y));
    const NdArray& g = grads.at(leaf);
    check(g.data[0] == 1.0 && g.data[1] == 1.0 && g.data[2] == 1.0,
          "straight-through gradient must be identity");
  });

  r.run("attack respects norm and range constraints", [] {
    const ToyCodec codec(CodecSpec{CodecFamily::Factorized, 2, 0.05}, 29);
    const NdArray x = detail::selftest_image(7);
    AttackConfig cfg = attack_preset(0);
    cfg.steps = 3;
    const Objective obj{ObjectiveKind::ReconstructionL2, false};
    const AttackResult res =
        run_attack(AttackKind::Pgd, codec, x, obj, cfg);
    check(linf_distance(res.x_adv, x) <= cfg.epsilon + 1e-9,
          "perturbation exceeds epsilon");
    check(min_value(res.x_adv) >= 0.0 && max_value(res.x_adv) <= 1.0,
          "adversarial example leaves [0,1]");
    check(res.trace.size() == static_cast<size_t>(cfg.steps) + 1,
          "trace length mismatch");
    for (size_t i = 1; i < res.trace.size(); ++i)
      check(res.trace[i] >= res.trace[i - 1] - 1e-12,
            "best-so-far trace must be monotone");
  });

  r.run("defense transforms invert exactly", [] {
    const NdArray x = detail::selftest_image(9, 16, 12);
    for (DefenseKind kind : {DefenseKind::Flip, DefenseKind::RandomRoll,
                             DefenseKind::RandomColorReorder}) {
      DefenseTransform tf = sample_transform(kind, x.h(), x.w(), 11);
      const NdArray back = apply_post(tf, apply_pre(tf, x));
      check(back.data == x.data, defense_name(kind),
            " round trip not exact");
    }
    // Interpolation-limited round trip: bilinear resampling reproduces
    // locally linear content, so the bound only holds on smooth images.
    NdArray ramp({48, 64, 3});
    for (int y = 0; y < 48; ++y)
      for (int xx = 0; xx < 64; ++xx)
        for (int c = 0; c < 3; ++c)
          ramp.at3(y, xx, c) = 0.15 + 0.5 * y / 47.0 + 0.25 * xx / 63.0 +
                               0.05 * c;
    DefenseTransform rot =
        sample_transform(DefenseKind::RandomRotate, ramp.h(), ramp.w(), 13);
    const NdArray back = apply_post(rot, apply_pre(rot, ramp));
    check(back.same_shape(ramp), "rotation round trip changed shape");
    double mae = 0.0;
    for (size_t i = 0; i < ramp.data.size(); ++i)
      mae += std::abs(back.data[i] - ramp.data[i]);
    mae /= static_cast<double>(ramp.numel());
    check(mae <= 1e-3, "rotation round trip error ", mae);
  });

  r.run("self-ensemble picks the best variant", [] {
    const ToyCodec base(CodecSpec{CodecFamily::Factorized, 2, 0.05}, 31);
    const NdArray x = detail::selftest_image(15);
    const DefendedCodec defended(base, DefenseKind::SelfEnsemble, 1);
    const CodecResult got = defended.forward(x, QuantMode::Hard, 5);
    double best = std::numeric_limits<double>::infinity();
    for (int v = 0; v < 8; ++v) {
      Tape t;
      const CodecGraph g = base.forward_graph(
          t, detail::dihedral_pre(t.constant(x), v), QuantMode::Hard, 5);
      best = std::min(
          best, mse(x, t.val(detail::dihedral_post(g.reconstruction, v))));
    }
    check(mse(x, got.reconstruction) == best,
          "ensemble output must equal the candidate minimum");
  });

  r.run("statistics hand values", [] {
    const std::vector<double> b5(5, 0.0);
    const std::vector<double> a5(5, 1.0);
    check(wilcoxon_one_sided(a5, b5) == 0.03125,
          "five positive pairs must give p = 1/32");
    const std::vector<double> p = bonferroni({0.01}, 10);
    check(std::abs(p[0] - 0.1) < 1e-15, "bonferroni 0.01 x 10 != 0.1");
    const double rho = spearman({1, 2, 3, 4}, {1, 3, 2, 4});
    check(std::abs(rho - 0.8) < 1e-12, "spearman hand case != 0.8");
  });

  r.run("result records survive persistence", [] {
    EvalRecord rec;
    rec.image = "im,0";
    rec.codec = "c\"x";
    rec.attack = "pgd";
    rec.epsilon = 1.0 / 3.0;
    rec.quality[0][1] = 30.123456789012345;
    rec.delta[1] = 1e-17;
    std::ostringstream o1;
    write_csv(o1, {rec});
    std::istringstream i1(o1.str());
    const std::vector<EvalRecord> back = read_csv(i1);
    check(back.size() == 1, "record count changed");
    std::ostringstream o2;
    write_csv(o2, back);
    check(o1.str() == o2.str(), "csv round trip not a fixed point");
    check(back[0].epsilon == rec.epsilon, "double not exact after reload");
  });

  r.run("grid results are schedule independent", [] {
    const ToyCodec codec(CodecSpec{CodecFamily::Factorized, 2, 0.05}, 37);
    GridSpec spec;
    spec.images.push_back({"a", detail::selftest_image(21)});
    spec.codecs.push_back({"toy", "lam0.05", &codec});
    AttackConfig cfg;
    cfg.steps = 2;
    spec.attacks.push_back({AttackKind::Ifgsm, cfg});
    spec.objectives.push_back({ObjectiveKind::ReconstructionL2, false});
    spec.defenses = {DefenseKind::Identity, DefenseKind::RandomRoll};
    spec.seed = 99;
    auto masked_csv = [](std::vector<EvalRecord> rs) {
      for (EvalRecord& rec : rs)
        rec.compress_time_ms = rec.attack_time_ms = EvalRecord::kAbsent;
      std::ostringstream o;
      write_csv(o, rs);
      return o.str();
    };
    spec.workers = 1;
    const std::string once = masked_csv(run_grid(spec));
    spec.workers = 2;
    const std::string parallel = masked_csv(run_grid(spec));
    check(once == parallel, "records depend on worker count");
  });

  return r.result();
}

}  // namespace nrb

#endif  // NRB_CLI_SELFTEST_HPP_
