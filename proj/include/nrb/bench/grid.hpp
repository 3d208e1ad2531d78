// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_BENCH_GRID_HPP_
#define NRB_BENCH_GRID_HPP_

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nrb/attacks/attack.hpp"
#include "nrb/attacks/objective.hpp"
#include "nrb/bench/record.hpp"
#include "nrb/codecs/codec.hpp"
#include "nrb/core/random.hpp"
#include "nrb/defenses/defense.hpp"
#include "nrb/quality/scores.hpp"

namespace nrb {

struct GridImage {
  std::string id;
  NdArray pixels;
};

// Non-owning reference to a codec under test. `variant` distinguishes
// operating points of the same architecture (e.g. rate targets).
struct GridCodecRef {
  std::string id;
  std::string variant;
  const ICodec* codec = nullptr;
};

struct GridAttack {
  AttackKind kind = AttackKind::Pgd;
  AttackConfig cfg;
};

// Raw per-cell tensors offered to an audit callback alongside the finished
// record. The references are only valid for the duration of the call.
struct CellAudit {
  const NdArray& x;
  const NdArray& x_adv;
  const std::vector<double>& objective_trace;  // running best per evaluation
};

// Observer for audits that need the tensors next to the record (constraint
// scans, non-adaptive replays). Called only for cells that evaluate cleanly,
// always under one internal lock, so a single callback may aggregate state
// even with workers > 1.
using GridAuditFn = std::function<void(const EvalRecord&, const CellAudit&)>;

struct GridSpec {
  std::vector<GridImage> images;
  std::vector<GridCodecRef> codecs;
  std::vector<GridAttack> attacks;
  std::vector<Objective> objectives;
  std::vector<DefenseKind> defenses;  // empty means identity only
  uint64_t seed = 1;
  int workers = 1;
  GridAuditFn audit;  // optional
};

// A cell's full identity; doubles as its RNG domain separator, so every
// random choice in the pipeline is a pure function of (global seed, cell).
inline std::string grid_cell_key(const std::string& image,
                                 const std::string& codec,
                                 const std::string& variant,
                                 AttackKind attack, const Objective& objective,
                                 DefenseKind defense) {
  return image + "|" + codec + "|" + variant + "|" + attack_name(attack) +
         "|" + objective_name(objective) + "|" + defense_name(defense);
}

struct CellSeeds {
  uint64_t cell = 0;
  uint64_t defense = 0;
  uint64_t attack = 0;
  uint64_t clean_call = 0;
  uint64_t adv_call = 0;
};

inline CellSeeds grid_cell_seeds(uint64_t global_seed,
                                 const std::string& cell_key) {
  CellSeeds s;
  s.cell = mix_seed(global_seed, cell_key);
  s.defense = mix_seed(s.cell, "defense");
  s.attack = mix_seed(s.cell, "attack");
  s.clean_call = mix_seed(s.cell, "clean-call");
  s.adv_call = mix_seed(s.cell, "adv-call");
  return s;
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// Evaluates one grid cell. All randomness derives from the cell key, so a
// cell's record is independent of which worker runs it and of the order
// cells run in. A fresh DefendedCodec keeps the per-call transform counter
// at a cell-local origin for the same reason. Failures are recorded in the
// error column; numeric fields stay absent.
inline EvalRecord eval_grid_cell(const GridImage& image,
                                 const GridCodecRef& codec,
                                 const GridAttack& attack,
                                 const Objective& objective,
                                 DefenseKind defense, uint64_t global_seed,
                                 const GridAuditFn* audit = nullptr,
                                 std::mutex* audit_mu = nullptr) {
  EvalRecord r;
  r.image = image.id;
  r.codec = codec.id;
  r.variant = codec.variant;
  r.attack = attack_name(attack.kind);
  r.objective = objective_name(objective);
  r.defense = defense_name(defense);
  r.epsilon = attack.cfg.epsilon;
  r.steps = attack.cfg.steps;
  r.lr = attack.cfg.lr;
  r.param_count = codec.codec->param_count();

  const CellSeeds seeds = grid_cell_seeds(
      global_seed, grid_cell_key(r.image, r.codec, r.variant, attack.kind,
                                 objective, defense));

  try {
    DefendedCodec defended(*codec.codec, defense, seeds.defense);
    AttackConfig cfg = attack.cfg;
    cfg.seed = seeds.attack;

    auto t0 = std::chrono::steady_clock::now();
    const CodecResult clean = defended.forward(image.pixels, QuantMode::Hard,
                                               seeds.clean_call);
    r.compress_time_ms = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    const AttackResult adv =
        run_attack(attack.kind, defended, image.pixels, objective, cfg);
    r.attack_time_ms = elapsed_ms(t0);
    r.queries_used = adv.queries_used;

    const CodecResult attacked =
        defended.forward(adv.x_adv, QuantMode::Hard, seeds.adv_call);

    for (size_t m = 0; m < 3; ++m) {
      const PairScores s =
          pair_scores(static_cast<Metric>(m), image.pixels, adv.x_adv,
                      clean.reconstruction, attacked.reconstruction);
      r.quality[0][m] = s.x_xadv;
      r.quality[1][m] = s.cx_cxadv;
      r.quality[2][m] = s.x_cx;
      r.quality[3][m] = s.xadv_cxadv;
      r.delta[m] = s.delta();
      r.small_delta[m] = s.small_delta();
    }
    r.bpp_clean = clean.bpp;
    r.bpp_adv = attacked.bpp;
    r.delta_bpp = delta_bpp(clean.bpp, attacked.bpp);

    if (audit && *audit) {
      const CellAudit ca{image.pixels, adv.x_adv, adv.trace};
      if (audit_mu) {
        std::lock_guard<std::mutex> lock(*audit_mu);
        (*audit)(r, ca);
      } else {
        (*audit)(r, ca);
      }
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

}  // namespace detail

// Runs the full cross product of images x codecs x attacks x objectives x
// defenses and returns one record per cell in canonical order.
inline std::vector<EvalRecord> run_grid(const GridSpec& spec) {
  check(!spec.images.empty(), "run_grid: no images");
  check(!spec.codecs.empty(), "run_grid: no codecs");
  check(!spec.attacks.empty(), "run_grid: no attacks");
  check(!spec.objectives.empty(), "run_grid: no objectives");
  for (const GridCodecRef& c : spec.codecs)
    check(c.codec != nullptr, "run_grid: codec '", c.id, "' is null");

  const std::vector<DefenseKind> defenses =
      spec.defenses.empty() ? std::vector<DefenseKind>{DefenseKind::Identity}
                            : spec.defenses;

  struct Cell {
    const GridImage* image;
    const GridCodecRef* codec;
    const GridAttack* attack;
    const Objective* objective;
    DefenseKind defense;
  };
  std::vector<Cell> cells;
  cells.reserve(spec.images.size() * spec.codecs.size() *
                spec.attacks.size() * spec.objectives.size() *
                defenses.size());
  for (const GridImage& im : spec.images)
    for (const GridCodecRef& cv : spec.codecs)
      for (const GridAttack& at : spec.attacks)
        for (const Objective& obj : spec.objectives)
          for (DefenseKind def : defenses)
            cells.push_back({&im, &cv, &at, &obj, def});

  std::vector<EvalRecord> records(cells.size());
  std::atomic<size_t> next{0};
  std::mutex audit_mu;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& c = cells[i];
      records[i] = detail::eval_grid_cell(*c.image, *c.codec, *c.attack,
                                          *c.objective, c.defense, spec.seed,
                                          &spec.audit, &audit_mu);
    }
  };
  const int workers = spec.workers > 1 ? spec.workers : 1;
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  canonical_sort(records);
  return records;
}

struct TransferMatrix {
  std::vector<std::string> sources, targets;
  // mean_delta_psnr[s][t]; NaN where no image pair evaluated cleanly.
  std::vector<std::vector<double>> mean_delta_psnr;
};

// Crafts adversarial examples once per (source codec, image) and replays
// them against every target codec, reporting the mean reconstruction-PSNR
// drop each target suffers. Diagonal entries are the self-attack effect.
inline TransferMatrix transferability(
    const std::vector<GridCodecRef>& sources,
    const std::vector<GridCodecRef>& targets,
    const std::vector<GridImage>& images, const GridAttack& attack,
    const Objective& objective, uint64_t seed) {
  check(!sources.empty(), "transferability: no source codecs");
  check(!targets.empty(), "transferability: no target codecs");
  check(!images.empty(), "transferability: no images");
  for (const GridCodecRef& c : sources)
    check(c.codec != nullptr, "transferability: source '", c.id, "' is null");
  for (const GridCodecRef& c : targets)
    check(c.codec != nullptr, "transferability: target '", c.id, "' is null");

  TransferMatrix tm;
  for (const GridCodecRef& c : sources) tm.sources.push_back(c.id);
  for (const GridCodecRef& c : targets) tm.targets.push_back(c.id);
  tm.mean_delta_psnr.assign(
      sources.size(),
      std::vector<double>(targets.size(),
                          std::numeric_limits<double>::quiet_NaN()));

  for (size_t s = 0; s < sources.size(); ++s) {
    const GridCodecRef& src = sources[s];
    std::vector<NdArray> advs;
    std::vector<size_t> crafted;  // image indices with a usable example
    advs.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
      const std::string key = src.id + "|" + images[i].id;
      try {
        AttackConfig cfg = attack.cfg;
        cfg.seed = mix_seed(mix_seed(seed, key), "attack");
        advs.push_back(run_attack(attack.kind, *src.codec, images[i].pixels,
                                  objective, cfg)
                           .x_adv);
        crafted.push_back(i);
      } catch (const std::exception&) {
      }
    }
    for (size_t t = 0; t < targets.size(); ++t) {
      const GridCodecRef& tgt = targets[t];
      double sum = 0.0;
      int n = 0;
      for (size_t k = 0; k < crafted.size(); ++k) {
        const size_t i = crafted[k];
        const std::string key =
            src.id + "|" + tgt.id + "|" + images[i].id;
        try {
          const CodecResult c0 =
              tgt.codec->forward(images[i].pixels, QuantMode::Hard,
                                 mix_seed(mix_seed(seed, key), "clean-call"));
          const CodecResult c1 =
              tgt.codec->forward(advs[k], QuantMode::Hard,
                                 mix_seed(mix_seed(seed, key), "adv-call"));
          sum += psnr(images[i].pixels, advs[k]) -
                 psnr(c0.reconstruction, c1.reconstruction);
          ++n;
        } catch (const std::exception&) {
        }
      }
      if (n > 0) tm.mean_delta_psnr[s][t] = sum / n;
    }
  }
  return tm;
}

}  // namespace nrb

#endif  // NRB_BENCH_GRID_HPP_
