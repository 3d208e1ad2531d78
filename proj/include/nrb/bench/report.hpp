// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_BENCH_REPORT_HPP_
#define NRB_BENCH_REPORT_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "nrb/bench/grid.hpp"
#include "nrb/bench/record.hpp"
#include "nrb/bench/stats.hpp"
#include "nrb/core/error.hpp"
#include "nrb/quality/scores.hpp"

namespace nrb {

namespace detail {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return kNan;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

struct RDPoint {
  std::string codec;
  double bpp = 0.0;
  double quality = 0.0;
  int n = 0;
};

// Per-codec operating points before and after attack, sorted by rate.
struct RDCurves {
  Metric metric = Metric::Psnr;
  std::vector<RDPoint> clean;    // (mean bpp_clean, mean quality x vs C(x))
  std::vector<RDPoint> attacked; // (mean bpp_adv, mean quality x' vs C(x'))
};

inline RDCurves rd_curves(const std::vector<EvalRecord>& records, Metric m) {
  check(!records.empty(), "rd_curves: no records");
  const size_t mi = static_cast<size_t>(m);
  struct Agg {
    double bpp_c = 0, q_c = 0, bpp_a = 0, q_a = 0;
    int n = 0;
  };
  std::map<std::string, Agg> by_codec;
  for (const EvalRecord& r : records) {
    if (!r.error.empty()) continue;
    const double qc = r.quality[2][mi], qa = r.quality[3][mi];
    if (std::isnan(r.bpp_clean) || std::isnan(r.bpp_adv) || std::isnan(qc) ||
        std::isnan(qa))
      continue;
    const std::string key =
        r.variant.empty() ? r.codec : r.codec + "/" + r.variant;
    Agg& a = by_codec[key];
    a.bpp_c += r.bpp_clean;
    a.q_c += qc;
    a.bpp_a += r.bpp_adv;
    a.q_a += qa;
    ++a.n;
  }
  check(!by_codec.empty(), "rd_curves: no usable records");
  RDCurves out;
  out.metric = m;
  for (const auto& [key, a] : by_codec) {
    const double n = static_cast<double>(a.n);
    out.clean.push_back({key, a.bpp_c / n, a.q_c / n, a.n});
    out.attacked.push_back({key, a.bpp_a / n, a.q_a / n, a.n});
  }
  auto by_bpp = [](const RDPoint& x, const RDPoint& y) {
    return x.bpp < y.bpp;
  };
  std::sort(out.clean.begin(), out.clean.end(), by_bpp);
  std::sort(out.attacked.begin(), out.attacked.end(), by_bpp);
  return out;
}

// Aggregate over one key; per-metric arrays are ordered mse, psnr, ms_ssim.
struct GroupAgg {
  std::string key;
  int n = 0;
  std::array<double, 3> mean_delta{}, median_delta{}, mean_small_delta{},
      median_small_delta{};
};

struct Summary {
  std::vector<GroupAgg> by_codec_attack, by_codec_objective, by_codec_defense;
  // Spearman of codec parameter count vs mean attack effect (small delta,
  // PSNR); NaN when fewer than three codecs or the inputs are degenerate.
  double params_vs_effect_spearman = detail::kNan;
  // Spearman of delta vs small delta per metric across records.
  std::array<double, 3> delta_vs_small_delta_spearman{
      detail::kNan, detail::kNan, detail::kNan};
};

namespace detail {

template <typename KeyFn>
std::vector<GroupAgg> group_records(const std::vector<EvalRecord>& records,
                                    KeyFn&& key_fn) {
  std::map<std::string, std::array<std::vector<double>, 6>> groups;
  std::map<std::string, int> counts;
  for (const EvalRecord& r : records) {
    if (!r.error.empty()) continue;
    const std::string key = key_fn(r);
    auto& g = groups[key];
    ++counts[key];
    for (size_t m = 0; m < 3; ++m) {
      if (!std::isnan(r.delta[m])) g[m].push_back(r.delta[m]);
      if (!std::isnan(r.small_delta[m])) g[m + 3].push_back(r.small_delta[m]);
    }
  }
  std::vector<GroupAgg> out;
  for (auto& [key, g] : groups) {
    GroupAgg a;
    a.key = key;
    a.n = counts[key];
    for (size_t m = 0; m < 3; ++m) {
      a.mean_delta[m] = mean_of(g[m]);
      a.median_delta[m] = median_of(g[m]);
      a.mean_small_delta[m] = mean_of(g[m + 3]);
      a.median_small_delta[m] = median_of(g[m + 3]);
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline double guarded_spearman(const std::vector<double>& x,
                               const std::vector<double>& y) {
  if (x.size() < 3) return kNan;
  try {
    return spearman(x, y);
  } catch (const std::exception&) {
    return kNan;  // constant input
  }
}

}  // namespace detail

inline Summary summarize(const std::vector<EvalRecord>& records) {
  check(!records.empty(), "summarize: no records");
  Summary s;
  s.by_codec_attack = detail::group_records(
      records, [](const EvalRecord& r) { return r.codec + "|" + r.attack; });
  s.by_codec_objective = detail::group_records(
      records,
      [](const EvalRecord& r) { return r.codec + "|" + r.objective; });
  s.by_codec_defense = detail::group_records(
      records, [](const EvalRecord& r) { return r.codec + "|" + r.defense; });

  // Capacity vs vulnerability: one point per codec, effect averaged over
  // that codec's clean cells.
  std::map<std::string, std::pair<double, int>> effect;
  std::map<std::string, double> params;
  const size_t psnr_i = static_cast<size_t>(Metric::Psnr);
  for (const EvalRecord& r : records) {
    if (!r.error.empty() || std::isnan(r.small_delta[psnr_i])) continue;
    auto& e = effect[r.codec];
    e.first += r.small_delta[psnr_i];
    ++e.second;
    params[r.codec] = static_cast<double>(r.param_count);
  }
  std::vector<double> px, ey;
  for (const auto& [codec, e] : effect) {
    px.push_back(params[codec]);
    ey.push_back(e.first / e.second);
  }
  s.params_vs_effect_spearman = detail::guarded_spearman(px, ey);

  for (size_t m = 0; m < 3; ++m) {
    std::vector<double> dx, dy;
    for (const EvalRecord& r : records) {
      if (!r.error.empty()) continue;
      if (std::isnan(r.delta[m]) || std::isnan(r.small_delta[m])) continue;
      dx.push_back(r.delta[m]);
      dy.push_back(r.small_delta[m]);
    }
    s.delta_vs_small_delta_spearman[m] = detail::guarded_spearman(dx, dy);
  }
  return s;
}

// Whitespace-separated blocks, one per curve, consumable by gnuplot via
// `plot 'rd.dat' index 0 using 2:3, '' index 1 using 2:3`.
inline void write_rd_gnuplot(std::ostream& os, const RDCurves& c) {
  os << "# rate-distortion, quality metric: " << metric_name(c.metric)
     << "\n# codec bpp quality n\n";
  os << "# index 0: clean inputs\n";
  for (const RDPoint& p : c.clean)
    os << p.codec << ' ' << detail::csv_double(p.bpp) << ' '
       << detail::csv_double(p.quality) << ' ' << p.n << '\n';
  os << "\n\n# index 1: attacked inputs\n";
  for (const RDPoint& p : c.attacked)
    os << p.codec << ' ' << detail::csv_double(p.bpp) << ' '
       << detail::csv_double(p.quality) << ' ' << p.n << '\n';
}

inline void write_transfer_gnuplot(std::ostream& os,
                                   const TransferMatrix& tm) {
  os << "# source target mean_delta_psnr\n";
  for (size_t s = 0; s < tm.sources.size(); ++s) {
    for (size_t t = 0; t < tm.targets.size(); ++t) {
      const double v = tm.mean_delta_psnr[s][t];
      os << tm.sources[s] << ' ' << tm.targets[t] << ' ';
      if (std::isnan(v))
        os << "nan";
      else
        os << detail::csv_double(v);
      os << '\n';
    }
    os << '\n';
  }
}

namespace detail {

inline std::string md_num(double v) {
  if (std::isnan(v)) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline void md_group_table(std::ostream& os, const char* title,
                           const std::vector<GroupAgg>& groups) {
  os << "## " << title << "\n\n";
  os << "| group | metric | n | mean delta | median delta | mean small delta"
        " | median small delta |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const GroupAgg& g : groups)
    for (size_t m = 0; m < 3; ++m)
      os << "| " << g.key << " | " << EvalRecord::kMetricNames[m] << " | "
         << g.n << " | " << md_num(g.mean_delta[m]) << " | "
         << md_num(g.median_delta[m]) << " | " << md_num(g.mean_small_delta[m])
         << " | " << md_num(g.median_small_delta[m]) << " |\n";
  os << '\n';
}

}  // namespace detail

inline void write_markdown_summary(std::ostream& os, const Summary& s) {
  os << "# Benchmark summary\n\n";
  detail::md_group_table(os, "By codec and attack", s.by_codec_attack);
  detail::md_group_table(os, "By codec and objective", s.by_codec_objective);
  detail::md_group_table(os, "By codec and defense", s.by_codec_defense);
  os << "## Correlations\n\n";
  os << "- Spearman(params, mean small delta psnr): "
     << detail::md_num(s.params_vs_effect_spearman) << '\n';
  for (size_t m = 0; m < 3; ++m)
    os << "- Spearman(delta, small delta) [" << EvalRecord::kMetricNames[m]
       << "]: " << detail::md_num(s.delta_vs_small_delta_spearman[m]) << '\n';
}

}  // namespace nrb

#endif  // NRB_BENCH_REPORT_HPP_
