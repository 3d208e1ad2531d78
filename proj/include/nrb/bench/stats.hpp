// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_BENCH_STATS_HPP_
#define NRB_BENCH_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "nrb/core/diag.hpp"
#include "nrb/core/error.hpp"

namespace nrb {

namespace detail {

// Average ranks (1-based), doubled so tied groups stay integral: a group
// occupying positions i+1..j+1 shares the doubled rank (i+1) + (j+1).
inline std::vector<int> doubled_average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&v](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<int> dr(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const int doubled = static_cast<int>(i + j + 2);
    for (size_t k = i; k <= j; ++k) dr[idx[k]] = doubled;
    i = j + 1;
  }
  return dr;
}

// P(W+ >= w2/2) by dynamic programming over doubled-rank subset sums; exact
// because every sign pattern is counted once (2^n <= 2^20 fits uint64).
inline double wilcoxon_exact_tail(const std::vector<int>& doubled_ranks,
                                  int64_t w2) {
  int64_t total = 0;
  for (int r : doubled_ranks) total += r;
  std::vector<uint64_t> dp(static_cast<size_t>(total) + 1, 0);
  dp[0] = 1;
  for (int r : doubled_ranks)
    for (int64_t s = total; s >= r; --s)
      dp[static_cast<size_t>(s)] += dp[static_cast<size_t>(s - r)];
  uint64_t count = 0;
  for (int64_t s = std::max<int64_t>(w2, 0); s <= total; ++s)
    count += dp[static_cast<size_t>(s)];
  return static_cast<double>(count) /
         std::ldexp(1.0, static_cast<int>(doubled_ranks.size()));
}

// Upper-tail normal approximation with tie correction and a 0.5 continuity
// correction.
inline double wilcoxon_normal_tail(const std::vector<int>& doubled_ranks,
                                   int64_t w2) {
  const double n = static_cast<double>(doubled_ranks.size());
  std::map<int, int> groups;
  for (int r : doubled_ranks) ++groups[r];
  double tie_term = 0.0;
  for (const auto& [rank, t] : groups)
    tie_term += static_cast<double>(t) * t * t - t;
  const double mean = n * (n + 1) / 4.0;
  const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  check(var > 0, "wilcoxon: degenerate variance (all ranks tied away)");
  const double w = static_cast<double>(w2) / 2.0;
  const double z = (w - mean - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace detail

// One-sided Wilcoxon signed-rank test of "a tends to exceed b" on paired
// samples: small p means the positive differences dominate. Zero differences
// are dropped (classic convention); ties in |d| get average ranks. Exact
// enumeration up to n = 20 pairs, normal approximation beyond.
inline double wilcoxon_one_sided(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  check(a.size() == b.size(), "wilcoxon: paired samples differ in length (",
        a.size(), " vs ", b.size(), ")");
  check(a.size() >= 5, "wilcoxon: need at least 5 pairs, got ", a.size());
  std::vector<double> d;
  d.reserve(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const double di = a[i] - b[i];
    if (di != 0.0) d.push_back(di);
  }
  if (d.empty()) {
    diag().wilcoxon_all_zero.fetch_add(1);
    return 1.0;  // no evidence in either direction
  }
  std::vector<double> absd(d.size());
  for (size_t i = 0; i < d.size(); ++i) absd[i] = std::abs(d[i]);
  const std::vector<int> dr = detail::doubled_average_ranks(absd);
  int64_t w2 = 0;
  for (size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) w2 += dr[i];
  return d.size() <= 20 ? detail::wilcoxon_exact_tail(dr, w2)
                        : detail::wilcoxon_normal_tail(dr, w2);
}

// Bonferroni adjustment for m hypotheses: min(1, p*m) elementwise.
inline std::vector<double> bonferroni(const std::vector<double>& pvals, int m) {
  check(m >= 1, "bonferroni: hypothesis count must be positive");
  std::vector<double> out(pvals.size());
  for (size_t i = 0; i < pvals.size(); ++i)
    out[i] = std::min(1.0, pvals[i] * m);
  return out;
}

// Tie-aware Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y) {
  check(x.size() == y.size(), "spearman: inputs differ in length (", x.size(),
        " vs ", y.size(), ")");
  check(x.size() >= 3, "spearman: need at least 3 points, got ", x.size());
  const std::vector<int> rx = detail::doubled_average_ranks(x);
  const std::vector<int> ry = detail::doubled_average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0, vx = 0, vy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  check(vx > 0 && vy > 0, "spearman: constant input has no rank ordering");
  return cov / std::sqrt(vx * vy);
}

}  // namespace nrb

#endif  // NRB_BENCH_STATS_HPP_
