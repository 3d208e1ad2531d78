// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_BENCH_RECORD_HPP_
#define NRB_BENCH_RECORD_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "nrb/core/error.hpp"

namespace nrb {

// One evaluation-grid cell. Doubles default to NaN ("absent"), which the
// CSV writes as an empty field and JSON as null; the error field is empty
// for successful cells. Quality fields are indexed [pair][metric] with the
// pair order below and metrics ordered mse, psnr, ms_ssim.
struct EvalRecord {
  static constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();
  static constexpr const char* kPairNames[4] = {"x_xadv", "cx_cxadv", "x_cx",
                                                "xadv_cxadv"};
  static constexpr const char* kMetricNames[3] = {"mse", "psnr", "ms_ssim"};

  std::string image, codec, variant, attack, objective, defense;
  double epsilon = kAbsent;
  int steps = 0;
  double lr = kAbsent;
  int queries_used = 0;
  std::array<std::array<double, 3>, 4> quality{
      {{kAbsent, kAbsent, kAbsent},
       {kAbsent, kAbsent, kAbsent},
       {kAbsent, kAbsent, kAbsent},
       {kAbsent, kAbsent, kAbsent}}};
  std::array<double, 3> delta{kAbsent, kAbsent, kAbsent};
  std::array<double, 3> small_delta{kAbsent, kAbsent, kAbsent};
  double bpp_clean = kAbsent, bpp_adv = kAbsent, delta_bpp = kAbsent;
  double compress_time_ms = kAbsent, attack_time_ms = kAbsent;
  uint64_t param_count = 0;
  std::string error;
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// 17 significant digits: enough for doubles to survive a text round trip.
inline std::string csv_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const char* col) {
  if (s.empty()) return EvalRecord::kAbsent;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  check(end == s.c_str() + s.size(), "results csv: bad number '", s,
        "' in column ", col);
  return v;
}

inline long long parse_int(const std::string& s, const char* col) {
  if (s.empty()) return 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  check(end == s.c_str() + s.size(), "results csv: bad integer '", s,
        "' in column ", col);
  return v;
}

// Full CSV grammar: quoted fields may contain commas, doubled quotes, and
// newlines. Blank unquoted lines are skipped.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& is) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cur;
  bool quoted = false;
  bool pending = false;  // current row has content not yet emitted
  char c;
  while (is.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          cur += '"';
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        pending = true;
        break;
      case ',':
        row.push_back(std::move(cur));
        cur.clear();
        pending = true;
        break;
      case '\r':
        break;
      case '\n':
        if (pending || !cur.empty()) {
          row.push_back(std::move(cur));
          cur.clear();
          rows.push_back(std::move(row));
          row.clear();
          pending = false;
        }
        break;
      default:
        cur += c;
        pending = true;
        break;
    }
  }
  check(!quoted, "results csv: unterminated quoted field");
  if (pending || !cur.empty()) {
    row.push_back(std::move(cur));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"image",   "codec",     "variant",
                                  "attack",  "objective", "defense",
                                  "epsilon", "steps",     "lr",
                                  "queries_used"};
    for (const char* pair : EvalRecord::kPairNames)
      for (const char* metric : EvalRecord::kMetricNames)
        c.push_back(std::string(metric) + "_" + pair);
    for (const char* metric : EvalRecord::kMetricNames)
      c.push_back(std::string("delta_") + metric);
    for (const char* metric : EvalRecord::kMetricNames)
      c.push_back(std::string("small_delta_") + metric);
    c.insert(c.end(), {"bpp_clean", "bpp_adv", "delta_bpp",
                       "compress_time_ms", "attack_time_ms", "param_count",
                       "error"});
    return c;
  }();
  return cols;
}

// Lexicographic cell-key order; makes outputs diffable regardless of the
// execution schedule.
inline void canonical_sort(std::vector<EvalRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) {
              return std::tie(a.image, a.codec, a.variant, a.attack,
                              a.objective, a.defense) <
                     std::tie(b.image, b.codec, b.variant, b.attack,
                              b.objective, b.defense);
            });
}

inline void write_csv(std::ostream& os, const std::vector<EvalRecord>& records) {
  const auto& cols = csv_columns();
  for (size_t i = 0; i < cols.size(); ++i)
    os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const EvalRecord& r : records) {
    std::vector<std::string> cells;
    cells.reserve(cols.size());
    for (const std::string& s : {r.image, r.codec, r.variant, r.attack,
                                 r.objective, r.defense})
      cells.push_back(detail::csv_escape(s));
    cells.push_back(detail::csv_double(r.epsilon));
    cells.push_back(std::to_string(r.steps));
    cells.push_back(detail::csv_double(r.lr));
    cells.push_back(std::to_string(r.queries_used));
    for (const auto& pair : r.quality)
      for (double v : pair) cells.push_back(detail::csv_double(v));
    for (double v : r.delta) cells.push_back(detail::csv_double(v));
    for (double v : r.small_delta) cells.push_back(detail::csv_double(v));
    cells.push_back(detail::csv_double(r.bpp_clean));
    cells.push_back(detail::csv_double(r.bpp_adv));
    cells.push_back(detail::csv_double(r.delta_bpp));
    cells.push_back(detail::csv_double(r.compress_time_ms));
    cells.push_back(detail::csv_double(r.attack_time_ms));
    cells.push_back(std::to_string(r.param_count));
    cells.push_back(detail::csv_escape(r.error));
    for (size_t i = 0; i < cells.size(); ++i)
      os << (i ? "," : "") << cells[i];
    os << '\n';
  }
}

inline std::vector<EvalRecord> read_csv(std::istream& is) {
  const auto& cols = csv_columns();
  const std::vector<std::vector<std::string>> rows = detail::parse_csv(is);
  check(!rows.empty(), "results csv: empty input");
  check(rows.front() == cols, "results csv: unexpected header");

  std::vector<EvalRecord> out;
  for (size_t ri = 1; ri < rows.size(); ++ri) {
    const std::vector<std::string>& cells = rows[ri];
    check(cells.size() == cols.size(), "results csv: row with ", cells.size(),
          " fields, expected ", cols.size());
    EvalRecord r;
    size_t i = 0;
    r.image = cells[i++];
    r.codec = cells[i++];
    r.variant = cells[i++];
    r.attack = cells[i++];
    r.objective = cells[i++];
    r.defense = cells[i++];
    r.epsilon = detail::parse_double(cells[i++], "epsilon");
    r.steps = static_cast<int>(detail::parse_int(cells[i++], "steps"));
    r.lr = detail::parse_double(cells[i++], "lr");
    r.queries_used =
        static_cast<int>(detail::parse_int(cells[i++], "queries_used"));
    for (auto& pair : r.quality)
      for (double& v : pair) v = detail::parse_double(cells[i++], "quality");
    for (double& v : r.delta) v = detail::parse_double(cells[i++], "delta");
    for (double& v : r.small_delta)
      v = detail::parse_double(cells[i++], "small_delta");
    r.bpp_clean = detail::parse_double(cells[i++], "bpp_clean");
    r.bpp_adv = detail::parse_double(cells[i++], "bpp_adv");
    r.delta_bpp = detail::parse_double(cells[i++], "delta_bpp");
    r.compress_time_ms =
        detail::parse_double(cells[i++], "compress_time_ms");
    r.attack_time_ms = detail::parse_double(cells[i++], "attack_time_ms");
    r.param_count =
        static_cast<uint64_t>(detail::parse_int(cells[i++], "param_count"));
    r.error = cells[i++];
    out.push_back(std::move(r));
  }
  return out;
}

// JSON mirror of a record; NaN fields serialize as null.
inline nlohmann::json record_to_json(const EvalRecord& r) {
  nlohmann::json j;
  j["image"] = r.image;
  j["codec"] = r.codec;
  j["variant"] = r.variant;
  j["attack"] = r.attack;
  j["objective"] = r.objective;
  j["defense"] = r.defense;
  j["epsilon"] = r.epsilon;
  j["steps"] = r.steps;
  j["lr"] = r.lr;
  j["queries_used"] = r.queries_used;
  for (int p = 0; p < 4; ++p)
    for (int m = 0; m < 3; ++m)
      j[std::string(EvalRecord::kMetricNames[m]) + "_" +
        EvalRecord::kPairNames[p]] =
          r.quality[static_cast<size_t>(p)][static_cast<size_t>(m)];
  for (int m = 0; m < 3; ++m) {
    j[std::string("delta_") + EvalRecord::kMetricNames[m]] =
        r.delta[static_cast<size_t>(m)];
    j[std::string("small_delta_") + EvalRecord::kMetricNames[m]] =
        r.small_delta[static_cast<size_t>(m)];
  }
  j["bpp_clean"] = r.bpp_clean;
  j["bpp_adv"] = r.bpp_adv;
  j["delta_bpp"] = r.delta_bpp;
  j["compress_time_ms"] = r.compress_time_ms;
  j["attack_time_ms"] = r.attack_time_ms;
  j["param_count"] = r.param_count;
  j["error"] = r.error;
  return j;
}

inline void write_jsonl(std::ostream& os,
                        const std::vector<EvalRecord>& records) {
  for (const EvalRecord& r : records) os << record_to_json(r).dump() << '\n';
}

}  // namespace nrb

#endif  // NRB_BENCH_RECORD_HPP_
