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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nrb/core/error.hpp"

namespace nrb {

// One floating point width everywhere; tolerances in the tests assume at
// least 32-bit, double gives them margin.
using real = double;

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major array. Images are (H, W, C) with C = 3 and values in [0,1];
// conv weights are (kh, kw, cin, cout).
struct NdArray {
  std::vector<int> shape;
  std::vector<real> data;
  bool requires_grad = false;

  NdArray() = default;
  explicit NdArray(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), real(0));
  }
  NdArray(std::vector<int> s, real fill) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      check(d >= 0, "NdArray: negative extent in shape ", shape_str(s));
      n *= d;
    }
    return n;
  }

  static NdArray zeros(std::vector<int> s) { return NdArray(std::move(s)); }
  static NdArray full(std::vector<int> s, real v) { return NdArray(std::move(s), v); }
  static NdArray scalar(real v) { return NdArray({1}, v); }
  static NdArray from(std::vector<int> s, std::vector<real> d) {
    NdArray a;
    a.shape = std::move(s);
    check(static_cast<int64_t>(d.size()) == numel_of(a.shape),
          "NdArray::from: data size ", d.size(), " does not match shape ",
          shape_str(a.shape));
    a.data = std::move(d);
    return a;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // (H, W, C) accessors; only valid for rank-3 arrays.
  int h() const { return shape[0]; }
  int w() const { return shape[1]; }
  int c() const { return shape[2]; }
  int64_t idx3(int y, int x, int ch) const {
    return (static_cast<int64_t>(y) * shape[1] + x) * shape[2] + ch;
  }
  real& at3(int y, int x, int ch) { return data[static_cast<size_t>(idx3(y, x, ch))]; }
  real at3(int y, int x, int ch) const { return data[static_cast<size_t>(idx3(y, x, ch))]; }

  bool same_shape(const NdArray& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (real v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline real min_value(const NdArray& a) {
  real m = a.data.empty() ? real(0) : a.data[0];
  for (real v : a.data) m = std::min(m, v);
  return m;
}

inline real max_value(const NdArray& a) {
  real m = a.data.empty() ? real(0) : a.data[0];
  for (real v : a.data) m = std::max(m, v);
  return m;
}

inline real linf_distance(const NdArray& a, const NdArray& b) {
  check(a.same_shape(b), "linf_distance: shape mismatch ", shape_str(a.shape),
        " vs ", shape_str(b.shape));
  real m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline real dot(const NdArray& a, const NdArray& b) {
  check(a.same_shape(b), "dot: shape mismatch ", shape_str(a.shape), " vs ",
        shape_str(b.shape));
  real s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline real l2_norm(const NdArray& a) { return std::sqrt(dot(a, a)); }

}  // namespace nrb
