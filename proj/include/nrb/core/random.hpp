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

#include <cstdint>
#include <random>
#include <string_view>

#include "nrb/core/array.hpp"

namespace nrb {

// FNV-1a, used to derive per-cell seeds from (global seed, cell key). Stable
// across platforms, unlike std::hash.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return fnv1a(tag, h);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t n) {
  // splitmix64 finalizer over the xor; decorrelates consecutive counters.
  uint64_t z = seed ^ (n + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// All randomness in the library flows through explicitly seeded instances of
// this; std::random_device is never used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  real uniform(real lo = 0, real hi = 1) {
    std::uniform_real_distribution<real> d(lo, hi);
    return d(gen_);
  }
  real normal(real mean = 0, real stddev = 1) {
    std::normal_distribution<real> d(mean, stddev);
    return d(gen_);
  }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }

  NdArray uniform_array(std::vector<int> shape, real lo, real hi) {
    NdArray a(std::move(shape));
    for (real& v : a.data) v = uniform(lo, hi);
    return a;
  }
  NdArray normal_array(std::vector<int> shape, real mean, real stddev) {
    NdArray a(std::move(shape));
    for (real& v : a.data) v = normal(mean, stddev);
    return a;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace nrb
