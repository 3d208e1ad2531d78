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

#ifndef NRB_CORE_DIAG_HPP_
#define NRB_CORE_DIAG_HPP_

#include <atomic>
#include <cstdint>

namespace nrb {

// Process-wide counters for conditions that are handled silently but worth
// surfacing in logs and selftest output. Monotonic; reset only via reset().
struct DiagCounters {
  std::atomic<uint64_t> msssim_scales_reduced{0};
  std::atomic<uint64_t> likelihood_floored{0};
  std::atomic<uint64_t> wilcoxon_all_zero{0};

  void reset() {
    msssim_scales_reduced = 0;
    likelihood_floored = 0;
    wilcoxon_all_zero = 0;
  }
};

inline DiagCounters& diag() {
  static DiagCounters d;
  return d;
}

}  // namespace nrb

#endif  // NRB_CORE_DIAG_HPP_
