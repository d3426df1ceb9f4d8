// Copyright 2026 The FedCVU Authors.
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
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDCVU_HARNESS_CONVERGENCE_H_
#define FEDCVU_HARNESS_CONVERGENCE_H_

#include <optional>
#include <span>

namespace fedcvu::harness {

struct ConvergenceResult {
  std::optional<int> r_star;  // 1-based round
  double best = 0.0;          // best smoothed value
  int window = 5;
};

// Trailing moving average over `window` rounds; R* is the first round whose
// smoothed value reaches (1 - rel_tol) of the best smoothed value. Empty
// when the series is shorter than the window.
ConvergenceResult DetectConvergence(std::span<const double> series, int window = 5,
                                    double rel_tol = 0.01);

}  // namespace fedcvu::harness

#endif  // FEDCVU_HARNESS_CONVERGENCE_H_
