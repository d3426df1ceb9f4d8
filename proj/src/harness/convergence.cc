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

#include "fedcvu/harness/convergence.h"

#include <algorithm>
#include <vector>

#include "fedcvu/errors.h"

namespace fedcvu::harness {

ConvergenceResult DetectConvergence(std::span<const double> series, int window,
                                    double rel_tol) {
  if (window < 1) throw ConfigError("convergence window must be >= 1");
  ConvergenceResult result;
  result.window = window;
  const auto w = static_cast<std::size_t>(window);
  if (series.size() < w) return result;

  std::vector<double> smooth;
  for (std::size_t end = w; end <= series.size(); ++end) {
    double sum = 0.0;
    for (std::size_t i = end - w; i < end; ++i) sum += series[i];
    smooth.push_back(sum / static_cast<double>(w));
  }
  result.best = *std::max_element(smooth.begin(), smooth.end());
  const double target = (1.0 - rel_tol) * result.best;
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    if (smooth[i] >= target) {
      result.r_star = static_cast<int>(i + w);
      break;
    }
  }
  return result;
}

}  // namespace fedcvu::harness
