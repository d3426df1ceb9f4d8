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

#ifndef FEDCVU_TESTS_SUPPORT_GRADCHECK_H_
#define FEDCVU_TESTS_SUPPORT_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fedcvu/nn/block_net.h"

namespace fedcvu::testing {

// |a - n| / max(|a|, |n|, floor). Central differences at step 1e-5 carry
// ~1e-10 of round-off, so gradients that are exactly zero analytically (e.g.
// a bias feeding batch norm) need a floor well above that.
inline double RelativeError(double analytic, double numeric,
                            double floor = 1e-6) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

enum class Stencil { kThreePoint, kFivePoint };

// Central differences of `loss` w.r.t. every trainable parameter of `net`,
// compared against `grads`. Returns the worst relative error. The five-point
// stencil has O(h^4) truncation, so a larger step keeps round-off down when
// the loss itself is large.
inline double MaxParameterGradError(
    const nn::BlockNet<double>& net, const nn::BlockNet<double>& grads,
    const std::function<double(const nn::BlockNet<double>&)>& loss,
    double step = 1e-5, Stencil stencil = Stencil::kThreePoint) {
  std::vector<std::span<const double>> analytic;
  grads.ForEachParameter([&](const nn::ParamInfo&, std::span<const double> g) {
    analytic.push_back(g);
  });
  nn::BlockNet<double> probe = net;
  std::vector<std::span<double>> params;
  probe.ForEachParameter(
      [&](const nn::ParamInfo&, std::span<double> p) { params.push_back(p); });
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].size(); ++j) {
      const double saved = params[t][j];
      auto at = [&](double offset) {
        params[t][j] = saved + offset;
        return loss(probe);
      };
      double numeric = 0.0;
      if (stencil == Stencil::kThreePoint) {
        numeric = (at(step) - at(-step)) / (2 * step);
      } else {
        numeric = (8 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) /
                  (12 * step);
      }
      params[t][j] = saved;
      worst = std::max(worst, RelativeError(analytic[t][j], numeric));
    }
  }
  return worst;
}

// Central differences of a scalar function of a flat vector.
inline double MaxVectorGradError(
    std::vector<double> x, const std::vector<double>& analytic,
    const std::function<double(const std::vector<double>&)>& f,
    double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = x[j];
    x[j] = saved + step;
    const double up = f(x);
    x[j] = saved - step;
    const double down = f(x);
    x[j] = saved;
    worst = std::max(worst, RelativeError(analytic[j], (up - down) / (2 * step)));
  }
  return worst;
}

}  // namespace fedcvu::testing

#endif  // FEDCVU_TESTS_SUPPORT_GRADCHECK_H_
