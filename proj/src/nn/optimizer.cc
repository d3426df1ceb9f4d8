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

#include "fedcvu/nn/optimizer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

namespace fedcvu::nn {

template <typename T>
double OptState<T>::CurrentLr() const {
  if (config.total_steps <= 0) return config.lr;
  const double progress =
      std::min(1.0, static_cast<double>(step) /
                        static_cast<double>(config.total_steps));
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void OptimizerStep(OptState<T>& opt, BlockNet<T>& net,
                   const BlockNet<T>& grads) {
  std::vector<std::span<const T>> grad_spans;
  std::vector<bool> frozen;
  grads.ForEachParameter([&](const ParamInfo& info, std::span<const T> g) {
    grad_spans.push_back(g);
    frozen.push_back(info.tag == Partition::kNorm && !opt.config.norm_trainable);
  });

  std::vector<std::span<T>> params;
  net.ForEachParameter(
      [&](const ParamInfo&, std::span<T> p) { params.push_back(p); });
  if (params.size() != grad_spans.size()) {
    throw ConfigError("optimizer: gradient tensors do not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grad_spans[i].size()) {
      throw ConfigError("optimizer: gradient shape mismatch");
    }
  }

  const double lr = opt.CurrentLr();
  const double wd = opt.config.weight_decay;
  opt.step += 1;

  if (opt.config.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (frozen[i]) continue;
      auto p = params[i];
      auto g = grad_spans[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] -= static_cast<T>(lr * (static_cast<double>(g[j]) +
                                     wd * static_cast<double>(p[j])));
      }
    }
    return;
  }

  if (opt.first_moment.empty()) {
    for (auto p : params) {
      opt.first_moment.emplace_back(p.size(), T(0));
      opt.second_moment.emplace_back(p.size(), T(0));
    }
  }
  const double b1 = opt.config.beta1;
  const double b2 = opt.config.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  const T decay = static_cast<T>(1.0 - lr * wd);
  const T step_size = static_cast<T>(lr / bias1);
  const T inv_bias2 = static_cast<T>(1.0 / bias2);
  const T eps = static_cast<T>(opt.config.eps);
  const T c1 = static_cast<T>(1.0 - b1);
  const T c2 = static_cast<T>(1.0 - b2);
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen[i]) continue;
    const auto n = static_cast<Eigen::Index>(params[i].size());
    Eigen::Map<Arr> p(params[i].data(), n);
    Eigen::Map<const Arr> g(grad_spans[i].data(), n);
    Eigen::Map<Arr> m(opt.first_moment[i].data(), n);
    Eigen::Map<Arr> v(opt.second_moment[i].data(), n);
    m = static_cast<T>(b1) * m + c1 * g;
    v = static_cast<T>(b2) * v + c2 * g.square();
    p = p * decay - step_size * m / ((v * inv_bias2).sqrt() + eps);
  }
}

template struct OptState<float>;
template struct OptState<double>;
template void OptimizerStep(OptState<float>&, BlockNet<float>&,
                            const BlockNet<float>&);
template void OptimizerStep(OptState<double>&, BlockNet<double>&,
                            const BlockNet<double>&);

}  // namespace fedcvu::nn
