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

#ifndef FEDCVU_NN_OPTIMIZER_H_
#define FEDCVU_NN_OPTIMIZER_H_

#include <cstdint>
#include <vector>

#include "fedcvu/nn/block_net.h"

namespace fedcvu::nn {

enum class OptimizerKind { kSgd, kAdamW };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Horizon of the cosine schedule; 0 keeps the learning rate constant.
  std::int64_t total_steps = 0;
  // When false, norm gamma/beta are left untouched by the optimizer.
  bool norm_trainable = true;
};

// Optimizer state for one net. Moment buffers follow
// BlockNet::ForEachParameter order and are allocated on the first step.
template <typename T>
struct OptState {
  OptimizerConfig config;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::int64_t step = 0;

  OptState() = default;
  explicit OptState(const OptimizerConfig& c) : config(c) {}

  // lr * 0.5 * (1 + cos(pi * step / total_steps)) for the step about to run.
  double CurrentLr() const;
};

// sgd:   p -= lr * (g + wd * p)
// adamw: p *= (1 - lr * wd); p -= lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void OptimizerStep(OptState<T>& opt, BlockNet<T>& net, const BlockNet<T>& grads);

}  // namespace fedcvu::nn

#endif  // FEDCVU_NN_OPTIMIZER_H_
