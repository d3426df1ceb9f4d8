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

#include "fedcvu/nn/loss.h"

#include <cmath>
#include <string>

namespace fedcvu::nn {

template <typename T>
Matrix<T> Softmax(const Matrix<T>& logits) {
  Matrix<T> p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

template <typename T>
LossResult<T> CrossEntropy(const Matrix<T>& logits,
                           std::span<const int> labels) {
  const auto rows = logits.rows();
  if (static_cast<std::size_t>(rows) != labels.size() || rows == 0) {
    throw ConfigError("cross entropy: " + std::to_string(rows) +
                      " rows but " + std::to_string(labels.size()) + " labels");
  }
  LossResult<T> out;
  out.grad = Softmax(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) {
      throw ConfigError("label " + std::to_string(y) + " out of range");
    }
    // log p_y = z_y - max - log sum exp(z - max)
    const T max = logits.row(i).maxCoeff();
    const T lse =
        std::log((logits.row(i).array() - max).exp().sum()) + max;
    total += static_cast<double>(lse - logits(i, y));
    out.grad(i, y) -= T(1);
  }
  out.grad /= static_cast<T>(rows);
  out.loss = total / static_cast<double>(rows);
  return out;
}

template Matrix<float> Softmax(const Matrix<float>&);
template Matrix<double> Softmax(const Matrix<double>&);
template LossResult<float> CrossEntropy(const Matrix<float>&,
                                        std::span<const int>);
template LossResult<double> CrossEntropy(const Matrix<double>&,
                                         std::span<const int>);

}  // namespace fedcvu::nn
