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

#ifndef FEDCVU_NN_LOSS_H_
#define FEDCVU_NN_LOSS_H_

#include <span>

#include "fedcvu/nn/tensor.h"

namespace fedcvu::nn {

template <typename T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> grad;  // d loss / d input, same shape as the input
};

// Mean softmax cross-entropy over the batch. Labels are 0-based.
template <typename T>
LossResult<T> CrossEntropy(const Matrix<T>& logits, std::span<const int> labels);

// Row-wise numerically stable softmax.
template <typename T>
Matrix<T> Softmax(const Matrix<T>& logits);

}  // namespace fedcvu::nn

#endif  // FEDCVU_NN_LOSS_H_
