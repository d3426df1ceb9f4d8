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

#ifndef FEDCVU_CLIENT_CV_ALIGN_H_
#define FEDCVU_CLIENT_CV_ALIGN_H_

#include <span>
#include <vector>

#include "fedcvu/nn/tensor.h"

namespace fedcvu::client {

using nn::Matrix;

// Read-only view of the broadcast prototype bank.
struct PrototypeView {
  const Matrix<double>& z;               // [K, d]
  const std::vector<bool>& initialized;  // [K]
};

template <typename T>
struct CvAlignResult {
  double loss = 0.0;
  Matrix<T> grad;    // d loss / d h, [B, d]
  int counted = 0;   // samples whose label prototype is initialized
  bool inactive = false;  // no initialized prototype at all
};

// Prototype contrastive loss with cosine similarity and temperature:
//   l_i = -log softmax_k( cos(h_i, z_k) / tau )[y_i]
// The softmax runs over initialized prototypes only; samples whose own
// prototype is uninitialized are skipped. Mean over counted samples.
// Throws ConfigError for tau <= 0 or shape mismatch.
template <typename T>
CvAlignResult<T> CvAlignLoss(const Matrix<T>& h, std::span<const int> labels,
                             const PrototypeView& bank, double tau);

}  // namespace fedcvu::client

#endif  // FEDCVU_CLIENT_CV_ALIGN_H_
