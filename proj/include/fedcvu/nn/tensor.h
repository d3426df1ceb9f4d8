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

#ifndef FEDCVU_NN_TENSOR_H_
#define FEDCVU_NN_TENSOR_H_

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "fedcvu/errors.h"

namespace fedcvu::nn {

// Dense tensors are rank-2 row-major matrices: [batch, features] for
// activations, [out, in] for weights. Rank-1 parameters are column vectors.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename Derived>
bool AllFinite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

template <typename Derived>
void CheckFinite(const Eigen::DenseBase<Derived>& x, const std::string& what) {
  if (!x.allFinite()) throw NumericError("non-finite values in " + what);
}

}  // namespace fedcvu::nn

#endif  // FEDCVU_NN_TENSOR_H_
