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

#ifndef FEDCVU_NN_NORM_LAYER_H_
#define FEDCVU_NN_NORM_LAYER_H_

#include "fedcvu/nn/tensor.h"

namespace fedcvu::nn {

enum class NormKind { kBatch, kLayer };
enum class Mode { kTrain, kEval };

// Affine normalization layer. Batch kind keeps running statistics that are
// used in eval mode; layer kind normalizes each row over its features and
// leaves running_mean / running_var empty.
template <typename T>
struct NormLayer {
  NormKind kind = NormKind::kBatch;
  Vector<T> gamma;
  Vector<T> beta;
  Vector<T> running_mean;
  Vector<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);

  // gamma = 1, beta = 0, running stats (0, 1).
  static NormLayer Identity(NormKind kind, int width);

  int width() const { return static_cast<int>(gamma.size()); }
  bool has_running_stats() const { return kind == NormKind::kBatch; }
};

template <typename T>
struct NormCache {
  Mode mode = Mode::kTrain;
  Matrix<T> x_hat;
  // Per feature for batch kind, per row for layer kind.
  Vector<T> inv_std;
};

template <typename T>
struct NormGrads {
  Matrix<T> dx;
  Vector<T> dgamma;
  Vector<T> dbeta;
};

// y = gamma * (x - mean) / sqrt(var + eps) + beta.
// Batch kind, train mode: batch statistics (biased variance) are used and the
// running statistics move toward them by `momentum`. Batch kind, eval mode:
// running statistics, nothing is mutated. Layer kind: per-row statistics.
// Throws NumericError on non-finite input, ConfigError on width mismatch and
// DegenerateBatchError for a train-mode batch norm over fewer than 2 rows.
template <typename T>
Matrix<T> NormApply(NormLayer<T>& layer, const Matrix<T>& x, Mode mode,
                    NormCache<T>* cache = nullptr);

// Eval-mode application on a const layer.
template <typename T>
Matrix<T> NormApplyEval(const NormLayer<T>& layer, const Matrix<T>& x,
                        NormCache<T>* cache = nullptr);

template <typename T>
NormGrads<T> NormBackward(const NormLayer<T>& layer, const NormCache<T>& cache,
                          const Matrix<T>& dy);

}  // namespace fedcvu::nn

#endif  // FEDCVU_NN_NORM_LAYER_H_
