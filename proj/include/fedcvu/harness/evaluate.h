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

#ifndef FEDCVU_HARNESS_EVALUATE_H_
#define FEDCVU_HARNESS_EVALUATE_H_

#include <cstdint>
#include <limits>
#include <span>

#include "fedcvu/data/synth.h"
#include "fedcvu/harness/config.h"
#include "fedcvu/nn/block_net.h"
#include "fedcvu/server/round.h"

namespace fedcvu::harness {

struct TopKAccuracy {
  double top1 = 0.0;  // percent
  double top5 = 0.0;  // percent; top-min(5, K)
  std::int64_t n = 0;
};

// A sample counts as a top-k hit when fewer than k logits are strictly
// larger than its true-class logit. Throws ConfigError on empty input.
TopKAccuracy TopK(const nn::Matrix<float>& logits, std::span<const int> labels);

struct RetrievalMetrics {
  double map = 0.0;   // percent
  double cmc1 = 0.0;  // percent
};

// Cosine-similarity ranking of the gallery for every query. Queries with no
// matching gallery label are skipped. Ties keep gallery order.
RetrievalMetrics Retrieval(const nn::Matrix<float>& query, std::span<const int> query_labels,
                           const nn::Matrix<float>& gallery,
                           std::span<const int> gallery_labels);

struct EvalMetrics {
  double seen_top1 = 0.0;
  double seen_top5 = 0.0;
  double unseen_top1 = 0.0;
  double unseen_top5 = 0.0;
  double map = std::numeric_limits<double>::quiet_NaN();
  double cmc1 = std::numeric_limits<double>::quiet_NaN();
};

// Elementwise mean of norm states, accumulated in double.
nn::NormState<float> MeanNormState(std::span<const nn::NormState<float>* const> states);

// Network used for views no client owns: the global model with the mean
// client norm tensors (VS-Norm) or its own norm tensors, optionally with
// running statistics recomputed from `unseen` as one batch.
client::Net UnseenViewNet(const server::Federation& fed, UnseenNorm mode,
                          const nn::Matrix<float>& unseen);

// Seen accuracy is the mean over clients of each client's accuracy on its
// own view's test split, using that client's norm tensors under VS-Norm.
// Nothing in `fed` is modified.
EvalMetrics Evaluate(const server::Federation& fed, const data::Splits& splits,
                     UnseenNorm mode);

}  // namespace fedcvu::harness

#endif  // FEDCVU_HARNESS_EVALUATE_H_
