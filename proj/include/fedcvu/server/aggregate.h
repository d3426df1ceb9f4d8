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

#ifndef FEDCVU_SERVER_AGGREGATE_H_
#define FEDCVU_SERVER_AGGREGATE_H_

#include <span>
#include <vector>

#include "fedcvu/client/client.h"

namespace fedcvu::server {

// Server-held model. Norm tensors in `net` are the reference copy used to
// seed clients and for pooled evaluation.
struct GlobalModel {
  client::Net net;
};

// theta <- (1 - w) * theta + w * sum_c (n_c / N) * theta_c per block, in
// double, in ascending client-id order. Blocks with w == 0 are left untouched and
// w == 1 assigns the weighted mean directly. With include_norm the norm
// tensors of each block follow the same rule. Throws ProtocolError when a
// client lacks a block that must be aggregated.
void Aggregate(GlobalModel& global,
               std::span<const client::ClientUpdate* const> updates,
               std::span<const double> effective_weight, bool include_norm);

}  // namespace fedcvu::server

#endif  // FEDCVU_SERVER_AGGREGATE_H_
