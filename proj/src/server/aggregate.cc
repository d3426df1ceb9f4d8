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

#include "fedcvu/server/aggregate.h"

#include <algorithm>
#include <string>

#include "fedcvu/errors.h"

namespace fedcvu::server {
namespace {

using BlockMap = std::map<int, std::vector<float>>;

std::vector<float> Blend(const std::vector<float>& current,
                         std::span<const client::ClientUpdate* const> updates,
                         const BlockMap client::ClientUpdate::*field, int id,
                         double total, double w) {
  std::vector<double> mean(current.size(), 0.0);
  for (const auto* u : updates) {
    const auto& map = u->*field;
    auto it = map.find(id);
    if (it == map.end()) {
      throw ProtocolError("client " + std::to_string(u->client_id) +
                          " did not upload block " + std::to_string(id));
    }
    if (it->second.size() != current.size()) {
      throw ProtocolError("block " + std::to_string(id) + " size mismatch from client " +
                          std::to_string(u->client_id));
    }
    const double weight = static_cast<double>(u->n) / total;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] += weight * static_cast<double>(it->second[j]);
    }
  }
  std::vector<float> out(current.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = w == 1.0 ? static_cast<float>(mean[j])
                      : static_cast<float>((1.0 - w) * static_cast<double>(current[j]) +
                                           w * mean[j]);
  }
  return out;
}

}  // namespace

void Aggregate(GlobalModel& global,
               std::span<const client::ClientUpdate* const> updates,
               std::span<const double> effective_weight, bool include_norm) {
  auto& net = global.net;
  if (static_cast<int>(effective_weight.size()) != net.dims.block_count()) {
    throw ConfigError("aggregation weights must cover every block");
  }
  if (updates.empty()) throw ProtocolError("no client updates to aggregate");
  std::vector<const client::ClientUpdate*> ordered(updates.begin(), updates.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });
  double total = 0.0;
  for (const auto* u : ordered) total += static_cast<double>(u->n);
  if (!(total > 0)) throw ProtocolError("total sample count must be positive");

  for (int id = 0; id < net.dims.block_count(); ++id) {
    const double w = effective_weight[static_cast<std::size_t>(id)];
    if (w == 0.0) continue;
    auto rest = Blend(net.FlattenBlock(id, nn::Partition::kRest), ordered,
                      &client::ClientUpdate::rest, id, total, w);
    net.UnflattenBlock(id, rest, nn::Partition::kRest);
    if (include_norm && net.BlockSize(id, nn::Partition::kNorm) > 0) {
      auto norm = Blend(net.FlattenBlock(id, nn::Partition::kNorm), ordered,
                        &client::ClientUpdate::norm, id, total, w);
      net.UnflattenBlock(id, norm, nn::Partition::kNorm);
    }
  }
}

}  // namespace fedcvu::server
