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

#ifndef FEDCVU_CLIENT_CLIENT_H_
#define FEDCVU_CLIENT_CLIENT_H_

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "fedcvu/client/cv_align.h"
#include "fedcvu/client/signature.h"
#include "fedcvu/data/synth.h"
#include "fedcvu/nn/block_net.h"
#include "fedcvu/nn/optimizer.h"

namespace fedcvu::client {

using Net = nn::BlockNet<float>;

// Per-class embedding sums and counts; count == 0 implies a zero sum.
struct ClassStats {
  Matrix<double> sum;               // [K, d]
  std::vector<std::int64_t> count;  // [K]

  static ClassStats Zeros(int num_classes, int width);
  void Add(const Matrix<float>& embeddings, std::span<const int> labels);
  std::int64_t total() const;
};

struct LocalTrainConfig {
  int epochs = 5;
  int batch_size = 32;
  bool cv_align = true;
  double align_weight = 1.0;
  double tau_temp = 0.1;
  // FedProx coefficient; 0 disables the proximal term.
  double prox_mu = 0.0;
};

struct TrainTelemetry {
  double ce_loss = 0.0;     // mean over all local steps
  double align_loss = 0.0;  // mean over all local steps
  double prox_loss = 0.0;
  double accuracy = 0.0;    // final-epoch training accuracy in [0, 1]
  std::int64_t steps = 0;
  bool align_inactive = false;  // no initialized prototype was available
  bool batch_clamped = false;   // batch size exceeded the shard
};

struct ClientState {
  int client_id = 0;
  data::Shard shard;
  // Private copy of every norm-tagged tensor; never uploaded under VS-Norm.
  nn::NormState<float> local_norm;
  nn::OptState<float> opt;
  std::mt19937_64 rng;
  // Net after the previous local round; source of retained gated blocks.
  Net last_net;
  bool has_last_net = false;
};

ClientState MakeClient(data::Shard shard, const Net& initial,
                       const nn::OptimizerConfig& opt, std::uint64_t seed);

// Parameters sent to the server. Norm tensors appear only when VS-Norm is
// off (FedAvg-style aggregation of normalization layers).
struct ClientUpdate {
  int client_id = 0;
  std::int64_t n = 0;
  std::map<int, std::vector<float>> rest;  // block id -> rest params
  std::map<int, std::vector<float>> norm;  // block id -> norm params
  std::vector<LayerSignature> signatures;  // all blocks
  ClassStats stats;
  TrainTelemetry telemetry;
};

// Working net for this round: global rest tensors for non-gated blocks, the
// client's own previous tensors for gated ones; norm slots come from
// local_norm (vs_norm) or the global net. Gated blocks without a previous
// local net raise ProtocolError.
Net InstallGlobal(const ClientState& state, const Net& global,
                  const std::vector<bool>& gated, bool vs_norm);

struct LocalTrainResult {
  Net net;
  ClassStats stats;
  TrainTelemetry telemetry;
};

// E epochs of mini-batch training on CE (+ weighted CV-Align when enabled
// and a bank is given, + proximal term toward `prox_anchor` when prox_mu >
// 0). Each epoch shuffles the shard with state.rng and walks contiguous
// batches; with batch norm a trailing 1-sample batch is merged into the
// previous one. ClassStats come from the final epoch's train-mode
// embeddings. Updates state.local_norm, state.last_net and the optimizer.
LocalTrainResult LocalTrain(ClientState& state, Net working,
                            const PrototypeView* bank,
                            const LocalTrainConfig& config,
                            const Net* prox_anchor = nullptr);

// Rest (and, when include_norm, norm) tensors for every non-gated block,
// signatures for all blocks.
ClientUpdate BuildUpdate(const ClientState& state, const Net& trained,
                         std::vector<LayerSignature> signatures,
                         ClassStats stats, TrainTelemetry telemetry,
                         const std::vector<bool>& gated, bool include_norm);

// Adds mu * (params - anchor) to the rest-partition gradients and returns
// the penalty (mu / 2) * |params - anchor|^2 over the rest partition.
template <typename T>
double AddProximalGradient(nn::BlockNet<T>& grads, const nn::BlockNet<T>& params,
                           const nn::BlockNet<T>& anchor, double mu);

// Contiguous batch boundaries used by LocalTrain for a shard of n samples.
std::vector<std::pair<std::size_t, std::size_t>> BatchRanges(
    std::size_t n, std::size_t batch_size, bool merge_singleton);

}  // namespace fedcvu::client

#endif  // FEDCVU_CLIENT_CLIENT_H_
