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

#ifndef FEDCVU_SERVER_ROUND_H_
#define FEDCVU_SERVER_ROUND_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "fedcvu/client/client.h"
#include "fedcvu/client/signature.h"
#include "fedcvu/data/synth.h"
#include "fedcvu/nn/optimizer.h"
#include "fedcvu/server/aggregate.h"
#include "fedcvu/server/comm.h"
#include "fedcvu/server/prototype_bank.h"
#include "fedcvu/server/sla.h"

namespace fedcvu::server {

struct MethodToggles {
  bool vs_norm = true;
  bool cv_align = true;
  bool sla = true;
  double prox_mu = 0.0;
};

struct SignatureConfig {
  SignatureMode mode = SignatureMode::kFull;
  int proj_dim = 64;
};

struct FederationConfig {
  nn::ModelDims dims;
  MethodToggles toggles;
  client::LocalTrainConfig local;  // cv_align and prox_mu are overridden by toggles
  nn::OptimizerConfig optimizer;
  SlaConfig sla;
  SignatureConfig signature;
  double proto_momentum = 0.9;
  // Client workers per round; 0 runs clients on the calling thread.
  int threads = 0;
  std::uint64_t seed = 0;
  // When > 0 and optimizer.total_steps == 0, each client's cosine schedule
  // spans total_rounds * epochs * batches-per-epoch steps.
  int total_rounds = 0;

  void Validate(int num_clients) const;
};

struct BlockRoundStats {
  double kappa = 0.0;
  double salience = 0.0;
  double utility = 0.0;
  double weight = 1.0;
  double effective_weight = 1.0;
  bool selected = false;
  bool gated = false;
};

struct RoundReport {
  int round = 0;
  std::vector<BlockRoundStats> blocks;
  CommLedger comm;
  int num_selected = 0;
  std::int64_t selected_bytes = 0;
  int num_gated = 0;
  double ce_loss = 0.0;     // mean over clients
  double align_loss = 0.0;
  double train_accuracy = 0.0;
  int align_inactive_clients = 0;
};

class Federation {
 public:
  Federation(FederationConfig config, std::vector<data::Shard> shards,
             const client::Net& initial);

  // Runs the next round (1-based) and returns its report.
  RoundReport RunRound();

  int round() const { return round_; }
  const FederationConfig& config() const { return config_; }
  const GlobalModel& global() const { return global_; }
  const std::vector<client::ClientState>& clients() const { return clients_; }
  const PrototypeBank& bank() const { return bank_; }
  // Always present; selection only runs when the SLA toggle is on.
  const SlaState& sla_state() const { return sla_; }
  const PayloadSpec& payload() const { return payload_; }
  // Aggregable bytes per block (parameters only).
  std::int64_t TotalBlockBytes() const;

 private:
  struct ClientResult {
    client::LocalTrainResult trained;
    std::vector<client::LayerSignature> signatures;
  };
  ClientResult TrainClient(std::size_t index, const std::vector<bool>& gated_down);

  FederationConfig config_;
  GlobalModel global_;
  std::vector<client::ClientState> clients_;
  PrototypeBank bank_;
  SlaState sla_;
  std::optional<client::SignatureSketcher> sketcher_;
  PayloadSpec payload_;
  std::vector<bool> gated_prev_;
  int round_ = 0;
};

}  // namespace fedcvu::server

#endif  // FEDCVU_SERVER_ROUND_H_
