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

#ifndef FEDCVU_SERVER_COMM_H_
#define FEDCVU_SERVER_COMM_H_

#include <cstdint>
#include <vector>

#include "fedcvu/nn/block_net.h"

namespace fedcvu::server {

enum class SignatureMode { kFull, kSketch };

// Byte sizes of everything a client exchanges in one round.
struct PayloadSpec {
  std::vector<std::int64_t> block_bytes;  // per block id
  std::int64_t signature_bytes = 0;       // upload, once per round
  std::int64_t prototype_bytes = 0;       // download
  std::int64_t stats_bytes = 0;           // upload
};

struct PayloadOptions {
  bool include_norm = false;  // norm tensors travel with their block
  bool signatures = true;
  SignatureMode signature_mode = SignatureMode::kFull;
  int proj_dim = 64;
  bool prototypes = true;  // prototype download and class-stats upload
  int bytes_per_param = 2;
};

PayloadSpec MakePayloadSpec(const std::vector<std::int64_t>& rest_params,
                            const std::vector<std::int64_t>& norm_params,
                            int num_classes, int width,
                            const PayloadOptions& options);
PayloadSpec MakePayloadSpec(const nn::ModelDims& dims, const PayloadOptions& options);

struct CommLedger {
  std::vector<std::int64_t> up;    // per client
  std::vector<std::int64_t> down;  // per client
  std::int64_t total_up = 0;
  std::int64_t total_down = 0;
  std::int64_t params_up = 0;      // per client, parameter share of `up`
  std::int64_t params_down = 0;
};

// Download skips blocks gated in the previous round; upload skips blocks
// gated in this round. Every client carries the same payload.
CommLedger AccountComm(const PayloadSpec& spec, const std::vector<bool>& gated_down,
                       const std::vector<bool>& gated_up, int num_clients);

}  // namespace fedcvu::server

#endif  // FEDCVU_SERVER_COMM_H_
