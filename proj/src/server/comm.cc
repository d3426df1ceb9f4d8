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

#include "fedcvu/server/comm.h"

#include "fedcvu/errors.h"

namespace fedcvu::server {

PayloadSpec MakePayloadSpec(const std::vector<std::int64_t>& rest_params,
                            const std::vector<std::int64_t>& norm_params,
                            int num_classes, int width,
                            const PayloadOptions& options) {
  if (norm_params.size() != rest_params.size()) {
    throw ConfigError("norm and rest parameter counts must align");
  }
  if (options.signature_mode == SignatureMode::kSketch && options.proj_dim < 1) {
    throw ConfigError("proj_dim must be >= 1");
  }
  const std::int64_t bpp = options.bytes_per_param;
  PayloadSpec spec;
  for (std::size_t i = 0; i < rest_params.size(); ++i) {
    std::int64_t params = rest_params[i];
    if (options.include_norm) params += norm_params[i];
    spec.block_bytes.push_back(params * bpp);
    if (options.signatures) {
      const std::int64_t dim = options.signature_mode == SignatureMode::kFull
                                   ? rest_params[i]
                                   : options.proj_dim;
      spec.signature_bytes += (dim + 1) * bpp;
    }
  }
  if (options.prototypes) {
    spec.prototype_bytes = std::int64_t{num_classes} * width * bpp;
    spec.stats_bytes = std::int64_t{num_classes} * (width + 1) * bpp;
  }
  return spec;
}

PayloadSpec MakePayloadSpec(const nn::ModelDims& dims, const PayloadOptions& options) {
  nn::BlockNet<float> shape(dims);
  std::vector<std::int64_t> rest, norm;
  for (int id = 0; id < dims.block_count(); ++id) {
    rest.push_back(static_cast<std::int64_t>(shape.BlockSize(id, nn::Partition::kRest)));
    norm.push_back(static_cast<std::int64_t>(shape.BlockSize(id, nn::Partition::kNorm)));
  }
  return MakePayloadSpec(rest, norm, dims.num_classes, dims.width, options);
}

CommLedger AccountComm(const PayloadSpec& spec, const std::vector<bool>& gated_down,
                       const std::vector<bool>& gated_up, int num_clients) {
  const auto n = spec.block_bytes.size();
  if (gated_down.size() != n || gated_up.size() != n) {
    throw ConfigError("gating masks must cover every block");
  }
  CommLedger ledger;
  for (std::size_t i = 0; i < n; ++i) {
    if (!gated_down[i]) ledger.params_down += spec.block_bytes[i];
    if (!gated_up[i]) ledger.params_up += spec.block_bytes[i];
  }
  const std::int64_t down = ledger.params_down + spec.prototype_bytes;
  const std::int64_t up = ledger.params_up + spec.signature_bytes + spec.stats_bytes;
  ledger.down.assign(static_cast<std::size_t>(num_clients), down);
  ledger.up.assign(static_cast<std::size_t>(num_clients), up);
  ledger.total_down = down * num_clients;
  ledger.total_up = up * num_clients;
  return ledger;
}

}  // namespace fedcvu::server
