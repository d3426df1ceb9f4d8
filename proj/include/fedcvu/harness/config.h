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

#ifndef FEDCVU_HARNESS_CONFIG_H_
#define FEDCVU_HARNESS_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fedcvu/data/synth.h"
#include "fedcvu/nn/block_net.h"
#include "fedcvu/nn/optimizer.h"
#include "fedcvu/server/round.h"
#include "json.hpp"

namespace fedcvu::harness {

enum class Method {
  kFedCvu,
  kFedAvg,
  kFedProx,
  kFedBn,
  kFedCvuNoVsNorm,
  kFedCvuNoCvAlign,
  kFedCvuNoSla,
};

std::string_view MethodName(Method m);
Method ParseMethod(std::string_view name);  // throws ConfigError
const std::vector<Method>& AllMethods();
server::MethodToggles TogglesFor(Method m, double prox_mu);

// How norm tensors are chosen when evaluating on views no client owns.
enum class UnseenNorm {
  kMean,               // elementwise mean of the client norm tensors
  kGlobalBatchRecalib, // mean affine params, running stats from the unseen set
};

struct ExperimentConfig {
  Method method = Method::kFedCvu;
  int rounds = 150;
  int clients = 20;
  int local_epochs = 5;
  int batch_size = 32;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path output_dir = "out";
  // Optional benchmark file; when set, every run reads its data from it.
  std::filesystem::path dataset_file;

  data::SynthConfig synth;  // synth.seed is replaced by the run seed
  data::PartitionRule partition = data::PartitionRule::kStrict;
  nn::ModelDims model;      // input_dim / num_classes follow synth
  double init_residual_scale = 1.0;

  nn::OptimizerConfig optimizer;
  bool cosine_schedule = true;

  double align_weight = 1.0;
  double tau_temp = 0.1;
  double proto_momentum = 0.9;
  double prox_mu = 0.01;

  server::SlaConfig sla;
  server::SignatureConfig signature;

  UnseenNorm unseen_norm = UnseenNorm::kMean;

  ExperimentConfig();
  // Checks everything that can be checked before data exists, including
  // that the mandatory blocks fit the byte budget.
  void Validate() const;
  server::FederationConfig ToFederationConfig(std::uint64_t seed, int threads) const;
  data::SynthConfig SynthFor(std::uint64_t seed) const;
};

// Strict: unknown keys and wrong types raise ConfigError naming the key.
ExperimentConfig ParseConfig(const nlohmann::json& doc);
ExperimentConfig LoadConfig(const std::filesystem::path& path);
nlohmann::json ToJson(const ExperimentConfig& config);

}  // namespace fedcvu::harness

#endif  // FEDCVU_HARNESS_CONFIG_H_
