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

#ifndef FEDCVU_SERVER_SLA_H_
#define FEDCVU_SERVER_SLA_H_

#include <cstdint>
#include <span>
#include <vector>

namespace fedcvu::server {

struct SlaConfig {
  // Absolute byte budget. A negative value means budget_fraction of the total
  // aggregable bytes.
  std::int64_t budget_bytes = -1;
  double budget_fraction = 0.5;
  int decide_every = 5;
  double lambda_cap = 0.3;
  double alpha = 5.0;
  double tau_kappa = 0.2;
  double eta = 0.1;
  // Empty means DefaultMandatoryBlocks(L).
  std::vector<int> mandatory_blocks;
  int bytes_per_param = 2;

  void Validate() const;
};

// Embed, head and residual blocks 1, 2, L-1, L (deduplicated, sorted).
std::vector<int> DefaultMandatoryBlocks(int num_blocks);

struct SlaState {
  std::vector<bool> selected;  // current selection, indexed by block id
  int last_decision_round = 0;
  std::vector<std::int64_t> cost;  // bytes per block
  std::vector<int> mandatory;
  std::int64_t budget = 0;
  std::vector<std::int64_t> rounds_strong;
  std::vector<std::int64_t> rounds_weak;
  std::vector<std::int64_t> rounds_gated;

  // Resolves the budget and mandatory set. Throws ConfigError if the
  // mandatory blocks alone exceed the budget.
  static SlaState Create(const SlaConfig& config, int num_blocks,
                         std::vector<std::int64_t> cost);
  std::int64_t SelectedBytes() const;
  // Tallies one round of effective weights.
  void Record(std::span<const double> effective_weight);
};

using DirectionRef = std::span<const double>;

// Mean pairwise inner product of client directions, clamped to [-1, 1].
double Agreement(std::span<const DirectionRef> directions);
// Norm of the mean client update sum_c r_c * g_c / C.
double Salience(std::span<const DirectionRef> directions,
                std::span<const double> norms);
double Utility(double kappa, double salience);

// Recomputes the selection on decision rounds (t % decide_every == 0, or
// when forced) and returns it.
const std::vector<bool>& SelectBlocks(std::span<const double> utility,
                                      const SlaConfig& config, int round,
                                      SlaState& state, bool force = false);

std::vector<double> SoftWeights(const std::vector<bool>& selected,
                                std::span<const double> kappa,
                                const SlaConfig& config);

struct GateResult {
  std::vector<double> effective;
  std::vector<bool> gated;
};
GateResult Gate(std::span<const double> weights, double eta);

}  // namespace fedcvu::server

#endif  // FEDCVU_SERVER_SLA_H_
