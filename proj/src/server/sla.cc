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

#include "fedcvu/server/sla.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "fedcvu/errors.h"

namespace fedcvu::server {

void SlaConfig::Validate() const {
  if (budget_bytes < 0 && !(budget_fraction > 0 && budget_fraction <= 1)) {
    throw ConfigError("sla budget_fraction must be in (0, 1]");
  }
  if (decide_every < 1) throw ConfigError("sla decide_every must be >= 1");
  if (!(lambda_cap > 0 && lambda_cap <= 0.3)) {
    throw ConfigError("sla lambda must be in (0, 0.3]");
  }
  if (!(alpha > 0)) throw ConfigError("sla alpha must be positive");
  if (!std::isfinite(tau_kappa)) throw ConfigError("sla tau_kappa must be finite");
  if (!(eta >= 0 && eta < 1)) throw ConfigError("sla eta must be in [0, 1)");
  if (bytes_per_param < 1) throw ConfigError("bytes_per_param must be >= 1");
}

std::vector<int> DefaultMandatoryBlocks(int num_blocks) {
  const int l = num_blocks;
  std::set<int> ids = {0, l + 1};
  for (int id : {1, 2, l - 1, l}) {
    if (id >= 1 && id <= l) ids.insert(id);
  }
  return {ids.begin(), ids.end()};
}

SlaState SlaState::Create(const SlaConfig& config, int num_blocks,
                          std::vector<std::int64_t> cost) {
  config.Validate();
  const int count = num_blocks + 2;
  if (static_cast<int>(cost.size()) != count) {
    throw ConfigError("sla cost vector must cover every block");
  }
  for (auto b : cost) {
    if (b <= 0) throw ConfigError("block cost must be positive");
  }
  SlaState s;
  s.cost = std::move(cost);
  s.mandatory = config.mandatory_blocks.empty()
                    ? DefaultMandatoryBlocks(num_blocks)
                    : config.mandatory_blocks;
  std::sort(s.mandatory.begin(), s.mandatory.end());
  s.mandatory.erase(std::unique(s.mandatory.begin(), s.mandatory.end()),
                    s.mandatory.end());
  const std::int64_t total = std::accumulate(s.cost.begin(), s.cost.end(),
                                             std::int64_t{0});
  s.budget = config.budget_bytes >= 0
                 ? config.budget_bytes
                 : static_cast<std::int64_t>(
                       std::floor(config.budget_fraction * static_cast<double>(total)));
  s.selected.assign(static_cast<std::size_t>(count), false);
  for (int id : s.mandatory) {
    if (id < 0 || id >= count) {
      throw ConfigError("mandatory block id out of range: " + std::to_string(id));
    }
    s.selected[static_cast<std::size_t>(id)] = true;
  }
  if (s.SelectedBytes() > s.budget) {
    throw ConfigError("mandatory blocks need " + std::to_string(s.SelectedBytes()) +
                      " bytes, budget is " + std::to_string(s.budget));
  }
  s.rounds_strong.assign(static_cast<std::size_t>(count), 0);
  s.rounds_weak.assign(static_cast<std::size_t>(count), 0);
  s.rounds_gated.assign(static_cast<std::size_t>(count), 0);
  return s;
}

std::int64_t SlaState::SelectedBytes() const {
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) sum += cost[i];
  }
  return sum;
}

void SlaState::Record(std::span<const double> effective_weight) {
  for (std::size_t i = 0; i < effective_weight.size(); ++i) {
    const double w = effective_weight[i];
    if (w == 1.0) {
      ++rounds_strong[i];
    } else if (w == 0.0) {
      ++rounds_gated[i];
    } else {
      ++rounds_weak[i];
    }
  }
}

double Agreement(std::span<const DirectionRef> directions) {
  const std::size_t c = directions.size();
  if (c < 2) throw ConfigError("agreement needs at least two clients");
  double sum = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      const auto& a = directions[i];
      const auto& b = directions[j];
      if (a.size() != b.size()) throw ConfigError("direction size mismatch");
      sum += std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    }
  }
  const double kappa = 2.0 * sum / (static_cast<double>(c) * static_cast<double>(c - 1));
  return std::clamp(kappa, -1.0, 1.0);
}

double Salience(std::span<const DirectionRef> directions,
                std::span<const double> norms) {
  const std::size_t c = directions.size();
  if (c == 0 || norms.size() != c) throw ConfigError("salience needs one norm per client");
  std::vector<double> v(directions[0].size(), 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    if (directions[i].size() != v.size()) throw ConfigError("direction size mismatch");
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += norms[i] * directions[i][j];
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq) / static_cast<double>(c);
}

double Utility(double kappa, double salience) {
  return std::max(0.0, kappa) * salience;
}

const std::vector<bool>& SelectBlocks(std::span<const double> utility,
                                      const SlaConfig& config, int round,
                                      SlaState& state, bool force) {
  if (utility.size() != state.cost.size()) {
    throw ConfigError("utility vector must cover every block");
  }
  if (!force && round % config.decide_every != 0) return state.selected;

  std::vector<bool> sel(state.cost.size(), false);
  std::int64_t remaining = state.budget;
  for (int id : state.mandatory) {
    sel[static_cast<std::size_t>(id)] = true;
    remaining -= state.cost[static_cast<std::size_t>(id)];
  }
  std::vector<int> order;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (!sel[i] && utility[i] > 0) order.push_back(static_cast<int>(i));
  }
  auto ratio = [&](int id) {
    return utility[static_cast<std::size_t>(id)] /
           static_cast<double>(state.cost[static_cast<std::size_t>(id)]);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ratio(a) > ratio(b); });
  // A block that does not fit is skipped; cheaper ones further down may still fit.
  for (int id : order) {
    const auto b = state.cost[static_cast<std::size_t>(id)];
    if (b <= remaining) {
      sel[static_cast<std::size_t>(id)] = true;
      remaining -= b;
    }
  }
  state.selected = std::move(sel);
  state.last_decision_round = round;
  return state.selected;
}

std::vector<double> SoftWeights(const std::vector<bool>& selected,
                                std::span<const double> kappa,
                                const SlaConfig& config) {
  if (selected.size() != kappa.size()) throw ConfigError("soft weight size mismatch");
  std::vector<double> w(kappa.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (selected[i]) {
      w[i] = 1.0;
    } else {
      const double z = config.alpha * (kappa[i] - config.tau_kappa);
      w[i] = config.lambda_cap / (1.0 + std::exp(-z));
    }
  }
  return w;
}

GateResult Gate(std::span<const double> weights, double eta) {
  GateResult g;
  g.effective.resize(weights.size());
  g.gated.resize(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const bool off = weights[i] < eta;
    g.gated[i] = off;
    g.effective[i] = off ? 0.0 : weights[i];
  }
  return g;
}

}  // namespace fedcvu::server
