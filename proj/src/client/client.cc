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

#include "fedcvu/client/client.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "fedcvu/errors.h"
#include "fedcvu/nn/loss.h"

namespace fedcvu::client {

ClassStats ClassStats::Zeros(int num_classes, int width) {
  ClassStats s;
  s.sum = Matrix<double>::Zero(num_classes, width);
  s.count.assign(static_cast<std::size_t>(num_classes), 0);
  return s;
}

void ClassStats::Add(const Matrix<float>& embeddings,
                     std::span<const int> labels) {
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    sum.row(y) += embeddings.row(i).cast<double>();
    ++count[static_cast<std::size_t>(y)];
  }
}

std::int64_t ClassStats::total() const {
  return std::accumulate(count.begin(), count.end(), std::int64_t{0});
}

ClientState MakeClient(data::Shard shard, const Net& initial,
                       const nn::OptimizerConfig& opt, std::uint64_t seed) {
  ClientState state;
  state.client_id = shard.client_id;
  state.shard = std::move(shard);
  state.local_norm = initial.GetNormState();
  state.opt = nn::OptState<float>(opt);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(state.client_id), 0xC11Eu};
  state.rng.seed(seq);
  return state;
}

Net InstallGlobal(const ClientState& state, const Net& global,
                  const std::vector<bool>& gated, bool vs_norm) {
  const int blocks = global.dims.block_count();
  if (static_cast<int>(gated.size()) != blocks) {
    throw ConfigError("install: mask covers " + std::to_string(gated.size()) +
                      " of " + std::to_string(blocks) + " blocks");
  }
  const bool any_gated = std::find(gated.begin(), gated.end(), true) != gated.end();
  if (any_gated && !state.has_last_net) {
    throw ProtocolError("install: gated blocks before the first local round");
  }
  Net working = global;
  for (int id = 0; id < blocks; ++id) {
    if (!gated[static_cast<std::size_t>(id)]) continue;
    working.UnflattenBlock(id, state.last_net.FlattenBlock(id));
    if (!vs_norm) {
      working.UnflattenBlock(id, state.last_net.FlattenBlock(id, nn::Partition::kNorm),
                             nn::Partition::kNorm);
    }
  }
  if (vs_norm) working.SetNormState(state.local_norm);
  return working;
}

std::vector<std::pair<std::size_t, std::size_t>> BatchRanges(
    std::size_t n, std::size_t batch_size, bool merge_singleton) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t start = 0; start < n; start += batch_size) {
    ranges.emplace_back(start, std::min(n, start + batch_size));
  }
  if (merge_singleton && ranges.size() > 1 &&
      ranges.back().second - ranges.back().first == 1) {
    ranges.pop_back();
    ranges.back().second = n;
  }
  return ranges;
}

template <typename T>
double AddProximalGradient(nn::BlockNet<T>& grads, const nn::BlockNet<T>& params,
                           const nn::BlockNet<T>& anchor, double mu) {
  std::vector<std::span<const T>> p;
  std::vector<std::span<const T>> a;
  params.ForEachParameter(
      [&](const nn::ParamInfo&, std::span<const T> s) { p.push_back(s); });
  anchor.ForEachParameter(
      [&](const nn::ParamInfo&, std::span<const T> s) { a.push_back(s); });
  if (p.size() != a.size()) throw ConfigError("proximal anchor mismatch");
  std::size_t t = 0;
  double sq = 0.0;
  grads.ForEachParameter([&](const nn::ParamInfo& info, std::span<T> g) {
    if (info.tag == nn::Partition::kRest) {
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double diff = static_cast<double>(p[t][j]) - a[t][j];
        g[j] += static_cast<T>(mu * diff);
        sq += diff * diff;
      }
    }
    ++t;
  });
  return 0.5 * mu * sq;
}

template double AddProximalGradient(nn::BlockNet<float>&,
                                    const nn::BlockNet<float>&,
                                    const nn::BlockNet<float>&, double);
template double AddProximalGradient(nn::BlockNet<double>&,
                                    const nn::BlockNet<double>&,
                                    const nn::BlockNet<double>&, double);

LocalTrainResult LocalTrain(ClientState& state, Net working,
                            const PrototypeView* bank,
                            const LocalTrainConfig& config,
                            const Net* prox_anchor) {
  if (config.epochs < 1) throw ConfigError("local training needs E >= 1");
  const auto& data = state.shard.data;
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("local training on an empty shard");
  if (config.batch_size < 1) throw ConfigError("batch size must be positive");
  if (config.prox_mu > 0 && prox_anchor == nullptr) {
    throw ConfigError("proximal term needs an anchor net");
  }

  LocalTrainResult result;
  auto& tel = result.telemetry;
  std::size_t batch = static_cast<std::size_t>(config.batch_size);
  if (batch > n) {
    batch = n;
    tel.batch_clamped = true;
  }
  const bool batch_norm = working.dims.norm_kind == nn::NormKind::kBatch;
  const auto ranges = BatchRanges(n, batch, batch_norm);
  const bool use_align =
      config.cv_align && config.align_weight != 0.0 && bank != nullptr;
  if (use_align) {
    tel.align_inactive = std::find(bank->initialized.begin(),
                                   bank->initialized.end(),
                                   true) == bank->initialized.end();
  }

  result.stats = ClassStats::Zeros(working.dims.num_classes, working.dims.width);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::ForwardCache<float> cache;
  std::int64_t correct = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const bool last_epoch = epoch + 1 == config.epochs;
    std::shuffle(order.begin(), order.end(), state.rng);
    for (const auto& [begin, end] : ranges) {
      const auto rows = static_cast<Eigen::Index>(end - begin);
      Matrix<float> x(rows, data.features.cols());
      std::vector<int> labels(static_cast<std::size_t>(rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto src = order[begin + static_cast<std::size_t>(r)];
        x.row(r) = data.features.row(static_cast<Eigen::Index>(src));
        labels[static_cast<std::size_t>(r)] = data.labels[src];
      }

      auto out = nn::Forward(working, x, nn::Mode::kTrain, &cache);
      auto ce = nn::CrossEntropy(out.logits, labels);
      tel.ce_loss += ce.loss;

      Matrix<float> dembed;
      if (use_align) {
        auto align = CvAlignLoss(out.embeddings, labels, *bank, config.tau_temp);
        if (align.counted > 0) {
          tel.align_loss += config.align_weight * align.loss;
          dembed = align.grad * static_cast<float>(config.align_weight);
        }
      }
      if (last_epoch) {
        result.stats.Add(out.embeddings, labels);
        for (Eigen::Index r = 0; r < rows; ++r) {
          Eigen::Index pred = 0;
          out.logits.row(r).maxCoeff(&pred);
          if (pred == labels[static_cast<std::size_t>(r)]) ++correct;
        }
      }

      auto grads = nn::Backward(working, cache, ce.grad, dembed);
      if (config.prox_mu > 0) {
        tel.prox_loss +=
            AddProximalGradient(grads, working, *prox_anchor, config.prox_mu);
      }
      nn::OptimizerStep(state.opt, working, grads);
      ++tel.steps;
    }
  }
  tel.ce_loss /= static_cast<double>(tel.steps);
  tel.align_loss /= static_cast<double>(tel.steps);
  tel.prox_loss /= static_cast<double>(tel.steps);
  tel.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  state.local_norm = working.GetNormState();
  state.last_net = working;
  state.has_last_net = true;
  result.net = std::move(working);
  return result;
}

ClientUpdate BuildUpdate(const ClientState& state, const Net& trained,
                         std::vector<LayerSignature> signatures,
                         ClassStats stats, TrainTelemetry telemetry,
                         const std::vector<bool>& gated, bool include_norm) {
  const int blocks = trained.dims.block_count();
  if (static_cast<int>(gated.size()) != blocks ||
      static_cast<int>(signatures.size()) != blocks) {
    throw ConfigError("build update: mask/signatures do not cover all blocks");
  }
  ClientUpdate up;
  up.client_id = state.client_id;
  up.n = static_cast<std::int64_t>(state.shard.n());
  for (int id = 0; id < blocks; ++id) {
    if (gated[static_cast<std::size_t>(id)]) continue;
    up.rest.emplace(id, trained.FlattenBlock(id));
    if (include_norm) {
      auto norm = trained.FlattenBlock(id, nn::Partition::kNorm);
      if (!norm.empty()) up.norm.emplace(id, std::move(norm));
    }
  }
  up.signatures = std::move(signatures);
  up.stats = std::move(stats);
  up.telemetry = telemetry;
  return up;
}

}  // namespace fedcvu::client
