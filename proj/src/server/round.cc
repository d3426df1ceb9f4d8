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

#include "fedcvu/server/round.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <random>
#include <thread>

#include "fedcvu/errors.h"

namespace fedcvu::server {
namespace {

void ParallelFor(std::size_t n, int threads,
                 const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 0 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    }
  }
  // Report the failure of the lowest client index.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t SketchSeed(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x5CE7u};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

}  // namespace

void FederationConfig::Validate(int num_clients) const {
  dims.Validate();
  sla.Validate();
  if (num_clients < 1) throw ConfigError("need at least one client");
  if (toggles.sla && num_clients < 2) {
    throw ConfigError("layer agreement needs at least two clients");
  }
  if (toggles.prox_mu < 0) throw ConfigError("prox_mu must be >= 0");
  if (local.epochs < 1) throw ConfigError("local epochs must be >= 1");
  if (local.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(local.tau_temp > 0)) throw ConfigError("tau_temp must be positive");
  if (!(proto_momentum >= 0 && proto_momentum < 1)) {
    throw ConfigError("proto momentum must be in [0, 1)");
  }
  if (signature.mode == SignatureMode::kSketch && signature.proj_dim < 1) {
    throw ConfigError("proj_dim must be >= 1");
  }
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (total_rounds < 0) throw ConfigError("total_rounds must be >= 0");
}

Federation::Federation(FederationConfig config, std::vector<data::Shard> shards,
                       const client::Net& initial)
    : config_(std::move(config)) {
  config_.Validate(static_cast<int>(shards.size()));
  if (initial.dims.input_dim != config_.dims.input_dim ||
      initial.dims.width != config_.dims.width ||
      initial.dims.num_blocks != config_.dims.num_blocks ||
      initial.dims.num_classes != config_.dims.num_classes ||
      initial.dims.norm_kind != config_.dims.norm_kind) {
    throw ConfigError("initial model does not match the configured dims");
  }
  std::sort(shards.begin(), shards.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  for (std::size_t i = 1; i < shards.size(); ++i) {
    if (shards[i].client_id == shards[i - 1].client_id) {
      throw ConfigError("duplicate client id " + std::to_string(shards[i].client_id));
    }
  }
  global_.net = initial;
  const auto& local = config_.local;
  for (auto& shard : shards) {
    if (shard.n() == 0) {
      throw ConfigError("client " + std::to_string(shard.client_id) + " has no data");
    }
    nn::OptimizerConfig opt = config_.optimizer;
    if (config_.total_rounds > 0 && opt.total_steps == 0) {
      const auto n = static_cast<std::size_t>(shard.n());
      const auto batch = std::min(n, static_cast<std::size_t>(local.batch_size));
      const auto per_epoch = client::BatchRanges(
          n, batch, config_.dims.norm_kind == nn::NormKind::kBatch).size();
      opt.total_steps = static_cast<std::int64_t>(config_.total_rounds) *
                        local.epochs * static_cast<std::int64_t>(per_epoch);
    }
    clients_.push_back(client::MakeClient(std::move(shard), initial, opt, config_.seed));
  }

  bank_ = PrototypeBank::Empty(config_.dims.num_classes, config_.dims.width,
                               config_.proto_momentum);

  std::vector<std::size_t> rest_dims;
  for (int id = 0; id < config_.dims.block_count(); ++id) {
    rest_dims.push_back(initial.BlockSize(id, nn::Partition::kRest));
  }
  if (config_.signature.mode == SignatureMode::kSketch) {
    sketcher_ = client::SignatureSketcher::Gaussian(
        rest_dims, config_.signature.proj_dim, SketchSeed(config_.seed));
  }

  const auto& tg = config_.toggles;
  PayloadOptions opts;
  opts.include_norm = !tg.vs_norm;
  opts.signatures = tg.sla;
  opts.signature_mode = config_.signature.mode;
  opts.proj_dim = config_.signature.proj_dim;
  opts.prototypes = tg.cv_align;
  opts.bytes_per_param = config_.sla.bytes_per_param;
  payload_ = MakePayloadSpec(config_.dims, opts);
  sla_ = SlaState::Create(config_.sla, config_.dims.num_blocks, payload_.block_bytes);
  gated_prev_.assign(static_cast<std::size_t>(config_.dims.block_count()), false);
}

std::int64_t Federation::TotalBlockBytes() const {
  std::int64_t sum = 0;
  for (auto b : payload_.block_bytes) sum += b;
  return sum;
}

Federation::ClientResult Federation::TrainClient(std::size_t index,
                                                 const std::vector<bool>& gated_down) {
  auto& state = clients_[index];
  const auto& tg = config_.toggles;
  client::Net working = client::InstallGlobal(state, global_.net, gated_down, tg.vs_norm);
  const client::Net pre = working;
  client::LocalTrainConfig local = config_.local;
  local.cv_align = tg.cv_align;
  local.prox_mu = tg.prox_mu;
  const client::PrototypeView view = bank_.View();
  ClientResult out;
  out.trained = client::LocalTrain(state, std::move(working),
                                   tg.cv_align ? &view : nullptr, local,
                                   tg.prox_mu > 0 ? &pre : nullptr);
  out.signatures = client::ComputeSignatures(
      pre, out.trained.net, sketcher_ ? &*sketcher_ : nullptr);
  return out;
}

RoundReport Federation::RunRound() {
  const int t = ++round_;
  const auto& tg = config_.toggles;
  const std::size_t nb = static_cast<std::size_t>(config_.dims.block_count());
  const std::size_t nc = clients_.size();
  const std::vector<bool> gated_down = gated_prev_;

  std::vector<ClientResult> results(nc);
  ParallelFor(nc, config_.threads,
              [&](std::size_t i) { results[i] = TrainClient(i, gated_down); });

  RoundReport report;
  report.round = t;
  report.blocks.resize(nb);
  std::vector<double> kappa(nb, 0.0), utility(nb, 0.0);
  if (nc >= 2) {
    std::vector<DirectionRef> dirs(nc);
    std::vector<double> norms(nc);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t c = 0; c < nc; ++c) {
        dirs[c] = results[c].signatures[b].direction;
        norms[c] = results[c].signatures[b].norm;
      }
      auto& s = report.blocks[b];
      s.kappa = kappa[b] = Agreement(dirs);
      s.salience = Salience(dirs, norms);
      s.utility = utility[b] = Utility(s.kappa, s.salience);
    }
  }

  std::vector<double> weight(nb, 1.0), effective(nb, 1.0);
  std::vector<bool> selected(nb, true), gated_up(nb, false);
  if (tg.sla) {
    selected = SelectBlocks(utility, config_.sla, t, sla_, /*force=*/t == 1);
    weight = SoftWeights(selected, kappa, config_.sla);
    if (t > 1) {
      auto g = Gate(weight, config_.sla.eta);
      effective = std::move(g.effective);
      gated_up = std::move(g.gated);
    }
    if (sla_.SelectedBytes() > sla_.budget) {
      throw ProtocolError("selection exceeds the byte budget");
    }
    report.selected_bytes = sla_.SelectedBytes();
  } else {
    report.selected_bytes = TotalBlockBytes();
  }
  for (std::size_t b = 0; b < nb; ++b) {
    auto& s = report.blocks[b];
    s.weight = weight[b];
    s.effective_weight = effective[b];
    s.selected = selected[b];
    s.gated = gated_up[b];
    report.num_selected += selected[b] ? 1 : 0;
    report.num_gated += gated_up[b] ? 1 : 0;
  }

  std::vector<client::ClientUpdate> updates;
  updates.reserve(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    auto& r = results[c];
    updates.push_back(client::BuildUpdate(clients_[c], r.trained.net,
                                          std::move(r.signatures),
                                          std::move(r.trained.stats),
                                          r.trained.telemetry, gated_up, !tg.vs_norm));
  }
  std::vector<const client::ClientUpdate*> ptrs;
  std::vector<const client::ClassStats*> stats;
  for (const auto& u : updates) {
    ptrs.push_back(&u);
    stats.push_back(&u.stats);
    report.ce_loss += u.telemetry.ce_loss;
    report.align_loss += u.telemetry.align_loss;
    report.train_accuracy += u.telemetry.accuracy;
    report.align_inactive_clients += u.telemetry.align_inactive ? 1 : 0;
  }
  report.ce_loss /= static_cast<double>(nc);
  report.align_loss /= static_cast<double>(nc);
  report.train_accuracy /= static_cast<double>(nc);

  Aggregate(global_, ptrs, effective, !tg.vs_norm);
  if (tg.cv_align) UpdatePrototypes(bank_, stats);

  report.comm = AccountComm(payload_, gated_down, gated_up, static_cast<int>(nc));
  sla_.Record(effective);
  gated_prev_ = gated_up;
  return report;
}

}  // namespace fedcvu::server
