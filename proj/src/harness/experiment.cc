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

#include "fedcvu/harness/experiment.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <stdexcept>

#include "fedcvu/errors.h"
#include "fedcvu/version.h"

namespace fedcvu::harness {
namespace {

std::string Fixed(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

const std::vector<std::string>& MetricsColumns() {
  static const std::vector<std::string> cols = {
      "round",       "method",      "seed",     "seen_top1", "seen_top5",
      "unseen_top1", "unseen_top5", "map",      "cmc1",      "bytes_up",
      "bytes_down",  "cum_bytes",   "n_selected_blocks"};
  return cols;
}

int ThreadsFromEnv() {
  const char* v = std::getenv("FEDCVU_THREADS");
  if (v == nullptr) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 0) return 0;
  return static_cast<int>(n);
}

data::Benchmark BenchmarkFor(const ExperimentConfig& config, std::uint64_t seed) {
  const auto synth = config.SynthFor(seed);
  if (!config.dataset_file.empty()) return data::LoadDataset(synth, config.dataset_file);
  return data::Generate(synth);
}

client::Net InitialModel(const ExperimentConfig& config, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x1A17u};
  std::mt19937_64 rng(seq);
  auto dims = config.model;
  dims.input_dim = config.synth.input_dim;
  dims.num_classes = config.synth.num_classes;
  return client::Net::Random(dims, rng, config.init_residual_scale);
}

SeedResult RunSeed(const ExperimentConfig& config, std::uint64_t seed,
                   const RunOptions& options) {
  const auto bench = BenchmarkFor(config, seed);
  const auto splits = data::EvalSplits(bench.config, bench.per_view);
  auto shards = data::PartitionClients(splits.seen_train, config.clients, config.partition);
  server::Federation fed(config.ToFederationConfig(seed, options.threads),
                         std::move(shards), InitialModel(config, seed));

  SeedResult result;
  result.seed = seed;
  const auto& sla = fed.sla_state();
  result.mandatory_blocks = sla.mandatory;
  result.budget_bytes = sla.budget;
  result.total_block_bytes = fed.TotalBlockBytes();
  for (int id : sla.mandatory) result.mandatory_bytes += sla.cost[static_cast<std::size_t>(id)];

  const std::string method(MethodName(config.method));
  std::int64_t cum = 0;
  std::vector<double> unseen;
  for (int t = 1; t <= config.rounds; ++t) {
    auto report = fed.RunRound();
    const auto m = Evaluate(fed, splits, config.unseen_norm);
    MetricsRow row;
    row.round = t;
    row.method = method;
    row.seed = seed;
    row.seen_top1 = m.seen_top1;
    row.seen_top5 = m.seen_top5;
    row.unseen_top1 = m.unseen_top1;
    row.unseen_top5 = m.unseen_top5;
    row.map = m.map;
    row.cmc1 = m.cmc1;
    row.bytes_up = report.comm.up.front();
    row.bytes_down = report.comm.down.front();
    cum += row.bytes_up + row.bytes_down;
    row.cum_bytes = cum;
    row.n_selected_blocks = report.num_selected;
    unseen.push_back(row.unseen_top1);
    if (options.on_round) options.on_round(seed, row);
    result.rows.push_back(std::move(row));
    result.reports.push_back(std::move(report));
  }
  for (std::size_t b = 0; b < sla.cost.size(); ++b) {
    SyncTraceRow tr;
    tr.block_id = static_cast<int>(b);
    tr.rounds_strong = sla.rounds_strong[b];
    tr.rounds_weak = sla.rounds_weak[b];
    tr.rounds_gated = sla.rounds_gated[b];
    tr.freq_strong = static_cast<double>(tr.rounds_strong) / config.rounds;
    result.trace.push_back(tr);
  }
  result.convergence = DetectConvergence(unseen);
  return result;
}

ExperimentResult RunExperiment(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  ExperimentResult result;
  result.config = config;
  for (auto seed : config.seeds) result.seeds.push_back(RunSeed(config, seed, options));
  return result;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string MetricsCsv(const std::vector<SeedResult>& seeds) {
  std::string out;
  const auto& cols = MetricsColumns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\r\n";
  for (const auto& s : seeds) {
    for (const auto& r : s.rows) {
      const std::vector<std::string> f = {
          std::to_string(r.round),       CsvField(r.method),
          std::to_string(r.seed),        Fixed(r.seen_top1),
          Fixed(r.seen_top5),            Fixed(r.unseen_top1),
          Fixed(r.unseen_top5),          Fixed(r.map),
          Fixed(r.cmc1),                 std::to_string(r.bytes_up),
          std::to_string(r.bytes_down),  std::to_string(r.cum_bytes),
          std::to_string(r.n_selected_blocks)};
      for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
      out += "\r\n";
    }
  }
  return out;
}

std::string SyncTraceCsv(const std::vector<SeedResult>& seeds) {
  std::string out = "block_id,rounds_strong,rounds_weak,rounds_gated,freq_strong\r\n";
  if (seeds.empty()) return out;
  for (std::size_t b = 0; b < seeds.front().trace.size(); ++b) {
    SyncTraceRow sum;
    std::int64_t rounds = 0;
    for (const auto& s : seeds) {
      const auto& t = s.trace[b];
      sum.rounds_strong += t.rounds_strong;
      sum.rounds_weak += t.rounds_weak;
      sum.rounds_gated += t.rounds_gated;
      rounds += t.rounds_strong + t.rounds_weak + t.rounds_gated;
    }
    char freq[32];
    std::snprintf(freq, sizeof(freq), "%.6f",
                  rounds ? static_cast<double>(sum.rounds_strong) / rounds : 0.0);
    out += std::to_string(b) + "," + std::to_string(sum.rounds_strong) + "," +
           std::to_string(sum.rounds_weak) + "," + std::to_string(sum.rounds_gated) + "," +
           freq + "\r\n";
  }
  return out;
}

nlohmann::json Summary(const ExperimentResult& result) {
  using nlohmann::json;
  auto metrics = [](const MetricsRow& r) {
    json j = {{"round", r.round},
              {"seen_top1", r.seen_top1},
              {"seen_top5", r.seen_top5},
              {"unseen_top1", r.unseen_top1},
              {"unseen_top5", r.unseen_top5}};
    if (!std::isnan(r.map)) {
      j["map"] = r.map;
      j["cmc1"] = r.cmc1;
    }
    return j;
  };
  json per_seed = json::array();
  std::vector<double> final_unseen, final_seen, best_unseen, gb, rstar;
  for (const auto& s : result.seeds) {
    if (s.rows.empty()) continue;
    const auto& last = s.rows.back();
    const auto best = *std::max_element(
        s.rows.begin(), s.rows.end(),
        [](const auto& a, const auto& b) { return a.unseen_top1 < b.unseen_top1; });
    const double total_gb = static_cast<double>(last.cum_bytes) / 1e9;
    json j = {{"seed", s.seed},
              {"final", metrics(last)},
              {"best_unseen", metrics(best)},
              {"total_bytes_per_client", last.cum_bytes},
              {"total_gb_per_client", total_gb},
              {"budget_bytes", s.budget_bytes},
              {"mandatory_bytes", s.mandatory_bytes},
              {"total_block_bytes", s.total_block_bytes},
              {"mandatory_blocks", s.mandatory_blocks},
              {"convergence",
               {{"window", s.convergence.window},
                {"best_smoothed", s.convergence.best},
                {"r_star", s.convergence.r_star ? json(*s.convergence.r_star) : json()}}}};
    per_seed.push_back(j);
    final_unseen.push_back(last.unseen_top1);
    final_seen.push_back(last.seen_top1);
    best_unseen.push_back(best.unseen_top1);
    gb.push_back(total_gb);
    if (s.convergence.r_star) rstar.push_back(*s.convergence.r_star);
  }
  json mean = {{"final_seen_top1", Mean(final_seen)},
               {"final_unseen_top1", Mean(final_unseen)},
               {"best_unseen_top1", Mean(best_unseen)},
               {"total_gb_per_client", Mean(gb)},
               {"r_star", rstar.empty() ? json() : json(Mean(rstar))}};
  return {{"version", kVersion},
          {"method", std::string(MethodName(result.config.method))},
          {"seeds", per_seed},
          {"mean", mean},
          {"config", ToJson(result.config)}};
}

void EmitOutputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  WriteFile(dir / "metrics.csv", MetricsCsv(result.seeds));
  WriteFile(dir / "sync_trace.csv", SyncTraceCsv(result.seeds));
  WriteFile(dir / "summary.json", Summary(result).dump(2) + "\n");
}

}  // namespace fedcvu::harness
