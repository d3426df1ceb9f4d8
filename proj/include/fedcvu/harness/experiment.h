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

#ifndef FEDCVU_HARNESS_EXPERIMENT_H_
#define FEDCVU_HARNESS_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fedcvu/harness/config.h"
#include "fedcvu/harness/convergence.h"
#include "fedcvu/harness/evaluate.h"
#include "json.hpp"

namespace fedcvu::harness {

struct MetricsRow {
  int round = 0;
  std::string method;
  std::uint64_t seed = 0;
  double seen_top1 = 0.0;
  double seen_top5 = 0.0;
  double unseen_top1 = 0.0;
  double unseen_top5 = 0.0;
  double map = 0.0;   // NaN outside id_mode
  double cmc1 = 0.0;  // NaN outside id_mode
  std::int64_t bytes_up = 0;    // per client
  std::int64_t bytes_down = 0;  // per client
  std::int64_t cum_bytes = 0;   // running sum of bytes_up + bytes_down
  int n_selected_blocks = 0;
};

const std::vector<std::string>& MetricsColumns();

struct SyncTraceRow {
  int block_id = 0;
  std::int64_t rounds_strong = 0;
  std::int64_t rounds_weak = 0;
  std::int64_t rounds_gated = 0;
  double freq_strong = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  std::vector<SyncTraceRow> trace;
  std::vector<server::RoundReport> reports;
  ConvergenceResult convergence;  // on unseen top-1
  std::vector<int> mandatory_blocks;
  std::int64_t budget_bytes = 0;
  std::int64_t mandatory_bytes = 0;
  std::int64_t total_block_bytes = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<SeedResult> seeds;
};

struct RunOptions {
  int threads = 0;
  // Called after every round; may be empty.
  std::function<void(std::uint64_t seed, const MetricsRow&)> on_round;
};

// Reads FEDCVU_THREADS; unset or invalid means 0 (serial).
int ThreadsFromEnv();

// Builds the benchmark for one seed, from config.dataset_file when set.
data::Benchmark BenchmarkFor(const ExperimentConfig& config, std::uint64_t seed);
client::Net InitialModel(const ExperimentConfig& config, std::uint64_t seed);

SeedResult RunSeed(const ExperimentConfig& config, std::uint64_t seed,
                   const RunOptions& options = {});
// Validates first, then runs every seed in order.
ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const RunOptions& options = {});

std::string CsvField(const std::string& s);
std::string MetricsCsv(const std::vector<SeedResult>& seeds);
// Counts summed over seeds; freq_strong = strong / (rounds * seeds).
std::string SyncTraceCsv(const std::vector<SeedResult>& seeds);
nlohmann::json Summary(const ExperimentResult& result);

// Writes metrics.csv, sync_trace.csv and summary.json under `dir`.
// Throws std::runtime_error when the directory cannot be written.
void EmitOutputs(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace fedcvu::harness

#endif  // FEDCVU_HARNESS_EXPERIMENT_H_
