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

// Command-line entry point: run experiments, dump datasets, check configs.
//
// Exit codes: 0 success, 2 configuration or usage error, 1 runtime error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fedcvu/errors.h"
#include "fedcvu/harness/config.h"
#include "fedcvu/harness/experiment.h"

namespace {

using fedcvu::harness::ExperimentConfig;

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> out;
  bool quiet = false;
};

ExperimentConfig Load(const Args& a) {
  auto cfg = fedcvu::harness::LoadConfig(a.config);
  if (a.seed) cfg.seeds = {*a.seed};
  if (a.method) cfg.method = fedcvu::harness::ParseMethod(*a.method);
  if (a.out) cfg.output_dir = *a.out;
  cfg.Validate();
  return cfg;
}

int Run(const Args& a) {
  const auto cfg = Load(a);
  fedcvu::harness::RunOptions opts;
  opts.threads = fedcvu::harness::ThreadsFromEnv();
  if (!a.quiet) {
    opts.on_round = [](std::uint64_t seed, const fedcvu::harness::MetricsRow& r) {
      std::fprintf(stderr,
                   "seed %llu round %4d  seen %6.2f  unseen %6.2f  bytes %lld  selected %d\n",
                   static_cast<unsigned long long>(seed), r.round, r.seen_top1,
                   r.unseen_top1, static_cast<long long>(r.cum_bytes), r.n_selected_blocks);
    };
  }
  const auto result = fedcvu::harness::RunExperiment(cfg, opts);
  fedcvu::harness::EmitOutputs(result, cfg.output_dir);
  std::cout << "wrote " << cfg.output_dir.string() << "\n";
  return kOk;
}

int GenData(const Args& a) {
  const auto cfg = Load(a);
  if (!a.out) throw fedcvu::ConfigError("gen-data needs --out <file>");
  const auto bench = fedcvu::data::Generate(cfg.SynthFor(cfg.seeds.front()));
  fedcvu::data::SaveDataset(bench, *a.out);
  std::cout << "wrote " << *a.out << "\n";
  return kOk;
}

int Validate(const Args& a) {
  Load(a);
  std::cout << "config ok\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated cross-view learning simulator"};
  app.require_subcommand(1);

  Args args;
  auto* run = app.add_subcommand("run", "Run an experiment and write metrics");
  run->add_option("--config", args.config, "JSON config file")->required();
  run->add_option("--seed", args.seed, "Run a single seed");
  run->add_option("--method", args.method, "Override the method");
  run->add_option("--out", args.out, "Output directory");
  run->add_flag("--quiet", args.quiet, "No per-round progress");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic benchmark to a file");
  gen->add_option("--config", args.config, "JSON config file")->required();
  gen->add_option("--seed", args.seed, "Data seed (default: first config seed)");
  gen->add_option("--out", args.out, "Dataset file")->required();

  auto* val = app.add_subcommand("validate", "Check a config file");
  val->add_option("--config", args.config, "JSON config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) return Run(args);
    if (gen->parsed()) return GenData(args);
    return Validate(args);
  } catch (const fedcvu::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
