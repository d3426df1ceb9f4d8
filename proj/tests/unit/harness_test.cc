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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fedcvu/errors.h"
#include "fedcvu/harness/config.h"
#include "fedcvu/harness/convergence.h"
#include "fedcvu/harness/evaluate.h"
#include "fedcvu/harness/experiment.h"
#include "json.hpp"

namespace fedcvu::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json TinyDoc() {
  return json::parse(R"({
    "rounds": 4, "clients": 6, "local_epochs": 1, "batch_size": 16, "seeds": [3],
    "synth": {"num_classes": 4, "input_dim": 8, "num_views": 4,
              "seen_views": [0, 1, 2], "unseen_views": [3],
              "samples_per_class_per_view": 20},
    "model": {"width": 8, "num_blocks": 6, "init_residual_scale": 0.5},
    "optimizer": {"lr": 0.003},
    "sla": {"budget_fraction": 0.9, "decide_every": 2, "signature": "sketch",
            "proj_dim": 8}
  })");
}

ExperimentConfig Tiny(Method m = Method::kFedCvu) {
  auto c = ParseConfig(TinyDoc());
  c.method = m;
  return c;
}

fs::path TempDir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fedcvu_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- config

TEST(ConfigTest, ShippedDefaultValidates) {
  const auto c = LoadConfig(fs::path(FEDCVU_SOURCE_DIR) / "configs/default.json");
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(c.clients, 20);
  EXPECT_EQ(c.seeds.size(), 3u);
}

TEST(ConfigTest, UnknownKeysAndBadTypesAreRejected) {
  auto doc = TinyDoc();
  doc["round"] = 3;
  EXPECT_THROW(ParseConfig(doc), ConfigError);
  doc = TinyDoc();
  doc["sla"]["budget"] = 1;
  EXPECT_THROW(ParseConfig(doc), ConfigError);
  doc = TinyDoc();
  doc["rounds"] = "4";
  EXPECT_THROW(ParseConfig(doc), ConfigError);
  doc = TinyDoc();
  doc["seeds"] = json::array({-1});
  EXPECT_THROW(ParseConfig(doc), ConfigError);
  doc = TinyDoc();
  doc["method"] = "fedsomething";
  EXPECT_THROW(ParseConfig(doc), ConfigError);
  EXPECT_THROW(ParseConfig(json::array()), ConfigError);
}

TEST(ConfigTest, ValidationRules) {
  auto c = Tiny();
  EXPECT_NO_THROW(c.Validate());
  c.rounds = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = Tiny(Method::kFedProx);
  c.prox_mu = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = Tiny();
  c.seeds.clear();
  EXPECT_THROW(c.Validate(), ConfigError);
  c = Tiny();
  c.clients = 5;  // strict partition over 3 seen views
  EXPECT_THROW(c.Validate(), ConfigError);
  c.partition = data::PartitionRule::kBalanced;
  EXPECT_NO_THROW(c.Validate());
  c = Tiny();
  c.sla.budget_fraction = 0.5;  // mandatory blocks no longer fit
  EXPECT_THROW(c.Validate(), ConfigError);
  c.method = Method::kFedAvg;  // budget is irrelevant without SLA
  EXPECT_NO_THROW(c.Validate());
}

TEST(ConfigTest, JsonRoundTrip) {
  const auto c = Tiny(Method::kFedCvuNoSla);
  const auto again = ParseConfig(ToJson(c));
  EXPECT_EQ(ToJson(again), ToJson(c));
  EXPECT_EQ(again.method, Method::kFedCvuNoSla);
}

TEST(ConfigTest, MethodLattice) {
  const auto full = TogglesFor(Method::kFedCvu, 0.01);
  auto differs = [&](Method m) {
    const auto t = TogglesFor(m, 0.01);
    return int(t.vs_norm != full.vs_norm) + int(t.cv_align != full.cv_align) +
           int(t.sla != full.sla) + int(t.prox_mu != full.prox_mu);
  };
  EXPECT_EQ(differs(Method::kFedCvuNoVsNorm), 1);
  EXPECT_EQ(differs(Method::kFedCvuNoCvAlign), 1);
  EXPECT_EQ(differs(Method::kFedCvuNoSla), 1);
  EXPECT_FALSE(TogglesFor(Method::kFedCvuNoVsNorm, 0).vs_norm);
  EXPECT_FALSE(TogglesFor(Method::kFedCvuNoCvAlign, 0).cv_align);
  EXPECT_FALSE(TogglesFor(Method::kFedCvuNoSla, 0).sla);

  auto fedbn = TogglesFor(Method::kFedBn, 0.01);
  auto fedavg = TogglesFor(Method::kFedAvg, 0.01);
  EXPECT_TRUE(fedbn.vs_norm);
  fedavg.vs_norm = true;
  EXPECT_EQ(fedbn.cv_align, fedavg.cv_align);
  EXPECT_EQ(fedbn.sla, fedavg.sla);
  EXPECT_EQ(fedbn.prox_mu, fedavg.prox_mu);
  EXPECT_EQ(TogglesFor(Method::kFedProx, 0.25).prox_mu, 0.25);
  for (Method m : AllMethods()) EXPECT_EQ(ParseMethod(MethodName(m)), m);
}

// ---------------------------------------------------------------- metrics

TEST(TopKTest, PerfectClassifier) {
  nn::Matrix<float> logits = nn::Matrix<float>::Zero(6, 3);
  std::vector<int> labels = {0, 1, 2, 2, 1, 0};
  for (int i = 0; i < 6; ++i) logits(i, labels[i]) = 1.0f;
  const auto acc = TopK(logits, labels);
  EXPECT_EQ(acc.top1, 100.0);
  EXPECT_EQ(acc.top5, 100.0);
  EXPECT_THROW(TopK(nn::Matrix<float>(0, 3), {}), ConfigError);
}

TEST(TopKTest, RandomLogitsMatchChance) {
  const int k = 12, n = 20000;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> z;
  std::uniform_int_distribution<int> y(0, k - 1);
  nn::Matrix<float> logits(n, k);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = y(rng);
    for (int j = 0; j < k; ++j) logits(i, j) = z(rng);
  }
  const auto acc = TopK(logits, labels);
  EXPECT_NEAR(acc.top1, 100.0 / k, 3.0);
  EXPECT_NEAR(acc.top5, 100.0 * 5 / k, 3.0);
}

// Brute force: AP as the mean, over relevant items, of the fraction of
// relevant items among those ranked at or above it.
double BruteForceAp(const std::vector<double>& sims, const std::vector<bool>& rel) {
  std::vector<std::size_t> idx(sims.size());
  std::iota(idx.begin(), idx.end(), 0);
  double sum = 0;
  int total = 0;
  for (std::size_t a : idx) {
    if (!rel[a]) continue;
    ++total;
    int above = 0, above_rel = 0;
    for (std::size_t b : idx) {
      if (sims[b] > sims[a] || (sims[b] == sims[a] && b <= a)) {
        ++above;
        above_rel += rel[b];
      }
    }
    sum += static_cast<double>(above_rel) / above;
  }
  return total ? sum / total : 0;
}

TEST(RetrievalTest, MatchesBruteForceAp) {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> z;
  const int nq = 10, ng = 25, dim = 4, classes = 3;
  nn::Matrix<float> q(nq, dim), g(ng, dim);
  std::vector<int> ql(nq), gl(ng);
  for (int i = 0; i < nq; ++i) {
    ql[i] = i % classes;
    for (int j = 0; j < dim; ++j) q(i, j) = z(rng);
  }
  for (int i = 0; i < ng; ++i) {
    gl[i] = i % classes;
    for (int j = 0; j < dim; ++j) g(i, j) = z(rng);
  }
  double map = 0, cmc = 0;
  for (int i = 0; i < nq; ++i) {
    std::vector<double> sims(ng);
    std::vector<bool> rel(ng);
    int best = 0;
    for (int j = 0; j < ng; ++j) {
      const auto a = q.row(i).cast<double>(), b = g.row(j).cast<double>();
      sims[j] = a.dot(b) / (a.norm() * b.norm());
      rel[j] = gl[j] == ql[i];
      if (sims[j] > sims[best]) best = j;
    }
    map += BruteForceAp(sims, rel);
    cmc += rel[best];
  }
  const auto r = Retrieval(q, ql, g, gl);
  EXPECT_NEAR(r.map, 100.0 * map / nq, 1e-9);
  EXPECT_NEAR(r.cmc1, 100.0 * cmc / nq, 1e-9);
}

TEST(RetrievalTest, SeparatedClustersGivePerfectScores) {
  nn::Matrix<float> g(4, 2), q(2, 2);
  g << 1, 0.1f, 1, -0.1f, -1, 0.2f, -1, 0;
  q << 2, 0, -3, 0.1f;
  const auto r = Retrieval(q, std::vector<int>{0, 1}, g, std::vector<int>{0, 0, 1, 1});
  EXPECT_EQ(r.cmc1, 100.0);
  EXPECT_EQ(r.map, 100.0);
}

TEST(EvaluateTest, MeanNormState) {
  nn::NormState<float> a(1, nn::NormLayer<float>::Identity(nn::NormKind::kBatch, 2));
  auto b = a;
  a[0].gamma << 1, 2;
  b[0].gamma << 3, 6;
  b[0].running_var << 3, 5;
  std::vector<const nn::NormState<float>*> s = {&a, &b};
  const auto m = MeanNormState(s);
  EXPECT_EQ(m[0].gamma(0), 2.0f);
  EXPECT_EQ(m[0].gamma(1), 4.0f);
  EXPECT_EQ(m[0].running_var(0), 2.0f);
  EXPECT_EQ(m[0].running_var(1), 3.0f);
}

TEST(EvaluateTest, IsPureAndBounded) {
  const auto cfg = Tiny();
  const auto bench = BenchmarkFor(cfg, 3);
  const auto splits = data::EvalSplits(bench.config, bench.per_view);
  server::Federation fed(cfg.ToFederationConfig(3, 0),
                         data::PartitionClients(splits.seen_train, cfg.clients),
                         InitialModel(cfg, 3));
  fed.RunRound();
  fed.RunRound();
  const auto global = fed.global().net;
  std::vector<nn::NormState<float>> norms;
  for (const auto& c : fed.clients()) norms.push_back(c.local_norm);
  for (auto mode : {UnseenNorm::kMean, UnseenNorm::kGlobalBatchRecalib}) {
    const auto m = Evaluate(fed, splits, mode);
    for (double v : {m.seen_top1, m.seen_top5, m.unseen_top1, m.unseen_top5}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
    EXPECT_GE(m.seen_top5, m.seen_top1);
    EXPECT_TRUE(std::isnan(m.map));
  }
  for (int id = 0; id < global.dims.block_count(); ++id) {
    EXPECT_EQ(fed.global().net.FlattenBlock(id), global.FlattenBlock(id));
    EXPECT_EQ(fed.global().net.FlattenBlock(id, nn::Partition::kNorm),
              global.FlattenBlock(id, nn::Partition::kNorm));
  }
  for (std::size_t c = 0; c < norms.size(); ++c) {
    for (std::size_t l = 0; l < norms[c].size(); ++l) {
      EXPECT_EQ(fed.clients()[c].local_norm[l].running_mean, norms[c][l].running_mean);
      EXPECT_EQ(fed.clients()[c].local_norm[l].gamma, norms[c][l].gamma);
    }
  }
}

TEST(EvaluateTest, RecalibrationUsesUnseenBatchStatistics) {
  const auto cfg = Tiny();
  const auto bench = BenchmarkFor(cfg, 3);
  const auto splits = data::EvalSplits(bench.config, bench.per_view);
  server::Federation fed(cfg.ToFederationConfig(3, 0),
                         data::PartitionClients(splits.seen_train, cfg.clients),
                         InitialModel(cfg, 3));
  fed.RunRound();
  const auto& x = splits.unseen_test.features;
  const auto net = UnseenViewNet(fed, UnseenNorm::kGlobalBatchRecalib, x);
  // The first norm layer sees embed(x); its running mean is that batch mean.
  const nn::Matrix<float> h =
      (x * net.embed.weight.transpose()).rowwise() + net.embed.bias.transpose();
  const nn::Matrix<float> a =
      (h * net.blocks[0].linear.weight.transpose()).rowwise() +
      net.blocks[0].linear.bias.transpose();
  const nn::Vector<float> mean = a.colwise().mean().transpose();
  EXPECT_LT((net.blocks[0].norm.running_mean - mean).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_EQ(net.blocks[0].norm.momentum, fed.global().net.blocks[0].norm.momentum);
}

// ---------------------------------------------------------------- convergence

TEST(ConvergenceTest, ConstantSeries) {
  const std::vector<double> s(30, 0.7);
  const auto r = DetectConvergence(s);
  ASSERT_TRUE(r.r_star);
  EXPECT_EQ(*r.r_star, 5);
  EXPECT_DOUBLE_EQ(r.best, 0.7);
}

TEST(ConvergenceTest, PlateauAtForty) {
  std::vector<double> s;
  // Strictly increasing, saturating ramp that is flat from round 40 on.
  for (int t = 1; t <= 100; ++t) {
    s.push_back(80.0 * (1.0 - std::pow(1.0 - std::min(t, 40) / 40.0, 3)));
  }
  const auto r = DetectConvergence(s, 5, 0.01);
  ASSERT_TRUE(r.r_star);
  EXPECT_LE(*r.r_star, 41);
}

TEST(ConvergenceTest, FastGrowthConvergesAtTheEnd) {
  std::vector<double> s;
  for (int t = 0; t < 20; ++t) s.push_back(std::pow(2.0, t));
  const auto r = DetectConvergence(s);
  ASSERT_TRUE(r.r_star);
  EXPECT_EQ(*r.r_star, 20);
  EXPECT_FALSE(DetectConvergence(std::vector<double>(4, 1.0)).r_star);
}

// ---------------------------------------------------------------- runs

TEST(ExperimentTest, ArtifactsAreConsistent) {
  auto cfg = Tiny();
  const auto result = RunExperiment(cfg);
  ASSERT_EQ(result.seeds.size(), 1u);
  const auto& s = result.seeds[0];
  ASSERT_EQ(s.rows.size(), 4u);
  std::int64_t cum = 0;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    cum += r.bytes_up + r.bytes_down;
    EXPECT_EQ(r.cum_bytes, cum);
    EXPECT_EQ(r.bytes_up, s.reports[i].comm.up[0]);
    EXPECT_EQ(r.bytes_down, s.reports[i].comm.down[0]);
    EXPECT_EQ(r.method, "fedcvu");
  }
  for (int id : s.mandatory_blocks) EXPECT_EQ(s.trace[id].freq_strong, 1.0);

  const auto dir = TempDir("artifacts");
  EmitOutputs(result, dir);
  std::istringstream csv(ReadFile(dir / "metrics.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) {
    ++lines;
    EXPECT_EQ(line.back(), '\r');
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 12) << line;
  }
  EXPECT_EQ(lines, 5);
  const auto summary = json::parse(ReadFile(dir / "summary.json"));
  EXPECT_EQ(summary["method"], "fedcvu");
  EXPECT_EQ(summary["seeds"][0]["total_bytes_per_client"], s.rows.back().cum_bytes);
  EXPECT_EQ(ParseConfig(summary["config"]).rounds, 4);
  const auto trace = ReadFile(dir / "sync_trace.csv");
  EXPECT_EQ(trace.rfind("block_id,rounds_strong,rounds_weak,rounds_gated,freq_strong\r\n", 0),
            0u);
  fs::remove_all(dir);
}

TEST(ExperimentTest, DeterministicAcrossRunsAndThreads) {
  const auto cfg = Tiny();
  const auto a = MetricsCsv(RunExperiment(cfg).seeds);
  const auto b = MetricsCsv(RunExperiment(cfg).seeds);
  RunOptions opts;
  opts.threads = 4;
  const auto c = MetricsCsv(RunExperiment(cfg, opts).seeds);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(ExperimentTest, FedAvgContract) {
  const auto result = RunExperiment(Tiny(Method::kFedAvg));
  for (const auto& rep : result.seeds[0].reports) {
    for (const auto& b : rep.blocks) EXPECT_EQ(b.effective_weight, 1.0);
    EXPECT_EQ(rep.align_loss, 0.0);
  }
  server::PayloadOptions opts;
  opts.include_norm = true;
  opts.signatures = false;
  opts.prototypes = false;
  auto dims = Tiny().model;
  const auto spec = server::MakePayloadSpec(dims, opts);
  std::int64_t params = 0;
  for (auto b : spec.block_bytes) params += b;
  EXPECT_EQ(result.seeds[0].rows[0].bytes_up, params);
  EXPECT_EQ(result.seeds[0].rows[0].bytes_down, params);
}

TEST(ExperimentTest, ProxMuZeroEqualsFedAvg) {
  auto prox = Tiny(Method::kFedProx);
  prox.prox_mu = 1e-300;  // validation needs > 0; contributes exactly nothing
  const auto avg = RunExperiment(Tiny(Method::kFedAvg));
  const auto p = RunExperiment(prox);
  for (std::size_t i = 0; i < avg.seeds[0].rows.size(); ++i) {
    EXPECT_EQ(avg.seeds[0].rows[i].unseen_top1, p.seeds[0].rows[i].unseen_top1);
    EXPECT_EQ(avg.seeds[0].rows[i].seen_top1, p.seeds[0].rows[i].seen_top1);
  }
}

TEST(ExperimentTest, ProximalTermShrinksLocalUpdates) {
  const auto cfg = Tiny();
  const auto bench = BenchmarkFor(cfg, 3);
  const auto splits = data::EvalSplits(bench.config, bench.per_view);
  const auto shards = data::PartitionClients(splits.seen_train, cfg.clients);
  const auto init = InitialModel(cfg, 3);
  auto fcfg = cfg.ToFederationConfig(3, 0);
  double previous = INFINITY;
  for (double mu : {0.0, 1.0, 100.0, 1e6}) {
    auto state = client::MakeClient(shards[0], init, fcfg.optimizer, 3);
    client::LocalTrainConfig local = fcfg.local;
    local.cv_align = false;
    local.prox_mu = mu;
    local.epochs = 3;
    const auto out = client::LocalTrain(state, init, nullptr, local, &init);
    double sq = 0;
    for (int id = 0; id < init.dims.block_count(); ++id) {
      const auto a = out.net.FlattenBlock(id), b = init.FlattenBlock(id);
      for (std::size_t j = 0; j < a.size(); ++j) sq += double(a[j] - b[j]) * (a[j] - b[j]);
    }
    const double delta = std::sqrt(sq);
    EXPECT_LT(delta, previous) << "mu=" << mu;
    previous = delta;
  }
}

TEST(ExperimentTest, SharedDatasetFilePinsData) {
  auto cfg = Tiny();
  const auto dir = TempDir("pin");
  fs::create_directories(dir);
  const auto file = dir / "bench.bin";
  data::SaveDataset(data::Generate(cfg.SynthFor(3)), file);
  cfg.dataset_file = file;
  const auto a = BenchmarkFor(cfg, 3);
  cfg.method = Method::kFedAvg;
  const auto b = BenchmarkFor(cfg, 3);
  const auto fresh = data::Generate(cfg.SynthFor(3));
  ASSERT_EQ(a.per_view.size(), fresh.per_view.size());
  for (std::size_t v = 0; v < a.per_view.size(); ++v) {
    EXPECT_EQ(a.per_view[v].features, b.per_view[v].features);
    EXPECT_EQ(a.per_view[v].features, fresh.per_view[v].features);
    EXPECT_EQ(a.per_view[v].labels, fresh.per_view[v].labels);
  }
  EXPECT_NO_THROW(RunSeed(cfg, 3));
  // The file, not the run seed, decides data and splits.
  const auto other = BenchmarkFor(cfg, 4);
  EXPECT_EQ(other.config.seed, 3u);
  EXPECT_EQ(other.per_view[0].features, a.per_view[0].features);
  fs::remove_all(dir);
}

TEST(ExperimentTest, IdModeReportsRetrieval) {
  auto doc = TinyDoc();
  doc["synth"]["id_mode"] = true;
  doc["rounds"] = 2;
  const auto result = RunExperiment(ParseConfig(doc));
  for (const auto& r : result.seeds[0].rows) {
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 100.0);
    EXPECT_GE(r.cmc1, 0.0);
  }
}

TEST(ExperimentTest, OutputErrors) {
  auto cfg = Tiny();
  cfg.rounds = 0;
  const auto dir = TempDir("invalid");
  EXPECT_THROW(RunExperiment(cfg), ConfigError);
  EXPECT_FALSE(fs::exists(dir));
  ExperimentResult empty;
  EXPECT_THROW(EmitOutputs(empty, "/proc/fedcvu/none"), std::runtime_error);
}

TEST(CsvTest, QuotesPerRfc4180) {
  EXPECT_EQ(CsvField("plain"), "plain");
  EXPECT_EQ(CsvField("a,b"), "\"a,b\"");
  EXPECT_EQ(CsvField("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(CsvField("two\nlines"), "\"two\nlines\"");
}

// ---------------------------------------------------------------- CLI

int Cli(const std::string& args) {
  const std::string cmd = std::string(FEDCVU_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST(CliTest, ExitCodes) {
  const fs::path def = fs::path(FEDCVU_SOURCE_DIR) / "configs/default.json";
  EXPECT_EQ(Cli("validate --config " + def.string()), 0);
  EXPECT_EQ(Cli("validate --config /nonexistent/config.json"), 2);
  EXPECT_EQ(Cli("validate --config " + def.string() + " --bogus"), 2);
  EXPECT_EQ(Cli(""), 2);

  const auto dir = TempDir("cli");
  fs::create_directories(dir);
  auto doc = TinyDoc();
  doc["rounds"] = 2;
  std::ofstream(dir / "tiny.json") << doc.dump();
  EXPECT_EQ(Cli("run --quiet --config " + (dir / "tiny.json").string() +
                " --method fedavg --out " + (dir / "out").string()),
            0);
  const auto summary = json::parse(ReadFile(dir / "out" / "summary.json"));
  EXPECT_EQ(summary["method"], "fedavg");
  EXPECT_EQ(Cli("run --config " + (dir / "tiny.json").string() + " --method nope"), 2);
  EXPECT_EQ(Cli("gen-data --config " + (dir / "tiny.json").string() + " --out " +
                (dir / "d.bin").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "d.bin"));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace fedcvu::harness
