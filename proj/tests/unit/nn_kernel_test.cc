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

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fedcvu/nn/block_net.h"
#include "fedcvu/nn/loss.h"
#include "fedcvu/nn/norm_layer.h"
#include "fedcvu/nn/optimizer.h"
#include "support/gradcheck.h"

namespace fedcvu::nn {
namespace {

using MatD = Matrix<double>;

MatD RandomMatrix(int rows, int cols, std::mt19937_64& rng, double scale = 1) {
  std::normal_distribution<double> dist(0.0, scale);
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

BlockNet<double> RandomNet(const ModelDims& dims, std::mt19937_64& rng) {
  auto net = BlockNet<double>::Random(dims, rng);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& b : net.blocks) {
    for (auto& g : b.norm.gamma) g = u(rng);
    for (auto& v : b.norm.beta) v = n(rng);
  }
  return net;
}

TEST(ForwardTest, ZeroWeightsGiveZeroLogits) {
  ModelDims dims{5, 7, 3, 4, NormKind::kBatch};
  BlockNet<double> net(dims);
  std::mt19937_64 rng(1);
  auto out = Forward(net, RandomMatrix(6, 5, rng), Mode::kTrain);
  EXPECT_EQ(out.logits.rows(), 6);
  EXPECT_EQ(out.logits.cols(), 4);
  EXPECT_EQ(out.embeddings.cols(), 7);
  EXPECT_TRUE(out.logits.isZero(0.0));
}

TEST(ForwardTest, IdentityBlockMatchesHandEvaluation) {
  // d_in = d = 4, embed = I, one block with linear = I and identity layer
  // norm. Rows are already zero-mean / unit-variance, so the block output is
  // x + GELU(x / sqrt(1 + eps)). Expected values from an independent scalar
  // evaluation with erf-based GELU.
  ModelDims dims{4, 4, 1, 2, NormKind::kLayer};
  BlockNet<double> net(dims);
  net.embed.weight.setIdentity();
  net.blocks[0].linear.weight.setIdentity();
  MatD x(2, 4);
  const double r2 = std::sqrt(2.0);
  x << 1, -1, 1, -1, r2, 0, -r2, 0;
  MatD expected(2, 4);
  expected << 1.84133932953484, -1.15865567050266, 1.84133932953484,
      -1.15865567050266, 2.71719180626777, 0, -1.52544180983673, 0;
  auto out = ForwardEval(net, x);
  EXPECT_LE((out.embeddings - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ForwardTest, EvalModeIsPure) {
  ModelDims dims{6, 8, 2, 3, NormKind::kBatch};
  std::mt19937_64 rng(3);
  auto net = RandomNet(dims, rng);
  auto before = net;
  MatD x = RandomMatrix(5, 6, rng);
  auto a = Forward(net, x, Mode::kEval);
  auto b = Forward(net, x, Mode::kEval);
  EXPECT_TRUE((a.logits.array() == b.logits.array()).all());
  EXPECT_TRUE((a.embeddings.array() == b.embeddings.array()).all());
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    EXPECT_TRUE((net.blocks[i].norm.running_mean.array() ==
                 before.blocks[i].norm.running_mean.array())
                    .all());
  }
}

TEST(ForwardTest, TrainModeUpdatesRunningStats) {
  ModelDims dims{3, 4, 1, 2, NormKind::kBatch};
  std::mt19937_64 rng(4);
  auto net = RandomNet(dims, rng);
  auto before = net.blocks[0].norm.running_mean;
  Forward(net, RandomMatrix(8, 3, rng), Mode::kTrain);
  EXPECT_FALSE((net.blocks[0].norm.running_mean.array() == before.array()).all());
}

TEST(ForwardTest, ShapeAndDegenerateBatchErrors) {
  ModelDims dims{3, 4, 1, 2, NormKind::kBatch};
  BlockNet<double> net(dims);
  EXPECT_THROW(Forward(net, MatD(MatD::Zero(4, 5)), Mode::kTrain), ConfigError);
  EXPECT_THROW(Forward(net, MatD(MatD::Zero(1, 3)), Mode::kTrain),
               DegenerateBatchError);
  EXPECT_NO_THROW(Forward(net, MatD(MatD::Zero(1, 3)), Mode::kEval));
  dims.norm_kind = NormKind::kLayer;
  BlockNet<double> ln(dims);
  EXPECT_NO_THROW(Forward(ln, MatD(MatD::Ones(1, 3)), Mode::kTrain));
}

TEST(NormApplyTest, IdentityStatsEval) {
  auto layer = NormLayer<double>::Identity(NormKind::kBatch, 3);
  MatD x(2, 3);
  x << 1, 2, 3, -4, 5, -6;
  MatD y = NormApply(layer, x, Mode::kEval);
  EXPECT_LE((y - x / std::sqrt(1 + 1e-5)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NormApplyTest, ScalarHandEvaluation) {
  auto layer = NormLayer<double>::Identity(NormKind::kBatch, 1);
  layer.gamma(0) = 2;
  layer.beta(0) = 3;
  layer.running_mean(0) = 1;
  layer.running_var(0) = 4;
  layer.eps = 1e-12;
  MatD x(1, 1);
  x << 5;
  EXPECT_NEAR(NormApply(layer, x, Mode::kEval)(0, 0), 7.0, 1e-9);
}

TEST(NormApplyTest, ConstantRowUnderLayerNormGivesBeta) {
  auto layer = NormLayer<double>::Identity(NormKind::kLayer, 4);
  layer.beta << 0.5, -1, 2, 0;
  MatD x = MatD::Constant(2, 4, 3.25);
  MatD y = NormApply(layer, x, Mode::kTrain);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y(i, j), layer.beta(j));
  }
}

TEST(NormApplyTest, NonFiniteInputRejected) {
  auto layer = NormLayer<double>::Identity(NormKind::kBatch, 2);
  MatD x(2, 2);
  x << 1, std::nan(""), 2, 3;
  EXPECT_THROW(NormApply(layer, x, Mode::kTrain), NumericError);
}

TEST(NormApplyTest, BatchNormTrainOutputMoments) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto layer = NormLayer<double>::Identity(NormKind::kBatch, 5);
    std::normal_distribution<double> n(0, 2);
    for (auto& g : layer.gamma) g = n(rng);
    for (auto& b : layer.beta) b = n(rng);
    MatD x = RandomMatrix(64, 5, rng, 3.0);
    MatD y = NormApply(layer, x, Mode::kTrain);
    for (int j = 0; j < 5; ++j) {
      const double mean = y.col(j).mean();
      const double sd =
          std::sqrt((y.col(j).array() - mean).square().mean());
      EXPECT_NEAR(mean, layer.beta(j), 1e-4);
      EXPECT_NEAR(sd, std::abs(layer.gamma(j)), 1e-4);
    }
  }
}

TEST(BackwardTest, MissingCacheIsUsageError) {
  ModelDims dims{3, 4, 1, 2, NormKind::kBatch};
  BlockNet<double> net(dims);
  ForwardCache<double> cache;
  EXPECT_THROW(Backward(net, cache, MatD(MatD::Zero(2, 2)), MatD()), UsageError);
}

TEST(BackwardTest, ZeroSignalGivesZeroGradients) {
  ModelDims dims{3, 4, 2, 2, NormKind::kBatch};
  std::mt19937_64 rng(5);
  auto net = RandomNet(dims, rng);
  ForwardCache<double> cache;
  Forward(net, RandomMatrix(4, 3, rng), Mode::kTrain, &cache);
  auto g = Backward(net, cache, MatD(MatD::Zero(4, 2)), MatD(MatD::Zero(4, 4)));
  g.ForEachParameter([](const ParamInfo&, std::span<const double> s) {
    for (double v : s) EXPECT_EQ(v, 0.0);
  });
}

TEST(BackwardTest, CrossEntropyAtUniformLogits) {
  MatD logits = MatD::Zero(3, 4);
  std::vector<int> labels{0, 2, 3};
  auto ce = CrossEntropy(logits, labels);
  EXPECT_NEAR(ce.loss, std::log(4.0), 1e-15);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 4; ++k) {
      const double want = (0.25 - (k == labels[i] ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(ce.grad(i, k), want, 1e-15);
    }
  }
}

// Finite-difference oracle over random small configurations, both norm kinds,
// with a loss that also depends on the embeddings directly.
TEST(BackwardTest, MatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> d_in(2, 8), width(2, 16), depth(1, 3),
      classes(2, 5), batch(2, 6);
  for (int trial = 0; trial < 12; ++trial) {
    ModelDims dims{d_in(rng), width(rng), depth(rng), classes(rng),
                   trial % 2 == 0 ? NormKind::kBatch : NormKind::kLayer};
    auto net = RandomNet(dims, rng);
    const int b = batch(rng);
    MatD x = RandomMatrix(b, dims.input_dim, rng);
    std::vector<int> labels(b);
    std::uniform_int_distribution<int> lab(0, dims.num_classes - 1);
    for (auto& y : labels) y = lab(rng);
    MatD probe = RandomMatrix(b, dims.width, rng, 0.1);

    auto loss = [&](const BlockNet<double>& n) {
      auto copy = n;
      auto out = Forward(copy, x, Mode::kTrain);
      return CrossEntropy(out.logits, labels).loss +
             (out.embeddings.array() * probe.array()).sum();
    };
    auto work = net;
    ForwardCache<double> cache;
    auto out = Forward(work, x, Mode::kTrain, &cache);
    auto ce = CrossEntropy(out.logits, labels);
    auto grads = Backward(net, cache, ce.grad, probe);
    EXPECT_LE(testing::MaxParameterGradError(net, grads, loss), 1e-4)
        << "trial " << trial;
  }
}

TEST(OptimizerTest, SgdUnitStep) {
  ModelDims dims{2, 3, 1, 2, NormKind::kBatch};
  std::mt19937_64 rng(7);
  auto net = RandomNet(dims, rng);
  auto before = net;
  auto grads = RandomNet(dims, rng);
  OptState<double> opt(OptimizerConfig{.kind = OptimizerKind::kSgd,
                                       .lr = 1.0,
                                       .weight_decay = 0.0});
  OptimizerStep(opt, net, grads);
  std::vector<std::span<const double>> b, g;
  before.ForEachParameter([&](const ParamInfo&, auto s) { b.push_back(s); });
  grads.ForEachParameter([&](const ParamInfo&, auto s) { g.push_back(s); });
  std::size_t t = 0;
  net.ForEachParameter([&](const ParamInfo&, std::span<const double> s) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      EXPECT_DOUBLE_EQ(s[j], b[t][j] - g[t][j]);
    }
    ++t;
  });
}

// Independent scalar AdamW (decoupled decay, bias correction).
struct ScalarAdamW {
  double lr, wd, b1 = 0.9, b2 = 0.999, eps = 1e-8, m = 0, v = 0;
  int step = 0;
  double Step(double p, double g) {
    ++step;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, step));
    const double vh = v / (1 - std::pow(b2, step));
    return p * (1 - lr * wd) - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(OptimizerTest, AdamWMatchesScalarOracle) {
  ModelDims dims{2, 3, 1, 2, NormKind::kBatch};
  std::mt19937_64 rng(8);
  auto net = RandomNet(dims, rng);
  OptState<double> opt(OptimizerConfig{.kind = OptimizerKind::kAdamW,
                                       .lr = 1e-3,
                                       .weight_decay = 0.05});
  std::vector<double> flat_before;
  net.ForEachParameter([&](const ParamInfo&, std::span<const double> s) {
    flat_before.insert(flat_before.end(), s.begin(), s.end());
  });
  std::vector<ScalarAdamW> oracle(flat_before.size(),
                                  ScalarAdamW{1e-3, 0.05});
  std::vector<double> expected = flat_before;
  for (int step = 0; step < 3; ++step) {
    auto grads = RandomNet(dims, rng);
    std::vector<double> g;
    grads.ForEachParameter([&](const ParamInfo&, std::span<const double> s) {
      g.insert(g.end(), s.begin(), s.end());
    });
    for (std::size_t j = 0; j < g.size(); ++j) {
      expected[j] = oracle[j].Step(expected[j], g[j]);
    }
    OptimizerStep(opt, net, grads);
  }
  std::vector<double> got;
  net.ForEachParameter([&](const ParamInfo&, std::span<const double> s) {
    got.insert(got.end(), s.begin(), s.end());
  });
  for (std::size_t j = 0; j < got.size(); ++j) {
    EXPECT_NEAR(got[j], expected[j], 1e-14);
  }
  EXPECT_EQ(opt.step, 3);
}

TEST(OptimizerTest, AdamWFirstStepIsSignLike) {
  // Frozen from a scalar evaluation: p = 0.5, g = 0.3, lr = 1e-3.
  ModelDims dims{1, 1, 1, 1, NormKind::kLayer};
  BlockNet<double> net(dims);
  net.embed.weight(0, 0) = 0.5;
  auto grads = net.ZerosLike();
  grads.embed.weight(0, 0) = 0.3;
  OptState<double> opt(OptimizerConfig{.lr = 1e-3, .weight_decay = 0.0});
  OptimizerStep(opt, net, grads);
  EXPECT_NEAR(net.embed.weight(0, 0), 0.49900000003333334, 1e-16);
}

TEST(OptimizerTest, ZeroGradLeavesParametersButCountsStep) {
  ModelDims dims{2, 3, 2, 2, NormKind::kBatch};
  std::mt19937_64 rng(9);
  auto net = RandomNet(dims, rng);
  auto before = net;
  OptState<double> opt(OptimizerConfig{.lr = 1e-2, .weight_decay = 0.0});
  OptimizerStep(opt, net, net.ZerosLike());
  EXPECT_EQ(opt.step, 1);
  for (int id = 0; id < dims.block_count(); ++id) {
    EXPECT_EQ(net.FlattenBlock(id), before.FlattenBlock(id));
  }
}

TEST(OptimizerTest, FrozenNormWhenNotTrainable) {
  ModelDims dims{2, 3, 1, 2, NormKind::kBatch};
  std::mt19937_64 rng(10);
  auto net = RandomNet(dims, rng);
  auto before = net;
  auto grads = RandomNet(dims, rng);
  OptState<double> opt(OptimizerConfig{.kind = OptimizerKind::kSgd,
                                       .lr = 0.1,
                                       .norm_trainable = false});
  OptimizerStep(opt, net, grads);
  EXPECT_TRUE((net.blocks[0].norm.gamma.array() ==
               before.blocks[0].norm.gamma.array())
                  .all());
  EXPECT_NE(net.FlattenBlock(1), before.FlattenBlock(1));
}

TEST(OptimizerTest, CosineSchedule) {
  OptState<double> opt(OptimizerConfig{.lr = 2.0, .total_steps = 4});
  EXPECT_DOUBLE_EQ(opt.CurrentLr(), 2.0);
  opt.step = 2;
  EXPECT_NEAR(opt.CurrentLr(), 1.0, 1e-15);
  opt.step = 4;
  EXPECT_NEAR(opt.CurrentLr(), 0.0, 1e-15);
  opt.step = 9;
  EXPECT_NEAR(opt.CurrentLr(), 0.0, 1e-15);
}

TEST(FlattenTest, RoundTripIsBitwise) {
  ModelDims dims{4, 6, 3, 3, NormKind::kBatch};
  std::mt19937_64 rng(12);
  auto net = RandomNet(dims, rng);
  auto copy = BlockNet<double>(dims);
  copy.SetNormState(net.GetNormState());
  for (int id = 0; id < dims.block_count(); ++id) {
    copy.UnflattenBlock(id, net.FlattenBlock(id));
  }
  for (int id = 0; id < dims.block_count(); ++id) {
    EXPECT_EQ(copy.FlattenBlock(id), net.FlattenBlock(id));
    EXPECT_EQ(copy.FlattenBlock(id, Partition::kNorm),
              net.FlattenBlock(id, Partition::kNorm));
  }
}

TEST(FlattenTest, RestExcludesNormAndHasDocumentedLayout) {
  ModelDims dims{4, 6, 3, 3, NormKind::kBatch};
  std::mt19937_64 rng(13);
  auto net = RandomNet(dims, rng);
  EXPECT_EQ(net.FlattenBlock(0).size(), 6u * 4 + 6);
  EXPECT_EQ(net.FlattenBlock(2).size(), 6u * 6 + 6);
  EXPECT_EQ(net.FlattenBlock(4).size(), 3u * 6 + 3);
  EXPECT_EQ(net.FlattenBlock(2, Partition::kNorm).size(), 4u * 6);
  EXPECT_TRUE(net.FlattenBlock(0, Partition::kNorm).empty());
  auto flat = net.FlattenBlock(2);
  EXPECT_EQ(flat[1], net.blocks[1].linear.weight(0, 1));
  EXPECT_EQ(flat[6], net.blocks[1].linear.weight(1, 0));
  EXPECT_EQ(flat[36], net.blocks[1].linear.bias(0));

  // Nets differing only in norm parameters flatten identically.
  auto other = net;
  for (auto& b : other.blocks) {
    b.norm.gamma.array() += 1.0;
    b.norm.running_var.array() *= 3.0;
  }
  for (int id = 0; id < dims.block_count(); ++id) {
    EXPECT_EQ(other.FlattenBlock(id), net.FlattenBlock(id));
  }
  std::size_t rest = 0;
  for (int id = 0; id < dims.block_count(); ++id) rest += net.BlockSize(id);
  EXPECT_EQ(rest + 2u * 6 * 3, net.ParameterCount());
}

TEST(FlattenTest, UnknownBlockAndSizeErrors) {
  ModelDims dims{2, 2, 1, 2, NormKind::kBatch};
  BlockNet<double> net(dims);
  EXPECT_THROW(net.FlattenBlock(3), ConfigError);
  EXPECT_THROW(net.FlattenBlock(-1), ConfigError);
  std::vector<double> wrong(3, 0.0);
  EXPECT_THROW(net.UnflattenBlock(1, wrong), ConfigError);
}

}  // namespace
}  // namespace fedcvu::nn
