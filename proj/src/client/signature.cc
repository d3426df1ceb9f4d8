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

#include "fedcvu/client/signature.h"

#include <cmath>
#include <random>
#include <string>

#include "fedcvu/errors.h"

namespace fedcvu::client {

SignatureSketcher SignatureSketcher::Gaussian(
    const std::vector<std::size_t>& block_dims, int proj_dim,
    std::uint64_t seed) {
  if (proj_dim < 1) throw ConfigError("sketch dimension must be positive");
  SignatureSketcher s;
  s.proj_dim_ = proj_dim;
  s.block_dims_ = block_dims;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(proj_dim));
  for (auto dim : block_dims) {
    nn::Matrix<double> p(proj_dim, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
    s.projections_.push_back(std::move(p));
  }
  return s;
}

SignatureSketcher SignatureSketcher::Identity(
    const std::vector<std::size_t>& block_dims) {
  SignatureSketcher s;
  s.identity_ = true;
  s.block_dims_ = block_dims;
  return s;
}

int SignatureSketcher::OutputDim(int block_id) const {
  const auto dim = block_dims_.at(static_cast<std::size_t>(block_id));
  return identity_ ? static_cast<int>(dim) : proj_dim_;
}

std::vector<double> SignatureSketcher::Sketch(
    int block_id, std::span<const double> direction) const {
  if (block_id < 0 || static_cast<std::size_t>(block_id) >= block_dims_.size() ||
      direction.size() != block_dims_[static_cast<std::size_t>(block_id)]) {
    throw ConfigError("sketch: direction does not match block " +
                      std::to_string(block_id));
  }
  if (identity_) return {direction.begin(), direction.end()};
  Eigen::Map<const Eigen::VectorXd> d(direction.data(),
                                      static_cast<Eigen::Index>(direction.size()));
  Eigen::VectorXd y = projections_[static_cast<std::size_t>(block_id)] * d;
  const double n = y.norm();
  if (n > 0) y /= n;
  return {y.data(), y.data() + y.size()};
}

LayerSignature MakeSignature(int block_id, std::span<const double> update,
                             const SignatureSketcher* sketcher) {
  LayerSignature sig;
  sig.block_id = block_id;
  double sq = 0.0;
  for (double v : update) sq += v * v;
  sig.norm = std::sqrt(sq);
  sig.direction.assign(update.size(), 0.0);
  if (sig.norm > 0) {
    for (std::size_t i = 0; i < update.size(); ++i) {
      sig.direction[i] = update[i] / sig.norm;
    }
  }
  if (sketcher != nullptr) {
    sig.direction = sketcher->Sketch(block_id, sig.direction);
    sig.proj_dim = static_cast<int>(sig.direction.size());
  }
  return sig;
}

template <typename T>
std::vector<LayerSignature> ComputeSignatures(const nn::BlockNet<T>& pre,
                                              const nn::BlockNet<T>& post,
                                              const SignatureSketcher* sketcher) {
  if (pre.dims.block_count() != post.dims.block_count()) {
    throw ConfigError("signatures: nets have different architectures");
  }
  std::vector<LayerSignature> out;
  for (int id = 0; id < pre.dims.block_count(); ++id) {
    const auto a = pre.FlattenBlock(id);
    const auto b = post.FlattenBlock(id);
    if (a.size() != b.size()) {
      throw ConfigError("signatures: block sizes differ");
    }
    std::vector<double> g(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      g[i] = static_cast<double>(b[i]) - static_cast<double>(a[i]);
    }
    out.push_back(MakeSignature(id, g, sketcher));
  }
  return out;
}

template std::vector<LayerSignature> ComputeSignatures(
    const nn::BlockNet<float>&, const nn::BlockNet<float>&,
    const SignatureSketcher*);
template std::vector<LayerSignature> ComputeSignatures(
    const nn::BlockNet<double>&, const nn::BlockNet<double>&,
    const SignatureSketcher*);

}  // namespace fedcvu::client
