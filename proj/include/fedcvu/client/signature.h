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

#ifndef FEDCVU_CLIENT_SIGNATURE_H_
#define FEDCVU_CLIENT_SIGNATURE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fedcvu/nn/block_net.h"

namespace fedcvu::client {

// Per-block summary of a local update: unit direction (or zero) and norm.
struct LayerSignature {
  int block_id = 0;
  std::vector<double> direction;
  double norm = 0.0;
  // Sketch dimension when the direction was projected, 0 for full.
  int proj_dim = 0;
};

// Shared random projection of block directions. All clients construct it
// from the same seed so sketched directions stay comparable.
class SignatureSketcher {
 public:
  // Gaussian N(0, 1/proj_dim) projection per block.
  static SignatureSketcher Gaussian(const std::vector<std::size_t>& block_dims,
                                    int proj_dim, std::uint64_t seed);
  // Identity projection (proj_dim == block dim); sketching is then a no-op.
  static SignatureSketcher Identity(const std::vector<std::size_t>& block_dims);

  // Projects and re-normalizes a unit direction; zero stays zero.
  std::vector<double> Sketch(int block_id, std::span<const double> direction) const;
  int OutputDim(int block_id) const;
  int proj_dim() const { return proj_dim_; }

 private:
  int proj_dim_ = 0;
  bool identity_ = false;
  std::vector<std::size_t> block_dims_;
  std::vector<nn::Matrix<double>> projections_;
};

// r = |g|, direction = g / r, or the zero vector when r == 0. The sketcher,
// when given, is applied to the direction.
LayerSignature MakeSignature(int block_id, std::span<const double> update,
                             const SignatureSketcher* sketcher = nullptr);

// Per block: g = flatten(post) - flatten(pre) over the rest partition.
template <typename T>
std::vector<LayerSignature> ComputeSignatures(
    const nn::BlockNet<T>& pre, const nn::BlockNet<T>& post,
    const SignatureSketcher* sketcher = nullptr);

}  // namespace fedcvu::client

#endif  // FEDCVU_CLIENT_SIGNATURE_H_
