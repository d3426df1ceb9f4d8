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

#ifndef FEDCVU_NN_BLOCK_NET_H_
#define FEDCVU_NN_BLOCK_NET_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "fedcvu/nn/norm_layer.h"
#include "fedcvu/nn/tensor.h"

namespace fedcvu::nn {

struct ModelDims {
  int input_dim = 32;
  int width = 64;
  int num_blocks = 10;  // residual blocks, L
  int num_classes = 12;
  NormKind norm_kind = NormKind::kBatch;

  // Block ids: 0 = embed, 1..L = residual blocks, L + 1 = head.
  int block_count() const { return num_blocks + 2; }
  int head_block() const { return num_blocks + 1; }

  void Validate() const;
};

// Which side of the VS-Norm split a tensor lives on.
enum class Partition { kNorm, kRest };

struct ParamInfo {
  int block_id;
  Partition tag;
  std::string_view name;
};

template <typename T>
struct Linear {
  Matrix<T> weight;  // [out, in]
  Vector<T> bias;    // [out]
};

// h_out = h + GELU(Norm(W h + b))
template <typename T>
struct ResidualBlock {
  Linear<T> linear;
  NormLayer<T> norm;
};

// Full normalization state of a net (trainable affine pair plus running
// statistics), one entry per residual block.
template <typename T>
using NormState = std::vector<NormLayer<T>>;

// Block-structured classifier: embed (d_in -> d), L residual blocks, head
// (d -> K). The same type doubles as the gradient container; running
// statistics are unused there.
//
// Flattened block layout (block-major, then layer-major, then row-major):
//   rest, embed / head / residual linear: weight row by row, then bias.
//   norm, residual block: gamma, beta, running_mean, running_var (the last
//         two only for batch norm). Embed and head have no norm tensors.
template <typename T>
struct BlockNet {
  ModelDims dims;
  Linear<T> embed;
  std::vector<ResidualBlock<T>> blocks;
  Linear<T> head;

  BlockNet() = default;
  // Zero linear layers and identity norm layers.
  explicit BlockNet(const ModelDims& dims);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. Residual
  // branch weights are further scaled by `residual_scale`.
  static BlockNet Random(const ModelDims& dims, std::mt19937_64& rng,
                         double residual_scale = 1.0);

  // All-zero tensors of the same shapes (gradient accumulator).
  BlockNet ZerosLike() const;

  // Visits every trainable tensor (linear weights/biases and norm
  // gamma/beta) in flattening order. f(const ParamInfo&, std::span<T>).
  template <typename F>
  void ForEachParameter(F&& f);
  template <typename F>
  void ForEachParameter(F&& f) const;

  std::size_t ParameterCount() const;
  std::size_t BlockSize(int block_id, Partition tag = Partition::kRest) const;

  // Throws ConfigError for an unknown block id or a size mismatch.
  std::vector<T> FlattenBlock(int block_id,
                              Partition tag = Partition::kRest) const;
  void UnflattenBlock(int block_id, std::span<const T> flat,
                      Partition tag = Partition::kRest);

  NormState<T> GetNormState() const;
  void SetNormState(const NormState<T>& state);

  template <typename U>
  BlockNet<U> Cast() const;
};

template <typename T>
struct BlockCache {
  Matrix<T> input;
  NormCache<T> norm;
  Matrix<T> normed;
  Matrix<T> gelu_grad;  // GELU'(normed), filled during the forward pass
};

template <typename T>
struct ForwardCache {
  Matrix<T> input;
  std::vector<BlockCache<T>> blocks;
  Matrix<T> embeddings;
  bool valid = false;
};

template <typename T>
struct ForwardOutput {
  Matrix<T> logits;      // [B, K]
  Matrix<T> embeddings;  // [B, d], pre-head activations
};

// Train mode updates batch-norm running statistics. Throws ConfigError on a
// shape mismatch and DegenerateBatchError for a 1-row train batch with batch
// norm.
template <typename T>
ForwardOutput<T> Forward(BlockNet<T>& net, const Matrix<T>& batch, Mode mode,
                         ForwardCache<T>* cache = nullptr);

// Eval-mode forward; never mutates the net.
template <typename T>
ForwardOutput<T> ForwardEval(const BlockNet<T>& net, const Matrix<T>& batch);

// Gradients of a loss whose partial derivatives w.r.t. logits and
// embeddings are given. `dembeddings` may be empty. Throws UsageError when
// the cache was not produced by a forward pass.
template <typename T>
BlockNet<T> Backward(const BlockNet<T>& net, const ForwardCache<T>& cache,
                     const Matrix<T>& dlogits, const Matrix<T>& dembeddings);

template <typename T>
T Gelu(T x);
template <typename T>
T GeluGrad(T x);

// ---------------------------------------------------------------------------

template <typename T>
template <typename F>
void BlockNet<T>::ForEachParameter(F&& f) {
  auto visit_linear = [&](int id, Linear<T>& lin) {
    f(ParamInfo{id, Partition::kRest, "weight"},
      std::span<T>(lin.weight.data(), lin.weight.size()));
    f(ParamInfo{id, Partition::kRest, "bias"},
      std::span<T>(lin.bias.data(), lin.bias.size()));
  };
  visit_linear(0, embed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    visit_linear(id, blocks[i].linear);
    auto& norm = blocks[i].norm;
    f(ParamInfo{id, Partition::kNorm, "gamma"},
      std::span<T>(norm.gamma.data(), norm.gamma.size()));
    f(ParamInfo{id, Partition::kNorm, "beta"},
      std::span<T>(norm.beta.data(), norm.beta.size()));
  }
  visit_linear(static_cast<int>(blocks.size()) + 1, head);
}

template <typename T>
template <typename F>
void BlockNet<T>::ForEachParameter(F&& f) const {
  const_cast<BlockNet<T>*>(this)->ForEachParameter(
      [&](const ParamInfo& info, std::span<T> s) {
        f(info, std::span<const T>(s.data(), s.size()));
      });
}

template <typename T>
template <typename U>
BlockNet<U> BlockNet<T>::Cast() const {
  auto cast_linear = [](const Linear<T>& lin) {
    return Linear<U>{lin.weight.template cast<U>(),
                     lin.bias.template cast<U>()};
  };
  BlockNet<U> out;
  out.dims = dims;
  out.embed = cast_linear(embed);
  out.head = cast_linear(head);
  out.blocks.reserve(blocks.size());
  for (const auto& b : blocks) {
    NormLayer<U> n;
    n.kind = b.norm.kind;
    n.gamma = b.norm.gamma.template cast<U>();
    n.beta = b.norm.beta.template cast<U>();
    n.running_mean = b.norm.running_mean.template cast<U>();
    n.running_var = b.norm.running_var.template cast<U>();
    n.eps = static_cast<U>(b.norm.eps);
    n.momentum = static_cast<U>(b.norm.momentum);
    out.blocks.push_back(ResidualBlock<U>{cast_linear(b.linear), std::move(n)});
  }
  return out;
}

}  // namespace fedcvu::nn

#endif  // FEDCVU_NN_BLOCK_NET_H_
