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

#include "fedcvu/nn/block_net.h"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fedcvu::nn {

void ModelDims::Validate() const {
  if (input_dim < 1 || width < 1 || num_blocks < 1 || num_classes < 1) {
    throw ConfigError("model dimensions must be positive (d_in=" +
                      std::to_string(input_dim) + ", d=" +
                      std::to_string(width) + ", L=" +
                      std::to_string(num_blocks) + ", K=" +
                      std::to_string(num_classes) + ")");
  }
}

template <typename T>
T Gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T GeluGrad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi *
                                              std::numbers::sqrt2);
  return cdf + x * pdf;
}

namespace {

template <typename T>
Linear<T> ZeroLinear(int out, int in) {
  return Linear<T>{Matrix<T>::Zero(out, in), Vector<T>::Zero(out)};
}

template <typename T>
Linear<T> RandomLinear(int out, int in, std::mt19937_64& rng, double scale) {
  const double bound = scale / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Linear<T> lin = ZeroLinear<T>(out, in);
  for (Eigen::Index i = 0; i < lin.weight.size(); ++i) {
    lin.weight.data()[i] = static_cast<T>(dist(rng));
  }
  return lin;
}

template <typename T>
Matrix<T> Affine(const Linear<T>& lin, const Matrix<T>& x) {
  Matrix<T> y = x * lin.weight.transpose();
  y.rowwise() += lin.bias.transpose();
  return y;
}

template <typename T>
void CheckBlockId(const BlockNet<T>& net, int block_id) {
  if (block_id < 0 || block_id >= net.dims.block_count()) {
    throw ConfigError("unknown block id " + std::to_string(block_id));
  }
}

// Tensors of one block/partition, in flattening order.
template <typename T>
std::vector<std::span<T>> BlockTensors(BlockNet<T>& net, int block_id,
                                       Partition tag) {
  CheckBlockId(net, block_id);
  std::vector<std::span<T>> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), m.size()); };
  if (tag == Partition::kRest) {
    Linear<T>* lin = nullptr;
    if (block_id == 0) {
      lin = &net.embed;
    } else if (block_id == net.dims.head_block()) {
      lin = &net.head;
    } else {
      lin = &net.blocks[block_id - 1].linear;
    }
    add(lin->weight);
    add(lin->bias);
    return out;
  }
  if (block_id == 0 || block_id == net.dims.head_block()) return out;
  auto& norm = net.blocks[block_id - 1].norm;
  add(norm.gamma);
  add(norm.beta);
  if (norm.has_running_stats()) {
    add(norm.running_mean);
    add(norm.running_var);
  }
  return out;
}

}  // namespace

template <typename T>
BlockNet<T>::BlockNet(const ModelDims& d) : dims(d) {
  dims.Validate();
  embed = ZeroLinear<T>(d.width, d.input_dim);
  head = ZeroLinear<T>(d.num_classes, d.width);
  blocks.reserve(d.num_blocks);
  for (int i = 0; i < d.num_blocks; ++i) {
    blocks.push_back(ResidualBlock<T>{ZeroLinear<T>(d.width, d.width),
                                      NormLayer<T>::Identity(d.norm_kind,
                                                             d.width)});
  }
}

template <typename T>
BlockNet<T> BlockNet<T>::Random(const ModelDims& d, std::mt19937_64& rng,
                                double residual_scale) {
  BlockNet<T> net(d);
  net.embed = RandomLinear<T>(d.width, d.input_dim, rng, 1.0);
  for (auto& b : net.blocks) {
    b.linear = RandomLinear<T>(d.width, d.width, rng, residual_scale);
  }
  net.head = RandomLinear<T>(d.num_classes, d.width, rng, 1.0);
  return net;
}

template <typename T>
BlockNet<T> BlockNet<T>::ZerosLike() const {
  BlockNet<T> z(dims);
  for (auto& b : z.blocks) {
    b.norm.gamma.setZero();
    if (b.norm.has_running_stats()) b.norm.running_var.setZero();
  }
  return z;
}

template <typename T>
std::size_t BlockNet<T>::ParameterCount() const {
  std::size_t n = 0;
  ForEachParameter([&](const ParamInfo&, std::span<const T> s) { n += s.size(); });
  return n;
}

template <typename T>
std::size_t BlockNet<T>::BlockSize(int block_id, Partition tag) const {
  std::size_t n = 0;
  for (auto s : BlockTensors(const_cast<BlockNet<T>&>(*this), block_id, tag)) {
    n += s.size();
  }
  return n;
}

template <typename T>
std::vector<T> BlockNet<T>::FlattenBlock(int block_id, Partition tag) const {
  std::vector<T> flat;
  flat.reserve(BlockSize(block_id, tag));
  for (auto s : BlockTensors(const_cast<BlockNet<T>&>(*this), block_id, tag)) {
    flat.insert(flat.end(), s.begin(), s.end());
  }
  return flat;
}

template <typename T>
void BlockNet<T>::UnflattenBlock(int block_id, std::span<const T> flat,
                                 Partition tag) {
  auto tensors = BlockTensors(*this, block_id, tag);
  std::size_t total = 0;
  for (auto s : tensors) total += s.size();
  if (total != flat.size()) {
    throw ConfigError("block " + std::to_string(block_id) + " expects " +
                      std::to_string(total) + " values, got " +
                      std::to_string(flat.size()));
  }
  auto it = flat.begin();
  for (auto s : tensors) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(s.size()), s.begin());
    it += static_cast<std::ptrdiff_t>(s.size());
  }
}

template <typename T>
NormState<T> BlockNet<T>::GetNormState() const {
  NormState<T> state;
  state.reserve(blocks.size());
  for (const auto& b : blocks) state.push_back(b.norm);
  return state;
}

template <typename T>
void BlockNet<T>::SetNormState(const NormState<T>& state) {
  if (state.size() != blocks.size()) {
    throw ConfigError("norm state has " + std::to_string(state.size()) +
                      " layers, net has " + std::to_string(blocks.size()));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].norm = state[i];
}

namespace {

template <typename T>
void CheckBatch(const BlockNet<T>& net, const Matrix<T>& batch) {
  if (batch.rows() < 1 || batch.cols() != net.dims.input_dim) {
    throw ConfigError("batch shape [" + std::to_string(batch.rows()) + ", " +
                      std::to_string(batch.cols()) + "] does not match d_in=" +
                      std::to_string(net.dims.input_dim));
  }
}

template <typename T>
constexpr T kInvSqrt2 = T(std::numbers::sqrt2 / 2);
template <typename T>
constexpr T kPdfScale = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);

// Vectorized form of Gelu().
template <typename T>
Matrix<T> GeluMatrix(const Matrix<T>& x) {
  const auto a = x.array();
  return (T(0.5) * a * (T(1) + (a * kInvSqrt2<T>).erf())).matrix();
}

}  // namespace

template <typename T>
ForwardOutput<T> Forward(BlockNet<T>& net, const Matrix<T>& batch, Mode mode,
                         ForwardCache<T>* cache) {
  if (mode == Mode::kEval && cache == nullptr) return ForwardEval(net, batch);
  CheckBatch(net, batch);
  if (cache != nullptr) {
    cache->valid = false;
    cache->input = batch;
    cache->blocks.assign(net.blocks.size(), BlockCache<T>{});
  }
  Matrix<T> h = Affine(net.embed, batch);
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto& block = net.blocks[i];
    NormCache<T>* norm_cache = cache ? &cache->blocks[i].norm : nullptr;
    Matrix<T> normed =
        NormApply(block.norm, Affine(block.linear, h), mode, norm_cache);
    if (cache == nullptr) {
      h += GeluMatrix(normed);
      continue;
    }
    // One erf per element serves both the activation and its derivative.
    auto& bc = cache->blocks[i];
    const auto x = normed.array();
    const Matrix<T> cdf = (T(0.5) * (T(1) + (x * kInvSqrt2<T>).erf())).matrix();
    Matrix<T> branch = (x * cdf.array()).matrix();
    bc.gelu_grad =
        (cdf.array() + x * (T(-0.5) * x.square()).exp() * kPdfScale<T>).matrix();
    bc.input = h;
    bc.normed = std::move(normed);
    h += branch;
  }
  ForwardOutput<T> out;
  out.logits = Affine(net.head, h);
  if (cache != nullptr) {
    cache->embeddings = h;
    cache->valid = true;
  }
  out.embeddings = std::move(h);
  return out;
}

template <typename T>
ForwardOutput<T> ForwardEval(const BlockNet<T>& net, const Matrix<T>& batch) {
  CheckBatch(net, batch);
  Matrix<T> h = Affine(net.embed, batch);
  for (const auto& block : net.blocks) {
    h += GeluMatrix(NormApplyEval(block.norm, Affine(block.linear, h)));
  }
  ForwardOutput<T> out;
  out.logits = Affine(net.head, h);
  out.embeddings = std::move(h);
  return out;
}

template <typename T>
BlockNet<T> Backward(const BlockNet<T>& net, const ForwardCache<T>& cache,
                     const Matrix<T>& dlogits, const Matrix<T>& dembeddings) {
  if (!cache.valid || cache.blocks.size() != net.blocks.size()) {
    throw UsageError("Backward called without a matching forward cache");
  }
  const auto rows = cache.input.rows();
  if (dlogits.rows() != rows || dlogits.cols() != net.dims.num_classes) {
    throw ConfigError("dlogits shape does not match the cached batch");
  }
  BlockNet<T> grads = net.ZerosLike();

  grads.head.weight = dlogits.transpose() * cache.embeddings;
  grads.head.bias = dlogits.colwise().sum().transpose();
  Matrix<T> dh = dlogits * net.head.weight;
  if (dembeddings.size() != 0) {
    if (dembeddings.rows() != rows || dembeddings.cols() != net.dims.width) {
      throw ConfigError("dembeddings shape does not match the cached batch");
    }
    dh += dembeddings;
  }

  for (std::size_t k = net.blocks.size(); k-- > 0;) {
    const auto& block = net.blocks[k];
    const auto& bc = cache.blocks[k];
    Matrix<T> dnormed =
        bc.gelu_grad.size() == bc.normed.size()
            ? Matrix<T>(dh.array() * bc.gelu_grad.array())
            : Matrix<T>(dh.array() *
                        bc.normed.unaryExpr([](T v) { return GeluGrad(v); }).array());
    NormGrads<T> ng = NormBackward(block.norm, bc.norm, dnormed);
    auto& g = grads.blocks[k];
    g.norm.gamma = std::move(ng.dgamma);
    g.norm.beta = std::move(ng.dbeta);
    g.linear.weight = ng.dx.transpose() * bc.input;
    g.linear.bias = ng.dx.colwise().sum().transpose();
    dh += ng.dx * block.linear.weight;
  }

  grads.embed.weight = dh.transpose() * cache.input;
  grads.embed.bias = dh.colwise().sum().transpose();
  return grads;
}

#define FEDCVU_INSTANTIATE_NET(T)                                             \
  template T Gelu(T);                                                         \
  template T GeluGrad(T);                                                     \
  template struct BlockNet<T>;                                                \
  template ForwardOutput<T> Forward(BlockNet<T>&, const Matrix<T>&, Mode,     \
                                    ForwardCache<T>*);                        \
  template ForwardOutput<T> ForwardEval(const BlockNet<T>&, const Matrix<T>&); \
  template BlockNet<T> Backward(const BlockNet<T>&, const ForwardCache<T>&,   \
                                const Matrix<T>&, const Matrix<T>&);

FEDCVU_INSTANTIATE_NET(float)
FEDCVU_INSTANTIATE_NET(double)

#undef FEDCVU_INSTANTIATE_NET

}  // namespace fedcvu::nn
