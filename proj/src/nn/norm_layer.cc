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

#include "fedcvu/nn/norm_layer.h"

#include <string>

namespace fedcvu::nn {

template <typename T>
NormLayer<T> NormLayer<T>::Identity(NormKind kind, int width) {
  NormLayer<T> layer;
  layer.kind = kind;
  layer.gamma = Vector<T>::Ones(width);
  layer.beta = Vector<T>::Zero(width);
  if (kind == NormKind::kBatch) {
    layer.running_mean = Vector<T>::Zero(width);
    layer.running_var = Vector<T>::Ones(width);
  }
  return layer;
}

namespace {

template <typename T>
void CheckInput(const NormLayer<T>& layer, const Matrix<T>& x) {
  if (x.cols() != layer.width()) {
    throw ConfigError("norm layer width " + std::to_string(layer.width()) +
                      " does not match input width " +
                      std::to_string(x.cols()));
  }
  CheckFinite(x, "norm layer input");
}

template <typename T>
Matrix<T> Affine(const NormLayer<T>& layer, const Matrix<T>& x_hat) {
  Matrix<T> y = x_hat;
  y.array().rowwise() *= layer.gamma.transpose().array();
  y.rowwise() += layer.beta.transpose();
  return y;
}

template <typename T>
Matrix<T> LayerNormForward(const NormLayer<T>& layer, const Matrix<T>& x,
                           Mode mode, NormCache<T>* cache) {
  const auto n = static_cast<T>(x.cols());
  Vector<T> mean = x.rowwise().sum() / n;
  Matrix<T> centered = x.colwise() - mean;
  Vector<T> var = centered.array().square().rowwise().sum() / n;
  Vector<T> inv_std = (var.array() + layer.eps).rsqrt();
  Matrix<T> x_hat = centered.array().colwise() * inv_std.array();
  Matrix<T> y = Affine(layer, x_hat);
  if (cache != nullptr) {
    cache->mode = mode;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

}  // namespace

template <typename T>
Matrix<T> NormApplyEval(const NormLayer<T>& layer, const Matrix<T>& x,
                        NormCache<T>* cache) {
  CheckInput(layer, x);
  if (layer.kind == NormKind::kLayer) {
    return LayerNormForward(layer, x, Mode::kEval, cache);
  }
  Vector<T> inv_std = (layer.running_var.array() + layer.eps).rsqrt();
  Matrix<T> x_hat = x.rowwise() - layer.running_mean.transpose();
  x_hat.array().rowwise() *= inv_std.transpose().array();
  Matrix<T> y = Affine(layer, x_hat);
  if (cache != nullptr) {
    cache->mode = Mode::kEval;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Matrix<T> NormApply(NormLayer<T>& layer, const Matrix<T>& x, Mode mode,
                    NormCache<T>* cache) {
  if (mode == Mode::kEval) return NormApplyEval(layer, x, cache);
  CheckInput(layer, x);
  if (layer.kind == NormKind::kLayer) {
    return LayerNormForward(layer, x, mode, cache);
  }
  if (x.rows() < 2) {
    throw DegenerateBatchError(
        "batch norm in train mode needs at least 2 samples, got " +
        std::to_string(x.rows()));
  }
  const auto b = static_cast<T>(x.rows());
  Vector<T> mean = x.colwise().sum().transpose() / b;
  Matrix<T> x_hat = x.rowwise() - mean.transpose();
  Vector<T> var = x_hat.array().square().colwise().sum().transpose() / b;
  Vector<T> inv_std = (var.array() + layer.eps).rsqrt();
  x_hat.array().rowwise() *= inv_std.transpose().array();

  const T m = layer.momentum;
  layer.running_mean = (T(1) - m) * layer.running_mean + m * mean;
  layer.running_var = (T(1) - m) * layer.running_var + m * var;

  Matrix<T> y = Affine(layer, x_hat);
  if (cache != nullptr) {
    cache->mode = Mode::kTrain;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
NormGrads<T> NormBackward(const NormLayer<T>& layer, const NormCache<T>& cache,
                          const Matrix<T>& dy) {
  if (cache.x_hat.rows() != dy.rows() || cache.x_hat.cols() != dy.cols()) {
    throw UsageError("norm backward: cache does not match upstream gradient");
  }
  NormGrads<T> g;
  g.dgamma = (dy.array() * cache.x_hat.array()).colwise().sum().transpose();
  g.dbeta = dy.colwise().sum().transpose();

  Matrix<T> dx_hat = dy;
  dx_hat.array().rowwise() *= layer.gamma.transpose().array();

  if (layer.kind == NormKind::kBatch) {
    if (cache.mode == Mode::kEval) {
      g.dx = dx_hat;
      g.dx.array().rowwise() *= cache.inv_std.transpose().array();
      return g;
    }
    const auto b = static_cast<T>(dy.rows());
    Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dxh = dx_hat.colwise().sum();
    Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dxh_xh =
        (dx_hat.array() * cache.x_hat.array()).colwise().sum();
    Matrix<T> dx = b * dx_hat;
    dx.rowwise() -= sum_dxh;
    dx.array() -= cache.x_hat.array().rowwise() * sum_dxh_xh.array();
    dx.array().rowwise() *= (cache.inv_std.transpose().array() / b);
    g.dx = std::move(dx);
    return g;
  }

  const auto n = static_cast<T>(dy.cols());
  Vector<T> sum_dxh = dx_hat.rowwise().sum();
  Vector<T> sum_dxh_xh = (dx_hat.array() * cache.x_hat.array()).rowwise().sum();
  Matrix<T> dx = n * dx_hat;
  dx.colwise() -= sum_dxh;
  dx.array() -= cache.x_hat.array().colwise() * sum_dxh_xh.array();
  dx.array().colwise() *= (cache.inv_std.array() / n);
  g.dx = std::move(dx);
  return g;
}

#define FEDCVU_INSTANTIATE_NORM(T)                                          \
  template struct NormLayer<T>;                                             \
  template Matrix<T> NormApply(NormLayer<T>&, const Matrix<T>&, Mode,       \
                               NormCache<T>*);                              \
  template Matrix<T> NormApplyEval(const NormLayer<T>&, const Matrix<T>&,   \
                                   NormCache<T>*);                          \
  template NormGrads<T> NormBackward(const NormLayer<T>&,                   \
                                     const NormCache<T>&, const Matrix<T>&);

FEDCVU_INSTANTIATE_NORM(float)
FEDCVU_INSTANTIATE_NORM(double)

#undef FEDCVU_INSTANTIATE_NORM

}  // namespace fedcvu::nn
