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

#include "fedcvu/client/cv_align.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcvu/errors.h"

namespace fedcvu::client {

namespace {
constexpr double kMinNorm = 1e-12;
}

template <typename T>
CvAlignResult<T> CvAlignLoss(const Matrix<T>& h, std::span<const int> labels,
                             const PrototypeView& bank, double tau) {
  if (!(tau > 0)) throw ConfigError("cv-align temperature must be positive");
  const auto rows = h.rows();
  const auto k = bank.z.rows();
  if (static_cast<std::size_t>(rows) != labels.size() ||
      bank.z.cols() != h.cols() ||
      bank.initialized.size() != static_cast<std::size_t>(k)) {
    throw ConfigError("cv-align: embedding / prototype shapes disagree");
  }
  CvAlignResult<T> out;
  out.grad = Matrix<T>::Zero(rows, h.cols());

  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (bank.initialized[static_cast<std::size_t>(c)]) active.push_back(c);
  }
  if (active.empty()) {
    out.inactive = true;
    return out;
  }
  Matrix<double> zn(static_cast<Eigen::Index>(active.size()), h.cols());
  std::vector<int> slot(static_cast<std::size_t>(k), -1);
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto row = bank.z.row(active[a]);
    zn.row(static_cast<Eigen::Index>(a)) = row / std::max(row.norm(), kMinNorm);
    slot[static_cast<std::size_t>(active[a])] = static_cast<int>(a);
  }

  for (Eigen::Index i = 0; i < rows; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ConfigError("cv-align: label out of range");
    if (slot[static_cast<std::size_t>(y)] >= 0) ++out.counted;
  }
  if (out.counted == 0) return out;

  double total = 0.0;
  const double inv_count = 1.0 / out.counted;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int target = slot[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    if (target < 0) continue;
    Eigen::VectorXd hi = h.row(i).template cast<double>().transpose();
    const double hnorm = std::max(hi.norm(), kMinNorm);
    Eigen::VectorXd hn = hi / hnorm;
    Eigen::VectorXd sims = zn * hn;
    Eigen::VectorXd logits = sims / tau;
    const double max = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - max).exp();
    const double z = p.sum();
    p /= z;
    total += (max + std::log(z)) - logits(target);

    // d l / d sims_k = (p_k - [k = target]) / tau;
    // d sims_k / d h = (zn_k - sims_k * hn) / |h|.
    Eigen::VectorXd dsims = p;
    dsims(target) -= 1.0;
    dsims *= inv_count / tau;
    Eigen::VectorXd dh =
        (zn.transpose() * dsims - hn * dsims.dot(sims)) / hnorm;
    out.grad.row(i) = dh.transpose().template cast<T>();
  }
  out.loss = total * inv_count;
  return out;
}

template CvAlignResult<float> CvAlignLoss(const Matrix<float>&,
                                          std::span<const int>,
                                          const PrototypeView&, double);
template CvAlignResult<double> CvAlignLoss(const Matrix<double>&,
                                           std::span<const int>,
                                           const PrototypeView&, double);

}  // namespace fedcvu::client
