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

#include "fedcvu/server/prototype_bank.h"

#include <algorithm>

#include "fedcvu/errors.h"

namespace fedcvu::server {

PrototypeBank PrototypeBank::Empty(int num_classes, int width, double momentum) {
  if (!(momentum >= 0 && momentum < 1)) {
    throw ConfigError("prototype momentum must be in [0, 1)");
  }
  PrototypeBank bank;
  bank.z = Matrix<double>::Zero(num_classes, width);
  bank.initialized.assign(static_cast<std::size_t>(num_classes), false);
  bank.momentum = momentum;
  return bank;
}

int PrototypeBank::num_initialized() const {
  return static_cast<int>(std::count(initialized.begin(), initialized.end(), true));
}

void UpdatePrototypes(PrototypeBank& bank,
                      std::span<const client::ClassStats* const> stats) {
  const auto k = bank.z.rows();
  Matrix<double> sum = Matrix<double>::Zero(k, bank.z.cols());
  std::vector<std::int64_t> count(static_cast<std::size_t>(k), 0);
  for (const auto* s : stats) {
    if (s->sum.rows() != k || s->sum.cols() != bank.z.cols()) {
      throw ConfigError("class stats shape does not match the prototype bank");
    }
    sum += s->sum;
    for (Eigen::Index c = 0; c < k; ++c) {
      count[static_cast<std::size_t>(c)] += s->count[static_cast<std::size_t>(c)];
    }
  }
  if (!sum.allFinite()) throw NumericError("non-finite class statistics");
  const double mu = bank.momentum;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto m = count[static_cast<std::size_t>(c)];
    if (m == 0) continue;
    const auto mean = sum.row(c) / static_cast<double>(m);
    if (!bank.initialized[static_cast<std::size_t>(c)]) {
      bank.z.row(c) = mean;
      bank.initialized[static_cast<std::size_t>(c)] = true;
    } else {
      bank.z.row(c) = mu * bank.z.row(c) + (1.0 - mu) * mean;
    }
  }
}

}  // namespace fedcvu::server
