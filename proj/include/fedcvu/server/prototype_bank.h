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

#ifndef FEDCVU_SERVER_PROTOTYPE_BANK_H_
#define FEDCVU_SERVER_PROTOTYPE_BANK_H_

#include <span>
#include <vector>

#include "fedcvu/client/client.h"
#include "fedcvu/client/cv_align.h"

namespace fedcvu::server {

using nn::Matrix;

// Per-class embedding anchors kept by the server. Uninitialized rows are zero.
struct PrototypeBank {
  Matrix<double> z;               // [K, d]
  std::vector<bool> initialized;  // [K]
  double momentum = 0.9;          // in [0, 1)

  static PrototypeBank Empty(int num_classes, int width, double momentum);
  client::PrototypeView View() const { return {z, initialized}; }
  int num_initialized() const;
};

// For every class seen this round (pooled count m > 0) with pooled mean b:
// first sighting sets z = b, afterwards z = momentum * z + (1 - momentum) * b.
// Stats are pooled in the given order. Throws NumericError on non-finite
// sums and ConfigError on shape mismatch.
void UpdatePrototypes(PrototypeBank& bank,
                      std::span<const client::ClassStats* const> stats);

}  // namespace fedcvu::server

#endif  // FEDCVU_SERVER_PROTOTYPE_BANK_H_
