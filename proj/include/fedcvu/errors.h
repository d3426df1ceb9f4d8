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

#ifndef FEDCVU_ERRORS_H_
#define FEDCVU_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fedcvu {

// Invalid configuration, shapes or dimensions. Raised before any work starts
// where possible; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Batch-norm statistics cannot be estimated from fewer than two samples.
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse, e.g. calling Backward without a forward cache.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Client/server message contract violated.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedcvu

#endif  // FEDCVU_ERRORS_H_
