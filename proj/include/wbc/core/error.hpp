// Copyright 2026 The wbcbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace wbc {

// Bad configuration or violated contract. CLI maps this to exit code 3.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// I/O and other runtime failures. CLI maps this to exit code 1.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// A training run hit a non-finite loss. Carries the diagnostic context.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(const std::string& what, long seed, int epoch, double lr)
      : std::runtime_error(what), seed(seed), epoch(epoch), lr(lr) {}
  long seed;
  int epoch;
  double lr;
};

}  // namespace wbc
