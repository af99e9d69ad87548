// Copyright (c) 2026 The pvadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pvad {

// Error taxonomy shared by every module.  The CLI maps these onto its
// stable exit codes: UsageError/ConfigError -> 1, DataError (and the
// ShapeError subclass) -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad invocation or malformed option/config values.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Invalid construction parameters (e.g. a non power-of-two FFT size).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Broken or missing input data: files, manifests, checkpoints, corpora.
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor/layer dimension mismatch.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values where finite math was required (e.g. NaN loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pvad
