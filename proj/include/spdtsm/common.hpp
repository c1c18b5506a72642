// Copyright 2026 The spdtsm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPDTSM_COMMON_HPP
#define SPDTSM_COMMON_HPP

#include <stdexcept>
#include <string>

namespace spdtsm {

inline constexpr const char* kVersionString = "spdtsm 0.1.0";

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated preconditions: wrong shapes, empty inputs, out-of-range arguments.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Matrix outside the domain of the requested function (e.g. log of a
/// non-positive-definite matrix).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or failed iterations encountered at runtime.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Broken on-disk artifacts: bad magic, version or shape mismatches.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward without a recorded forward pass.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Model parameters violate a structural constraint (e.g. Stiefel drift).
class ModelStateError : public Error {
 public:
  using Error::Error;
};

}  // namespace spdtsm

#endif  // SPDTSM_COMMON_HPP
