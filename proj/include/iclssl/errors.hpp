// Copyright 2026 The iclssl Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace iclssl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameter, unknown enum name, unknown config key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape or dimension mismatch between arrays.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or out-of-range numeric values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A pre-normalisation embedding row had (near) zero norm.
class DegenerateEmbeddingError : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Cached data failed checksum or format validation.
class CorruptionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace iclssl
