// Copyright 2026 The subpool Authors.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace subpool {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes, out-of-range labels, invalid configuration values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or iteration caps exceeded inside a numerical routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The feature matrix does not have the rank the pooling layer asked for.
class RankError : public NumericError {
 public:
  RankError(const std::string& what, std::size_t numerical_rank)
      : NumericError(what), numerical_rank_(numerical_rank) {}

  std::size_t numerical_rank() const { return numerical_rank_; }

 private:
  std::size_t numerical_rank_;
};

/// Malformed or unreadable files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace subpool
