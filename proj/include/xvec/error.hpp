// xvec/error.hpp

// Copyright 2026  xvec authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef XVEC_ERROR_HPP_
#define XVEC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace xvec {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Invalid configuration or invalid argument combinations (CLI exit code 2).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &msg) : Error(msg) {}
};

// Malformed or inconsistent data: file formats, trial lists, shape
// mismatches between artifacts (CLI exit code 3).
class DataError : public Error {
 public:
  explicit DataError(const std::string &msg) : Error(msg) {}
};

// Shape mismatch between in-memory operands.
class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string &msg) : DataError(msg) {}
};

// NaN/Inf or a numerically impossible state (CLI exit code 4).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string &msg) : Error(msg) {}
};

}  // namespace xvec

#endif  // XVEC_ERROR_HPP_
