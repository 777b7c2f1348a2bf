// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace m3s {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or an index outside a dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed, or a quantity outside its numeric domain.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An inconsistent or out-of-range configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unit-violating input data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace m3s
