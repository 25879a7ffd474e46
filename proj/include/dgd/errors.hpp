// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <stdexcept>
#include <string>

namespace dgd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or model shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A function argument outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or divergence during optimisation.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Probe/gallery sets that violate the single-shot protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgd
