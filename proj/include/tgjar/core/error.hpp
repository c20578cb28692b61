// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tgjar {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image shapes that violate an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Arguments outside an operation's domain (qf out of range, empty caption, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem, decoding and checkpoint-format failures.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not match the configuration it is used with.
class ConfigMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace tgjar
