// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace groundec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller-supplied data failed validation (malformed files, bad arguments).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A model backend failed to produce a distribution.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what, std::optional<std::size_t> step = std::nullopt)
      : Error(step ? "step " + std::to_string(*step) + ": " + what : what), step_(step) {}

  std::optional<std::size_t> step() const { return step_; }

 private:
  std::optional<std::size_t> step_;
};

/// The trace backend was asked for a context it never recorded.
class TraceMiss : public BackendError {
 public:
  TraceMiss(const std::string& what, std::size_t matched_prefix)
      : BackendError(what), matched_prefix_(matched_prefix) {}

  /// Length of the longest recorded prefix of the requested context.
  std::size_t matched_prefix() const { return matched_prefix_; }

 private:
  std::size_t matched_prefix_;
};

}  // namespace groundec
