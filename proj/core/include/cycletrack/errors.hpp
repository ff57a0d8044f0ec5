// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cycletrack {

// Process exit codes used by the CLI. Library code throws the matching
// exception type; main() translates.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitNumericError = 4,
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class DataErrorKind {
  MissingGroundtruth,
  UnreadableImage,
  NonContiguousIndices,
  MissingFile,
  BadFormat,
};

struct DataError : std::runtime_error {
  DataErrorKind kind;
  DataError(DataErrorKind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cycletrack
