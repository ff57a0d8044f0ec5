// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/cycle.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cycletrack {

// Merged configuration tree. Defaults < config file < command-line
// overrides (--section.key=value). `switch_epoch` = -1 means "half of
// total_epochs", resolved at validation time.
struct RunConfig {
  EncoderConfig encoder;
  TrainSchedule train;
  CropConfig crop;
  LossWeights loss;
  std::string variant = "full";
  std::uint64_t seed = 0;
  int threads = 2;

  static RunConfig defaults();

  // The verbatim large-scale schedule from the original training recipe.
  void apply_paper_schedule();

  void load_file(const std::string& path);
  void apply_override(const std::string& dotted_key, const std::string& value);
  void apply_overrides(const std::vector<std::string>& dotted_assignments);

  // Resolves auto fields and validates everything; throws ConfigError.
  void finalize();

  std::string to_json_string(int indent = 2) const;
};

// CYCLETRACK_SEED fallback; returns `flag_seed` when set (>= 0).
std::uint64_t resolve_seed(long long flag_seed, std::uint64_t config_seed);

}  // namespace cycletrack
