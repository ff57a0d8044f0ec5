// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/cycle.hpp"

namespace cycletrack {

std::atomic<long>& gt_label_leaks() {
  static std::atomic<long> counter{0};
  return counter;
}

}  // namespace cycletrack
