// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/dca.hpp"

namespace cycletrack::dca {

Counters& counters() {
  static Counters c;
  return c;
}

void reset_counters() {
  counters().prompt_calls.store(0, std::memory_order_relaxed);
  counters().noise_calls.store(0, std::memory_order_relaxed);
}

}  // namespace cycletrack::dca
