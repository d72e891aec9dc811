// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// In-process invariant checklist behind the `floss selftest` command.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace floss {

struct SelfTestItem {
  std::string name;
  bool ok = false;
  std::string detail;  // worst observed error or a short failure note
};

struct SelfTestReport {
  std::vector<SelfTestItem> items;
  bool all_ok() const {
    for (const auto& it : items)
      if (!it.ok) return false;
    return true;
  }
};

// Runs the invariant suite (projector algebra, equivariance, PIT oracle,
// gradient checks, codec round trip, sampler consistency, time sampling)
// and prints one checklist line per item to `out` when given. Deterministic
// per seed.
SelfTestReport run_selftest(uint64_t seed, std::ostream* out = nullptr);

}  // namespace floss
