// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Euler ODE integration from the noised mixture state at t = 0 to the
// separated sources at t = 1.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "floss/flowpath.hpp"
#include "floss/noiseshape.hpp"

namespace floss {

struct Schedule {
  enum class Kind { kLinear, kCustom5, kCustom5Reversed, kSingle };
  Kind kind = Kind::kLinear;
  std::vector<double> times;  // strictly increasing, times.front()=0, back()=1
};

// The 5-step schedule applies its sizes largest-first from t = 0 as listed:
// {0.95, 4e-2, 9e-3, 9e-4, 1e-4}. The reversed ordering exists for the
// ablation harness only.
Schedule make_linear_schedule(int n_steps);
Schedule make_custom5_schedule(bool reversed = false);
Schedule make_single_schedule();

// "linear:25" | "custom5" | "custom5_reversed" | "single".
Schedule parse_schedule(const std::string& spec);

// Integrate x' = drift(t, x, cond) with Euler steps over the schedule grid,
// starting from make_x0(cond, shaper, rng). The drift must be wrapped
// (zero column sums), so project_mean(x) stays at cond along the whole
// trajectory. Throws std::runtime_error with the step index if the state
// goes non-finite.
Stack separate(const DriftFn& drift, const std::vector<double>& mixture,
               int64_t n_sources, const NoiseShaper& shaper,
               const Schedule& schedule, Rng& rng);

}  // namespace floss
