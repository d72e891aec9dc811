// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace floss {

namespace {
const std::vector<double> kCustom5Sizes = {0.95, 4e-2, 9e-3, 9e-4, 1e-4};

Schedule from_sizes(Schedule::Kind kind, const std::vector<double>& sizes) {
  Schedule s;
  s.kind = kind;
  s.times.push_back(0.0);
  double acc = 0.0;
  for (double d : sizes) {
    acc += d;
    s.times.push_back(acc);
  }
  s.times.back() = 1.0;  // guard the cumulative sum against roundoff
  return s;
}
}  // namespace

Schedule make_linear_schedule(int n_steps) {
  if (n_steps < 1)
    throw std::invalid_argument("schedule: linear step count must be >= 1");
  Schedule s;
  s.kind = Schedule::Kind::kLinear;
  for (int i = 0; i <= n_steps; ++i)
    s.times.push_back(static_cast<double>(i) / n_steps);
  s.times.back() = 1.0;
  return s;
}

Schedule make_custom5_schedule(bool reversed) {
  std::vector<double> sizes = kCustom5Sizes;
  if (reversed) std::reverse(sizes.begin(), sizes.end());
  return from_sizes(reversed ? Schedule::Kind::kCustom5Reversed
                             : Schedule::Kind::kCustom5,
                    sizes);
}

Schedule make_single_schedule() {
  Schedule s;
  s.kind = Schedule::Kind::kSingle;
  s.times = {0.0, 1.0};
  return s;
}

Schedule parse_schedule(const std::string& spec) {
  if (spec == "single") return make_single_schedule();
  if (spec == "custom5") return make_custom5_schedule();
  if (spec == "custom5_reversed") return make_custom5_schedule(true);
  if (spec.rfind("linear:", 0) == 0) {
    const int n = std::stoi(spec.substr(7));
    return make_linear_schedule(n);
  }
  throw std::invalid_argument(
      "schedule: unknown spec '" + spec +
      "' (expected linear:<n>|custom5|custom5_reversed|single)");
}

Stack separate(const DriftFn& drift, const std::vector<double>& mixture,
               int64_t n_sources, const NoiseShaper& shaper,
               const Schedule& schedule, Rng& rng) {
  if (schedule.times.size() < 2 || schedule.times.front() != 0.0 ||
      schedule.times.back() != 1.0)
    throw std::invalid_argument("separate: schedule grid must run from 0 to 1");
  for (size_t i = 1; i < schedule.times.size(); ++i)
    if (schedule.times[i] <= schedule.times[i - 1])
      throw std::invalid_argument("separate: schedule grid must be increasing");

  const Stack cond = mean_stack_from_mixture(mixture, n_sources);
  std::vector<double> cond_vec(mixture.size());
  for (size_t i = 0; i < cond_vec.size(); ++i)
    cond_vec[i] = mixture[i] / static_cast<double>(n_sources);
  Stack x = make_x0(cond, shaper, rng);
  for (size_t step = 0; step + 1 < schedule.times.size(); ++step) {
    const double t = schedule.times[step];
    const double dt = schedule.times[step + 1] - t;
    const Stack v = drift(t, x, cond_vec);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += dt * v.data[i];
    for (double value : x.data)
      if (!std::isfinite(value))
        throw std::runtime_error("separate: non-finite state after step " +
                                 std::to_string(step));
  }
  return x;
}

}  // namespace floss
