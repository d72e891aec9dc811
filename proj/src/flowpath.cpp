// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/flowpath.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace floss {

std::vector<double> cond_row(const FlowPair& pair) {
  std::vector<double> row(static_cast<size_t>(pair.cond.l));
  for (int64_t i = 0; i < pair.cond.l; ++i) row[static_cast<size_t>(i)] = pair.cond.at(0, i);
  return row;
}

Stack make_x0(const Stack& cond, const NoiseShaper& shaper, Rng& rng) {
  if (shaper.length > 0 && shaper.length != cond.l)
    throw std::invalid_argument("make_x0: shaper built for length " +
                                std::to_string(shaper.length) + ", conditioning has " +
                                std::to_string(cond.l));
  Stack noise = draw_shaped_noise(shaper, cond.k, cond.l, rng);
  Stack perp = project_perp(noise);
  Stack x0(cond.k, cond.l);
  for (size_t i = 0; i < x0.data.size(); ++i) x0.data[i] = cond.data[i] + perp.data[i];
  return x0;
}

FlowPair make_flow_pair(const Stack& sources, const NoiseShaper& shaper, Rng& rng) {
  validate_stack(sources, "make_flow_pair");
  FlowPair pair;
  pair.x1 = sources;
  pair.cond = mean_stack_from_mixture(mix(sources), sources.k);
  pair.x0 = make_x0(pair.cond, shaper, rng);
  return pair;
}

FlowState interpolate(const FlowPair& pair, double t) {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("interpolate: t = " + std::to_string(t) +
                                " outside [0, 1]");
  FlowState state;
  state.t = t;
  state.x = Stack(pair.x0.k, pair.x0.l);
  for (size_t i = 0; i < state.x.data.size(); ++i)
    state.x.data[i] = t * pair.x1.data[i] + (1.0 - t) * pair.x0.data[i];
  return state;
}

Stack target(const FlowPair& pair) {
  Stack out(pair.x0.k, pair.x0.l);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = pair.x1.data[i] - pair.x0.data[i];
  return out;
}

Stack wrap_drift(const RawVelocityFn& raw, double t, const Stack& x_t,
                 const std::vector<double>& cond) {
  Stack out = project_perp(raw(t, project_perp(x_t), cond));
  for (double v : out.data)
    if (!std::isfinite(v))
      throw std::runtime_error("wrap_drift: non-finite network output (training divergence)");
  return out;
}

DriftFn wrapped(const RawVelocityFn& raw) {
  return [raw](double t, const Stack& x_t, const std::vector<double>& cond) {
    return wrap_drift(raw, t, x_t, cond);
  };
}

}  // namespace floss
