// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// The conditional flow-matching path on the mixture-consistent slice:
// initial-state construction, linear interpolation, regression target, and
// the centering-projected drift parameterization.

#pragma once

#include <functional>
#include <vector>

#include "floss/geometry.hpp"
#include "floss/noiseshape.hpp"

namespace floss {

// (t, x_t). x stays on the slice { x : P x = cond } by construction.
struct FlowState {
  double t = 0.0;
  Stack x;
};

// Endpoint pair plus conditioning. x0 caches its realized noise draw so the
// permutation decided at t = 0 and the loss evaluated at t > 0 share it.
struct FlowPair {
  Stack x0;    // noised mixture
  Stack x1;    // sources
  Stack cond;  // MeanStack (all rows = mixture / K)
};

// Row 0 of the conditioning MeanStack (the scaled mixture s-bar).
std::vector<double> cond_row(const FlowPair& pair);

// x0 = cond + P_perp(shaped noise). project_mean(x0) == cond exactly.
Stack make_x0(const Stack& cond, const NoiseShaper& shaper, Rng& rng);

FlowPair make_flow_pair(const Stack& sources, const NoiseShaper& shaper, Rng& rng);

// x_t = t x1 + (1 - t) x0; t outside [0, 1] is rejected.
FlowState interpolate(const FlowPair& pair, double t);

// x1 - x0 (columns sum to zero).
Stack target(const FlowPair& pair);

// Raw network: receives P_perp x_t and the mixture row, returns a K x L stack.
using RawVelocityFn =
    std::function<Stack(double t, const Stack& x_perp, const std::vector<double>& cond)>;

// Wrapped drift v = P_perp raw(t, P_perp x_t, cond). Output columns sum to
// zero regardless of the raw network. Non-finite output is rejected.
Stack wrap_drift(const RawVelocityFn& raw, double t, const Stack& x_t,
                 const std::vector<double>& cond);

// Wrapped drift signature used by losses, assignment and the sampler.
using DriftFn =
    std::function<Stack(double t, const Stack& x_t, const std::vector<double>& cond)>;

DriftFn wrapped(const RawVelocityFn& raw);

}  // namespace floss
