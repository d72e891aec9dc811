// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Permutation-equivariant training losses (raw, normalized, dB), the
// time-sampling rule, and the per-example training step that fixes the
// source permutation at t = 0.

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "floss/assignment.hpp"
#include "floss/autodiff.hpp"
#include "floss/flowpath.hpp"

namespace floss {

enum class LossKind { kRaw, kNormalized, kDb };

LossKind parse_loss_kind(const std::string& s);
std::string loss_kind_name(LossKind kind);

// Normalized losses at or below this floor are clamped before the dB map.
inline constexpr double kDbClampFloor = 1e-12;

// Distribution of the flow time t used during training. The snr-uniform
// rule is implemented in importance form: the t = 0 atom is drawn with
// probability p0 and otherwise t = (1 + 10^{-r/20})^{-1}, r ~ U[r_min, r_max].
struct TimeWeighting {
  enum class Kind { kHalfDelta, kMostlyUniform, kSnrUniform };
  Kind kind = Kind::kMostlyUniform;
  double p0 = 0.01;
  double r_min = -80.0;
  double r_max = 100.0;
};

TimeWeighting make_half_delta();
TimeWeighting make_mostly_uniform(double p0 = 0.01);
TimeWeighting make_snr_uniform(double r_min = -80.0, double r_max = 100.0);
TimeWeighting parse_time_weighting(const std::string& s, double p0);

// t = (1 + 10^{-r/20})^{-1}, mapping SNR in dB to flow time.
double snr_to_t(double r_db);

double sample_time(const TimeWeighting& weighting, Rng& rng);

// Degenerate-sample and clamp bookkeeping, reported by the trainer.
struct LossCounters {
  int64_t skipped_zero_denominator = 0;
  int64_t db_clamps = 0;
};

// ||x1 - x0||^2 over all K*L entries (the unpermuted normalizer).
double target_norm2(const FlowPair& pair);

// ||v(t, x_t(x0, pi x1), cond) - (pi x1 - x0)||^2.
double loss_raw(const DriftFn& model, const FlowPair& pair,
                const Permutation& perm, double t);

// loss_raw / ||x1 - x0||^2. Throws std::invalid_argument when the
// denominator is zero (x1 == x0); callers skip such samples instead.
double loss_normalized(const DriftFn& model, const FlowPair& pair,
                       const Permutation& perm, double t);

// 10 log10(loss_normalized), clamped at kDbClampFloor. A clamp event
// increments counters->db_clamps when counters is given.
double loss_db(const DriftFn& model, const FlowPair& pair,
               const Permutation& perm, double t,
               LossCounters* counters = nullptr);

double loss_value(LossKind kind, const DriftFn& model, const FlowPair& pair,
                  const Permutation& perm, double t,
                  LossCounters* counters = nullptr);

// One training example: pi from pit_assign at t = 0 (no gradient through
// the argmin), t from sample_time, then the configured loss at (pi, t).
// Returns nullopt (and counts) when a normalized/dB loss hits a zero
// denominator.
std::optional<double> pet_step(const DriftFn& model, const FlowPair& pair,
                               const TimeWeighting& weighting, LossKind kind,
                               Rng& rng, LossCounters* counters = nullptr);

// Differentiable loss head for training: prediction is the network output
// (same element count as the target), permuted_target = pi x1 - x0 and
// denom_norm2 = ||x1 - x0||^2 enter as constants, so gradient flows only
// through the prediction.
ad::Var loss_graph(const ad::Var& prediction, const Stack& permuted_target,
                   double denom_norm2, LossKind kind,
                   LossCounters* counters = nullptr);

}  // namespace floss
