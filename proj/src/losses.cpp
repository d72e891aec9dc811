// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace floss {

LossKind parse_loss_kind(const std::string& s) {
  if (s == "raw") return LossKind::kRaw;
  if (s == "normalized") return LossKind::kNormalized;
  if (s == "db") return LossKind::kDb;
  throw std::invalid_argument("unknown loss kind '" + s +
                              "' (expected raw|normalized|db)");
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kRaw: return "raw";
    case LossKind::kNormalized: return "normalized";
    case LossKind::kDb: return "db";
  }
  return "?";
}

namespace {
void check_weighting(const TimeWeighting& w) {
  if (w.p0 <= 0.0 || w.p0 >= 1.0)
    throw std::invalid_argument("TimeWeighting: p0 must lie in (0, 1)");
  if (w.r_min >= w.r_max)
    throw std::invalid_argument("TimeWeighting: r_min must be below r_max");
}
}  // namespace

TimeWeighting make_half_delta() {
  TimeWeighting w;
  w.kind = TimeWeighting::Kind::kHalfDelta;
  w.p0 = 0.5;
  return w;
}

TimeWeighting make_mostly_uniform(double p0) {
  TimeWeighting w;
  w.kind = TimeWeighting::Kind::kMostlyUniform;
  w.p0 = p0;
  check_weighting(w);
  return w;
}

TimeWeighting make_snr_uniform(double r_min, double r_max) {
  TimeWeighting w;
  w.kind = TimeWeighting::Kind::kSnrUniform;
  w.p0 = 0.01;
  w.r_min = r_min;
  w.r_max = r_max;
  check_weighting(w);
  return w;
}

TimeWeighting parse_time_weighting(const std::string& s, double p0) {
  if (s == "half_delta") return make_half_delta();
  if (s == "mostly_uniform") return make_mostly_uniform(p0);
  if (s == "snr_uniform") return make_snr_uniform();
  throw std::invalid_argument(
      "unknown time weighting '" + s +
      "' (expected half_delta|mostly_uniform|snr_uniform)");
}

double snr_to_t(double r_db) { return 1.0 / (1.0 + std::pow(10.0, -r_db / 20.0)); }

double sample_time(const TimeWeighting& weighting, Rng& rng) {
  switch (weighting.kind) {
    case TimeWeighting::Kind::kHalfDelta:
      return rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    case TimeWeighting::Kind::kMostlyUniform:
      return rng.uniform() < weighting.p0 ? 0.0 : rng.uniform();
    case TimeWeighting::Kind::kSnrUniform: {
      if (rng.uniform() < weighting.p0) return 0.0;
      const double r =
          weighting.r_min + (weighting.r_max - weighting.r_min) * rng.uniform();
      return snr_to_t(r);
    }
  }
  return 0.0;
}

double target_norm2(const FlowPair& pair) {
  double acc = 0.0;
  for (size_t i = 0; i < pair.x1.data.size(); ++i) {
    const double d = pair.x1.data[i] - pair.x0.data[i];
    acc += d * d;
  }
  return acc;
}

double loss_raw(const DriftFn& model, const FlowPair& pair,
                const Permutation& perm, double t) {
  if (!is_valid_permutation(perm) ||
      perm.size() != static_cast<size_t>(pair.x1.k))
    throw std::invalid_argument("loss_raw: invalid permutation");
  FlowPair permuted;
  permuted.x0 = pair.x0;
  permuted.x1 = permute_rows(pair.x1, perm);
  permuted.cond = pair.cond;
  const Stack x_t = interpolate(permuted, t).x;
  const Stack v = model(t, x_t, cond_row(pair));
  double acc = 0.0;
  for (size_t i = 0; i < v.data.size(); ++i) {
    const double d = v.data[i] - (permuted.x1.data[i] - permuted.x0.data[i]);
    acc += d * d;
  }
  return acc;
}

double loss_normalized(const DriftFn& model, const FlowPair& pair,
                       const Permutation& perm, double t) {
  const double denom = target_norm2(pair);
  if (denom <= 0.0)
    throw std::invalid_argument("loss_normalized: zero target norm (x1 == x0)");
  return loss_raw(model, pair, perm, t) / denom;
}

double loss_db(const DriftFn& model, const FlowPair& pair,
               const Permutation& perm, double t, LossCounters* counters) {
  double n = loss_normalized(model, pair, perm, t);
  if (n <= kDbClampFloor) {
    n = kDbClampFloor;
    if (counters) ++counters->db_clamps;
  }
  return 10.0 * std::log10(n);
}

double loss_value(LossKind kind, const DriftFn& model, const FlowPair& pair,
                  const Permutation& perm, double t, LossCounters* counters) {
  switch (kind) {
    case LossKind::kRaw: return loss_raw(model, pair, perm, t);
    case LossKind::kNormalized: return loss_normalized(model, pair, perm, t);
    case LossKind::kDb: return loss_db(model, pair, perm, t, counters);
  }
  return 0.0;
}

std::optional<double> pet_step(const DriftFn& model, const FlowPair& pair,
                               const TimeWeighting& weighting, LossKind kind,
                               Rng& rng, LossCounters* counters) {
  if (kind != LossKind::kRaw && target_norm2(pair) <= 0.0) {
    if (counters) ++counters->skipped_zero_denominator;
    return std::nullopt;
  }
  const Permutation perm = pit_assign(model, pair);
  const double t = sample_time(weighting, rng);
  return loss_value(kind, model, pair, perm, t, counters);
}

ad::Var loss_graph(const ad::Var& prediction, const Stack& permuted_target,
                   double denom_norm2, LossKind kind, LossCounters* counters) {
  if (prediction->val.numel() !=
      static_cast<int64_t>(permuted_target.data.size()))
    throw std::invalid_argument("loss_graph: prediction/target size mismatch");
  const int64_t n = static_cast<int64_t>(permuted_target.data.size());
  Tensor tgt({n});
  tgt.v = permuted_target.data;
  ad::Var diff =
      ad::sub(ad::reshape(prediction, {n}), ad::constant(std::move(tgt)));
  ad::Var raw = ad::sum_all(ad::mul(diff, diff));
  if (kind == LossKind::kRaw) return raw;
  if (denom_norm2 <= 0.0)
    throw std::invalid_argument("loss_graph: zero target norm (x1 == x0)");
  ad::Var normalized = ad::scale(raw, 1.0 / denom_norm2);
  if (kind == LossKind::kNormalized) return normalized;
  if (counters && normalized->val.v[0] <= kDbClampFloor) ++counters->db_clamps;
  return ad::scale(ad::log_clamped(normalized, kDbClampFloor),
                   10.0 / std::log(10.0));
}

}  // namespace floss
