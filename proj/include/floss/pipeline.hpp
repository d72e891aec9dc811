// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic data generation, the mixing protocol, the AdamW training loop
// with EMA and gradient clipping, and evaluation orchestration.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "floss/config.hpp"
#include "floss/losses.hpp"
#include "floss/metrics.hpp"
#include "floss/net.hpp"
#include "floss/sampler.hpp"

namespace floss {

enum class SourceKind { kSineChirp, kFilteredNoise, kAmTones };
SourceKind parse_source_kind(const std::string& s);

// Declared spectral band of source `index`; bands overlap partially so
// separation is learnable but nontrivial.
struct Band {
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};
Band source_band(int index, int64_t n_sources, int sample_rate);

std::vector<double> synth_source(SourceKind kind, int index, int64_t n_sources,
                                 int64_t length, int sample_rate, Rng& rng);

// Building block of the am-tones kind, exposed for direct testing.
std::vector<double> synth_am_tone(double carrier_hz, double rate_hz, double depth,
                                  double amplitude, int64_t length,
                                  int sample_rate, double phase);

// Envelope window length in samples implied by the config (odd, >= 3).
int64_t env_window_samples(const RunConfig& cfg);

NoiseShaper make_shaper_from_config(const RunConfig& cfg,
                                    const std::vector<double>& mixture);

// Active power of a signal in dB re 1.0 under the config's envelope window.
double active_power_db(const std::vector<double>& x, const RunConfig& cfg);

// Synthesizes K sources, normalizes active powers into level_range with
// pairwise SNR drawn from snr_range (the loudest source sits exactly at the
// level draw), stacks them as x1 and draws x0 through the configured noise
// shaper. All-silent draws are retried a bounded number of times.
FlowPair make_example(const RunConfig& cfg, Rng& rng);

// Learning-rate schedule: linear warmup to lr_peak over warmup_frac of the
// steps, then cosine decay to zero. Exposed for tests.
double lr_at(const RunConfig& cfg, int64_t step);

struct TrainResult {
  std::vector<double> losses;  // one mean loss per step
  std::vector<double> lrs;
  LossCounters counters;
};

// Runs cfg.steps AdamW steps (decoupled weight decay, global-norm gradient
// clip, EMA update every step). When loss_csv_path is nonempty a
// "step,loss,lr" CSV is written. Aborts with the offending step and example
// seeds if the loss goes non-finite.
TrainResult train(VelocityNet& net, const RunConfig& cfg,
                  const std::string& loss_csv_path = "");

struct EvalRow {
  int id = 0;
  Permutation perm;
  std::vector<double> per_source;
  double mean = 0.0;
  double baseline = 0.0;  // mixture-as-every-estimate score
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean = 0.0;
  double median = 0.0;
  double baseline_mean = 0.0;
};

// Separates cfg.eval_examples seeded mixtures with the configured schedule
// and scores them with best-permutation SI-SDR. When csv_path is nonempty a
// metrics CSV (id, perm, per-source SI-SDR, mean, baseline) is written.
EvalReport evaluate(const VelocityNet& net, const RunConfig& cfg,
                    const std::string& csv_path = "");

}  // namespace floss
