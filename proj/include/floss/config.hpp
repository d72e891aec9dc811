// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Plain-text run configuration: INI-style sections (data, model, loss,
// noise, train, sample) materialized into one typed RunConfig.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "floss/losses.hpp"
#include "floss/net.hpp"

namespace floss {

// Ordered "section.key" -> value pairs; later entries override earlier ones.
using KvList = std::vector<std::pair<std::string, std::string>>;

KvList parse_config_text(const std::string& text);
KvList read_config_file(const std::string& path);

// Appends an override of the form "section.key=value".
void add_override(KvList& kv, const std::string& assignment);

struct RunConfig {
  // [data]
  int sample_rate = 16000;
  double crop_seconds = 0.5;
  int64_t n_sources = 2;
  double level_min_db = -29.0;
  double level_max_db = -19.0;
  double snr_min_db = -10.0;
  double snr_max_db = 10.0;
  std::string source_kind = "sine_chirp";
  int64_t eval_examples = 16;

  // [model]
  NetConfig net;

  // [loss]
  LossKind loss = LossKind::kDb;
  std::string time_weighting = "mostly_uniform";
  double p0 = 0.01;
  std::string assignment = "pit";  // pit | euclidean

  // [noise]
  std::string noise = "envelope";  // constant | active_power | envelope
  double sigma0 = 1.0;
  double env_window_ms = 64.0;
  double env_threshold_db = 40.0;

  // [train]
  int64_t steps = 5000;
  int64_t batch_size = 4;
  double lr_peak = 1e-4;
  double warmup_frac = 0.1;
  double weight_decay = 0.01;
  double ema_decay = 0.999;
  double clip_norm = 1.0;
  uint64_t seed = 1;

  // [sample]
  std::string schedule = "linear:25";
  bool use_ema = true;
  uint64_t sample_seed = 1;

  int64_t crop_samples() const {
    return static_cast<int64_t>(crop_seconds * sample_rate + 0.5);
  }
  TimeWeighting weighting() const { return parse_time_weighting(time_weighting, p0); }
};

// Unknown keys and malformed values raise std::invalid_argument.
RunConfig make_run_config(const KvList& kv);
RunConfig load_run_config(const std::string& path);

}  // namespace floss
