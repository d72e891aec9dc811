// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Permutation-equivariant velocity network: band-split encoder over the K
// source tokens plus one mixture token, alternating band-source joint
// attention (BSJA) and time-source parallel attention (TSPA) blocks with
// convolutional multi-head self-attention (CMHSA), DiT-style conditioning
// on the flow time, and a hybrid mask/mapping decoder in the compressed
// spectrum domain.
//
// Equivariance comes by construction: no source positional encoding exists
// anywhere; sources interact only through attention, and the single learned
// marker embedding is added to the mixture token alone.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "floss/autodiff.hpp"
#include "floss/checkpoint.hpp"
#include "floss/dsp.hpp"
#include "floss/flowpath.hpp"

namespace floss {

struct NetConfig {
  int64_t n_blocks = 2;        // (BSJA, TSPA) pairs; 0 keeps only the codec path
  int64_t embed_dim = 32;      // O, per-band feature size
  int64_t n_heads = 4;
  int64_t n_bands = 16;        // B
  int64_t norm_groups = 4;     // RMSGroupNorm feature groups
  int64_t time_embed_dim = 32; // sinusoidal features (even)
  int64_t time_hidden = 64;    // conditioning MLP width
  int64_t mlp_mult = 2;        // Conv-SwishGLU expansion
  StftConfig stft;
  // CMHSA kernels are fixed: 5 along time for BSJA, (5, 3) over
  // (time, band) for TSPA; the block MLPs use the same kernels.
};

void validate_net_config(const NetConfig& cfg);

// Sinusoidal embedding of t, length cfg.time_embed_dim.
std::vector<double> time_features(double t, int64_t dim);

class VelocityNet {
 public:
  VelocityNet(const NetConfig& cfg, uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  const StftPlan& stft_plan() const { return plan_; }
  const MelSplit& mel_split() const { return mel_; }

  // x_perp: K x L centered state; cond: length-L mixture row. Works for any
  // K >= 1 (the parameters are source-count agnostic). Returns a [K, L] graph
  // node; gradient flows into every parameter when the graph is backpropped.
  ad::Var forward(double t, const Stack& x_perp,
                  const std::vector<double>& cond, bool use_ema = false) const;

  // Value-only evaluation into a Stack.
  Stack forward_stack(double t, const Stack& x_perp,
                      const std::vector<double>& cond, bool use_ema = false) const;

  // Adapters for the flowpath/sampler interfaces.
  RawVelocityFn raw_fn(bool use_ema = false) const;
  DriftFn drift_fn(bool use_ema = false) const;

  std::vector<std::pair<std::string, ad::Var>>& params() { return params_; }
  const std::vector<std::pair<std::string, ad::Var>>& params() const {
    return params_;
  }
  int64_t param_count() const;

  // EMA shadow copies (decay applied by the trainer each step).
  void ema_reset();
  void ema_update(double decay);
  const NamedTensorList& ema() const { return ema_; }

  void save(const std::string& path) const;
  static VelocityNet load(const std::string& path);

 private:
  ad::Var param(const std::string& name) const;
  void add_param(const std::string& name, Tensor t);

  NetConfig cfg_;
  StftPlan plan_;
  MelSplit mel_;
  std::vector<std::pair<std::string, ad::Var>> params_;
  NamedTensorList ema_;
};

}  // namespace floss
