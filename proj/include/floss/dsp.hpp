// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Audio front-end: STFT/iSTFT with a normalized Hamming window (unit
// overlap-add at 50%), complex magnitude compression, Mel band-split with
// orthonormal per-band projections, and global normalization.
//
// Everything is built from autodiff primitives so the same code path serves
// both the plain codec API and the differentiable network encoder/decoder.

#pragma once

#include <cstdint>
#include <vector>

#include "floss/autodiff.hpp"
#include "floss/tensor.hpp"

namespace floss {

struct StftConfig {
  int sample_rate = 16000;
  int64_t frame_len = 320;  // 20 ms at 16 kHz
  int64_t hop = 160;        // half overlap
};

// Precomputed window and DFT matrices for one frame length.
struct StftPlan {
  StftConfig cfg;
  int64_t n_bins = 0;  // frame_len / 2 + 1
  Tensor window;       // [frame]
  Tensor dft_re;       // [frame, F]
  Tensor dft_im;       // [frame, F]
  Tensor idft_re;      // [F, frame]
  Tensor idft_im;      // [F, frame]
};

StftPlan make_stft_plan(const StftConfig& cfg);

// Number of frames produced for a length-L signal (with edge padding).
int64_t stft_frames(const StftPlan& plan, int64_t length);

// x: [..., L] -> [..., T, F, 2]
ad::Var stft_v(const ad::Var& x, const StftPlan& plan);
// spec: [..., T, F, 2] -> [..., L]
ad::Var istft_v(const ad::Var& spec, const StftPlan& plan, int64_t length);

// |z|^p e^{i arg z}; exponent 0.33 for the encoder, 1/0.33 for the decoder.
constexpr double kCompressExp = 0.33;
ad::Var compress_v(const ad::Var& spec);
ad::Var decompress_v(const ad::Var& spec);

// Mel-scale band split. Bands tile all STFT bins contiguously; each band b
// of width w_b carries an orthonormal projection from its 2*w_b interleaved
// (re, im) values to min(2*w_b, feat_dim) features, zero padded to feat_dim.
// The first two projection directions follow the band's triangular Mel
// weights; the rest complete the basis. With feat_dim >= 2*w_b for every
// band the projection is exactly invertible.
struct MelSplit {
  int64_t n_bands = 0;
  int64_t n_bins = 0;
  int64_t feat_dim = 0;
  bool exact = false;
  std::vector<int64_t> band_start;
  std::vector<int64_t> band_width;
  std::vector<Tensor> proj;  // per band [2*w_b, min(2*w_b, feat_dim)]
};

// feat_dim == 0 picks the smallest feature size that is exactly invertible.
// require_exact rejects feat_dim < 2 * widest band.
MelSplit make_mel_split(int64_t n_bands, int64_t n_bins, int sample_rate,
                        int64_t feat_dim = 0, bool require_exact = true);

// spec: [..., T, F, 2] -> [..., T, B, O]
ad::Var band_split_v(const ad::Var& spec, const MelSplit& mel);
// feats: [..., T, B, O] -> [..., T, F, 2]
ad::Var band_unsplit_v(const ad::Var& feats, const MelSplit& mel);

// Per-source standardization over all trailing axes; axis 0 is the source
// axis. A standard deviation below 1e-8 is replaced by a unit divisor.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};
ad::Var global_norm_v(const ad::Var& feats, NormStats* stats = nullptr);

// ----- plain (non-tape) codec API -----
Tensor stft(const std::vector<double>& x, const StftPlan& plan);
std::vector<double> istft(const Tensor& spec, const StftPlan& plan, int64_t length);
Tensor compress(const Tensor& spec);
Tensor decompress(const Tensor& spec);
Tensor band_split(const Tensor& spec, const MelSplit& mel);
Tensor band_unsplit(const Tensor& feats, const MelSplit& mel);

// encode = band_split(compress(stft(x))); decode is the inverse chain.
Tensor encode(const std::vector<double>& x, const StftPlan& plan, const MelSplit& mel);
std::vector<double> decode(const Tensor& feats, const StftPlan& plan,
                           const MelSplit& mel, int64_t length);

}  // namespace floss
