// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/dsp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace floss {

using ad::Var;

StftPlan make_stft_plan(const StftConfig& cfg) {
  if (cfg.frame_len < 2 || cfg.frame_len % 2 != 0)
    throw std::invalid_argument("stft: frame_len must be even");
  if (cfg.hop != cfg.frame_len / 2)
    throw std::invalid_argument("stft: hop must be frame_len/2 (half overlap)");
  StftPlan plan;
  plan.cfg = cfg;
  const int64_t n = cfg.frame_len;
  plan.n_bins = n / 2 + 1;
  const int64_t f = plan.n_bins;

  // Periodic Hamming normalized so 50%-overlapped copies sum to 1.
  plan.window = Tensor({n});
  for (int64_t i = 0; i < n; ++i)
    plan.window.v[static_cast<size_t>(i)] =
        (0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                static_cast<double>(n))) /
        1.08;

  plan.dft_re = Tensor({n, f});
  plan.dft_im = Tensor({n, f});
  plan.idft_re = Tensor({f, n});
  plan.idft_im = Tensor({f, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t b = 0; b < f; ++b) {
      const double th = 2.0 * M_PI * static_cast<double>(i * b) / static_cast<double>(n);
      plan.dft_re.v[static_cast<size_t>(i * f + b)] = std::cos(th);
      plan.dft_im.v[static_cast<size_t>(i * f + b)] = -std::sin(th);
      const double c = (b == 0 || b == n / 2) ? 1.0 : 2.0;
      plan.idft_re.v[static_cast<size_t>(b * n + i)] =
          c * std::cos(th) / static_cast<double>(n);
      plan.idft_im.v[static_cast<size_t>(b * n + i)] =
          -c * std::sin(th) / static_cast<double>(n);
    }
  return plan;
}

namespace {
int64_t padded_len(const StftPlan& plan, int64_t length) {
  const int64_t hop = plan.cfg.hop;
  return ((length + hop - 1) / hop + 2) * hop;
}
}  // namespace

int64_t stft_frames(const StftPlan& plan, int64_t length) {
  return (padded_len(plan, length) - plan.cfg.frame_len) / plan.cfg.hop + 1;
}

Var stft_v(const Var& x, const StftPlan& plan) {
  const int64_t length = x->val.shape.back();
  if (length < plan.cfg.frame_len)
    throw std::invalid_argument("stft: signal shorter than one frame");
  const int64_t hop = plan.cfg.hop;
  const int64_t lp = padded_len(plan, length);
  Var padded = ad::pad_last(x, hop, lp - length - hop);
  Var frames = ad::frame_signal(padded, plan.cfg.frame_len, hop);
  Var windowed = ad::mul(frames, ad::constant(plan.window));
  Var re = ad::matmul(windowed, ad::constant(plan.dft_re));
  Var im = ad::matmul(windowed, ad::constant(plan.dft_im));
  auto sh = re->val.shape;
  sh.push_back(1);
  return ad::concat(static_cast<int>(sh.size()) - 1,
                    {ad::reshape(re, sh), ad::reshape(im, sh)});
}

Var istft_v(const Var& spec, const StftPlan& plan, int64_t length) {
  const auto& sh = spec->val.shape;
  if (sh.size() < 3 || sh.back() != 2 || sh[sh.size() - 2] != plan.n_bins)
    throw std::invalid_argument("istft: expected [..., T, F, 2], got " +
                                shape_str(sh));
  const int last = static_cast<int>(sh.size()) - 1;
  auto flat = std::vector<int64_t>(sh.begin(), sh.end() - 1);
  Var re = ad::reshape(ad::slice(spec, last, 0, 1), flat);
  Var im = ad::reshape(ad::slice(spec, last, 1, 1), flat);
  Var frames = ad::add(ad::matmul(re, ad::constant(plan.idft_re)),
                       ad::matmul(im, ad::constant(plan.idft_im)));
  Var y = ad::overlap_add(frames, plan.cfg.hop);
  return ad::slice(y, static_cast<int>(y->val.shape.size()) - 1, plan.cfg.hop,
                   length);
}

Var compress_v(const Var& spec) { return ad::mag_compress(spec, kCompressExp); }
Var decompress_v(const Var& spec) { return ad::mag_compress(spec, 1.0 / kCompressExp); }

namespace {
double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Gram-Schmidt completion of the two triangular seed directions to an
// orthonormal projection [2w, m].
Tensor band_projection(int64_t w, int64_t m) {
  const int64_t d = 2 * w;
  std::vector<std::vector<double>> basis;
  auto orthogonalize = [&](std::vector<double> v) -> bool {
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i) dot += v[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
      for (int64_t i = 0; i < d; ++i) v[static_cast<size_t>(i)] -= dot * b[static_cast<size_t>(i)];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-8) return false;
    for (auto& x : v) x /= nrm;
    basis.push_back(std::move(v));
    return true;
  };

  std::vector<double> tri(static_cast<size_t>(w));
  const double center = static_cast<double>(w - 1) / 2.0;
  for (int64_t i = 0; i < w; ++i)
    tri[static_cast<size_t>(i)] =
        1.0 - std::abs(static_cast<double>(i) - center) /
                  (static_cast<double>(w + 1) / 2.0);
  std::vector<double> seed_re(static_cast<size_t>(d), 0.0), seed_im(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < w; ++i) {
    seed_re[static_cast<size_t>(2 * i)] = tri[static_cast<size_t>(i)];
    seed_im[static_cast<size_t>(2 * i + 1)] = tri[static_cast<size_t>(i)];
  }
  orthogonalize(seed_re);
  orthogonalize(seed_im);
  for (int64_t j = 0; j < d && static_cast<int64_t>(basis.size()) < m; ++j) {
    std::vector<double> e(static_cast<size_t>(d), 0.0);
    e[static_cast<size_t>(j)] = 1.0;
    orthogonalize(std::move(e));
  }
  Tensor p({d, m});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < m; ++j)
      p.v[static_cast<size_t>(i * m + j)] = basis[static_cast<size_t>(j)][static_cast<size_t>(i)];
  return p;
}
}  // namespace

MelSplit make_mel_split(int64_t n_bands, int64_t n_bins, int sample_rate,
                        int64_t feat_dim, bool require_exact) {
  if (n_bands < 1 || n_bands > n_bins)
    throw std::invalid_argument("mel split: need 1 <= n_bands <= n_bins");
  MelSplit mel;
  mel.n_bands = n_bands;
  mel.n_bins = n_bins;

  const double nyquist = static_cast<double>(sample_rate) / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<int64_t> edges(static_cast<size_t>(n_bands + 1));
  edges[0] = 0;
  for (int64_t b = 1; b < n_bands; ++b) {
    const double hz = mel_to_hz(mel_max * static_cast<double>(b) /
                                static_cast<double>(n_bands));
    int64_t e = static_cast<int64_t>(std::llround(hz / nyquist *
                                                  static_cast<double>(n_bins)));
    e = std::max(e, edges[static_cast<size_t>(b - 1)] + 1);
    // leave room for one bin per remaining band
    e = std::min(e, n_bins - (n_bands - b));
    edges[static_cast<size_t>(b)] = e;
  }
  edges[static_cast<size_t>(n_bands)] = n_bins;

  int64_t max_width = 0;
  for (int64_t b = 0; b < n_bands; ++b) {
    mel.band_start.push_back(edges[static_cast<size_t>(b)]);
    mel.band_width.push_back(edges[static_cast<size_t>(b + 1)] - edges[static_cast<size_t>(b)]);
    max_width = std::max(max_width, mel.band_width.back());
  }

  if (feat_dim == 0) feat_dim = 2 * max_width;
  if (require_exact && feat_dim < 2 * max_width)
    throw std::invalid_argument(
        "mel split: exact invertibility needs feat_dim >= " +
        std::to_string(2 * max_width) + ", got " + std::to_string(feat_dim));
  mel.feat_dim = feat_dim;
  mel.exact = feat_dim >= 2 * max_width;
  for (int64_t b = 0; b < n_bands; ++b) {
    const int64_t w = mel.band_width[static_cast<size_t>(b)];
    mel.proj.push_back(band_projection(w, std::min(2 * w, feat_dim)));
  }
  return mel;
}

Var band_split_v(const Var& spec, const MelSplit& mel) {
  const auto& sh = spec->val.shape;
  if (sh.size() < 3 || sh.back() != 2 || sh[sh.size() - 2] != mel.n_bins)
    throw std::invalid_argument("band_split: expected [..., T, F=" +
                                std::to_string(mel.n_bins) + ", 2], got " +
                                shape_str(sh));
  const int f_axis = static_cast<int>(sh.size()) - 2;
  std::vector<Var> bands;
  for (int64_t b = 0; b < mel.n_bands; ++b) {
    const int64_t w = mel.band_width[static_cast<size_t>(b)];
    Var x = ad::slice(spec, f_axis, mel.band_start[static_cast<size_t>(b)], w);
    auto flat = std::vector<int64_t>(sh.begin(), sh.end() - 2);
    flat.push_back(2 * w);
    Var feats = ad::matmul(ad::reshape(x, flat),
                           ad::constant(mel.proj[static_cast<size_t>(b)]));
    const int64_t m = mel.proj[static_cast<size_t>(b)].shape[1];
    if (m < mel.feat_dim) feats = ad::pad_last(feats, 0, mel.feat_dim - m);
    auto with_band = std::vector<int64_t>(sh.begin(), sh.end() - 2);
    with_band.push_back(1);
    with_band.push_back(mel.feat_dim);
    bands.push_back(ad::reshape(feats, with_band));
  }
  return ad::concat(f_axis, bands);
}

Var band_unsplit_v(const Var& feats, const MelSplit& mel) {
  const auto& sh = feats->val.shape;
  if (sh.size() < 3 || sh.back() != mel.feat_dim ||
      sh[sh.size() - 2] != mel.n_bands)
    throw std::invalid_argument("band_unsplit: expected [..., T, B=" +
                                std::to_string(mel.n_bands) + ", O=" +
                                std::to_string(mel.feat_dim) + "], got " +
                                shape_str(sh));
  const int b_axis = static_cast<int>(sh.size()) - 2;
  std::vector<Var> bins;
  for (int64_t b = 0; b < mel.n_bands; ++b) {
    const int64_t w = mel.band_width[static_cast<size_t>(b)];
    const Tensor& p = mel.proj[static_cast<size_t>(b)];
    const int64_t m = p.shape[1];
    Var fb = ad::slice(feats, b_axis, b, 1);
    auto flat = std::vector<int64_t>(sh.begin(), sh.end() - 2);
    flat.push_back(mel.feat_dim);
    fb = ad::reshape(fb, flat);
    if (m < mel.feat_dim)
      fb = ad::slice(fb, static_cast<int>(flat.size()) - 1, 0, m);
    // transpose of the orthonormal projection
    Tensor pt({m, 2 * w});
    for (int64_t i = 0; i < 2 * w; ++i)
      for (int64_t j = 0; j < m; ++j)
        pt.v[static_cast<size_t>(j * 2 * w + i)] = p.v[static_cast<size_t>(i * m + j)];
    Var x = ad::matmul(fb, ad::constant(pt));
    auto out_shape = std::vector<int64_t>(sh.begin(), sh.end() - 2);
    out_shape.push_back(w);
    out_shape.push_back(2);
    bins.push_back(ad::reshape(x, out_shape));
  }
  return ad::concat(b_axis, bins);
}

Var global_norm_v(const Var& feats, NormStats* stats) {
  const auto& sh = feats->val.shape;
  if (sh.size() < 2) throw std::invalid_argument("global_norm: need >= 2 axes");
  const int64_t s = sh[0];
  const int64_t r = feats->val.numel() / s;
  Var flat = ad::reshape(feats, {s, r});
  Var m = ad::mean_axis(flat, 1);
  Var d = ad::sub(flat, m);
  Var var = ad::mean_axis(ad::mul(d, d), 1);
  // degenerate sources (std < 1e-8) divide by 1 instead
  Tensor mask({s, 1}), ones_minus({s, 1});
  if (stats) {
    stats->mean.resize(static_cast<size_t>(s));
    stats->std.resize(static_cast<size_t>(s));
  }
  for (int64_t i = 0; i < s; ++i) {
    const double sd = std::sqrt(var->val.v[static_cast<size_t>(i)]);
    const bool active = sd >= 1e-8;
    mask.v[static_cast<size_t>(i)] = active ? 1.0 : 0.0;
    ones_minus.v[static_cast<size_t>(i)] = active ? 0.0 : 1.0;
    if (stats) {
      stats->mean[static_cast<size_t>(i)] = m->val.v[static_cast<size_t>(i)];
      stats->std[static_cast<size_t>(i)] = active ? sd : 1.0;
    }
  }
  Var var_safe = ad::add(ad::mul(var, ad::constant(mask)), ad::constant(ones_minus));
  Var inv = ad::powc(var_safe, -0.5);
  return ad::reshape(ad::mul(d, inv), sh);
}

// ----- plain wrappers -----

Tensor stft(const std::vector<double>& x, const StftPlan& plan) {
  Var in = ad::constant(Tensor::from({static_cast<int64_t>(x.size())}, x));
  return stft_v(in, plan)->val;
}

std::vector<double> istft(const Tensor& spec, const StftPlan& plan, int64_t length) {
  return istft_v(ad::constant(spec), plan, length)->val.v;
}

Tensor compress(const Tensor& spec) { return compress_v(ad::constant(spec))->val; }
Tensor decompress(const Tensor& spec) { return decompress_v(ad::constant(spec))->val; }

Tensor band_split(const Tensor& spec, const MelSplit& mel) {
  return band_split_v(ad::constant(spec), mel)->val;
}

Tensor band_unsplit(const Tensor& feats, const MelSplit& mel) {
  return band_unsplit_v(ad::constant(feats), mel)->val;
}

Tensor encode(const std::vector<double>& x, const StftPlan& plan, const MelSplit& mel) {
  Var in = ad::constant(Tensor::from({static_cast<int64_t>(x.size())}, x));
  return band_split_v(compress_v(stft_v(in, plan)), mel)->val;
}

std::vector<double> decode(const Tensor& feats, const StftPlan& plan,
                           const MelSplit& mel, int64_t length) {
  Var f = ad::constant(feats);
  return istft_v(decompress_v(band_unsplit_v(f, mel)), plan, length)->val.v;
}

}  // namespace floss
