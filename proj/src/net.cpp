// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/net.hpp"

#include <cmath>
#include <stdexcept>

namespace floss {

using ad::Var;

void validate_net_config(const NetConfig& cfg) {
  if (cfg.n_blocks < 0) throw std::invalid_argument("net: n_blocks must be >= 0");
  if (cfg.embed_dim < 2) throw std::invalid_argument("net: embed_dim must be >= 2");
  if (cfg.n_heads < 1 || cfg.embed_dim % cfg.n_heads != 0)
    throw std::invalid_argument("net: embed_dim must be divisible by n_heads");
  if (cfg.norm_groups < 1 || cfg.embed_dim % cfg.norm_groups != 0)
    throw std::invalid_argument("net: embed_dim must be divisible by norm_groups");
  if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0)
    throw std::invalid_argument("net: time_embed_dim must be even and >= 2");
  if (cfg.time_hidden < 1) throw std::invalid_argument("net: time_hidden must be >= 1");
  if (cfg.mlp_mult < 1) throw std::invalid_argument("net: mlp_mult must be >= 1");
  if (cfg.n_bands < 1) throw std::invalid_argument("net: n_bands must be >= 1");
}

std::vector<double> time_features(double t, int64_t dim) {
  std::vector<double> f(static_cast<size_t>(dim));
  const int64_t half = dim / 2;
  for (int64_t j = 0; j < half; ++j) {
    const double expo = half > 1 ? static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
    const double w = std::pow(1000.0, expo);
    f[static_cast<size_t>(2 * j)] = std::sin(w * t);
    f[static_cast<size_t>(2 * j + 1)] = std::cos(w * t);
  }
  return f;
}

namespace {
Tensor randn_scaled(std::vector<int64_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.v) v = stddev * rng.normal();
  return t;
}

// RMS normalization within feature groups, learnable gain, no bias.
Var rms_group_norm(const Var& h, const Var& gain, int64_t groups) {
  std::vector<int64_t> shape = h->shape();
  const int64_t o = shape.back();
  std::vector<int64_t> grouped = shape;
  grouped.back() = groups;
  grouped.push_back(o / groups);
  Var hg = ad::reshape(h, grouped);
  Var ms = ad::mean_axis(ad::mul(hg, hg), static_cast<int>(grouped.size()) - 1);
  Var inv = ad::powc(ad::add_scalar(ms, 1e-8), -0.5);
  Var normed = ad::reshape(ad::mul(hg, inv), shape);
  return ad::mul(normed, gain);
}

// Attention over axis `axis_len` given q/k/v shaped [batch..., n, dh].
Var attend(const Var& q, const Var& k, const Var& v, double inv_sqrt_dh) {
  std::vector<int> to_t(q->shape().size());
  for (size_t i = 0; i < to_t.size(); ++i) to_t[i] = static_cast<int>(i);
  std::swap(to_t[to_t.size() - 1], to_t[to_t.size() - 2]);
  Var scores = ad::bmm(ad::scale(q, inv_sqrt_dh), ad::transpose(k, to_t));
  return ad::bmm(ad::softmax_last(scores), v);
}
}  // namespace

void VelocityNet::add_param(const std::string& name, Tensor t) {
  params_.emplace_back(name, ad::leaf(std::move(t), true, name));
}

Var VelocityNet::param(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  throw std::runtime_error("net: unknown parameter '" + name + "'");
}

VelocityNet::VelocityNet(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  validate_net_config(cfg);
  plan_ = make_stft_plan(cfg.stft);
  mel_ = make_mel_split(cfg.n_bands, plan_.n_bins, cfg.stft.sample_rate,
                        cfg.embed_dim, /*require_exact=*/false);
  Rng rng(seed);
  const int64_t o = cfg.embed_dim;
  const int64_t m = cfg.mlp_mult * o;
  const int64_t e = cfg.time_embed_dim;
  const int64_t h = cfg.time_hidden;

  add_param("marker", randn_scaled({o}, 0.1, rng));
  add_param("time.w1", randn_scaled({e, h}, 1.0 / std::sqrt(static_cast<double>(e)), rng));
  add_param("time.b1", Tensor::zeros({h}));

  for (int64_t i = 0; i < 2 * cfg.n_blocks; ++i) {
    const bool bsja = (i % 2 == 0);
    const std::string p = "block" + std::to_string(i) + ".";
    add_param(p + "norm1.gain", Tensor::full({o}, 1.0));
    add_param(p + "norm1.mod", Tensor::zeros({h, 2 * o}));
    add_param(p + "norm2.gain", Tensor::full({o}, 1.0));
    add_param(p + "norm2.mod", Tensor::zeros({h, 2 * o}));
    const int64_t ker = bsja ? 5 : 15;  // 5 (time) vs (5, 3) over (time, band)
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(o * ker));
    const double mlp_std = 1.0 / std::sqrt(static_cast<double>(o * ker));
    auto conv_shape = [&](int64_t cout, int64_t cin) {
      return bsja ? std::vector<int64_t>{cout, cin, 5}
                  : std::vector<int64_t>{cout, cin, 5, 3};
    };
    add_param(p + "attn.wq", randn_scaled(conv_shape(o, o), proj_std, rng));
    add_param(p + "attn.wk", randn_scaled(conv_shape(o, o), proj_std, rng));
    add_param(p + "attn.wv", randn_scaled(conv_shape(o, o), proj_std, rng));
    add_param(p + "attn.wo", Tensor::zeros(conv_shape(o, o)));
    add_param(p + "mlp.w_gate", randn_scaled(conv_shape(m, o), mlp_std, rng));
    add_param(p + "mlp.w_lin", randn_scaled(conv_shape(m, o), mlp_std, rng));
    add_param(p + "mlp.w_out", Tensor::zeros(conv_shape(o, m)));
  }

  // The decoder head is NOT zero-initialized: the decompression that follows
  // it has zero derivative at zero, so an all-zero head would be a stationary
  // point with no gradient signal.
  add_param("head.w",
            randn_scaled({o, 3 * o}, 1.0 / std::sqrt(static_cast<double>(o)), rng));
  add_param("head.b", Tensor::zeros({3 * o}));
  ema_reset();
}

int64_t VelocityNet::param_count() const {
  int64_t n = 0;
  for (const auto& [name, v] : params_) n += v->val.numel();
  return n;
}

ad::Var VelocityNet::forward(double t, const Stack& x_perp,
                             const std::vector<double>& cond, bool use_ema) const {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("net: t = " + std::to_string(t) + " outside [0, 1]");
  if (static_cast<int64_t>(cond.size()) != x_perp.l)
    throw std::invalid_argument("net: conditioning length mismatch");
  const int64_t k = x_perp.k;
  const int64_t s = k + 1;  // sources plus the mixture token (last)
  const int64_t len = x_perp.l;
  const int64_t o = cfg_.embed_dim;
  const int64_t nh = cfg_.n_heads;
  const int64_t dh = o / nh;
  const int64_t b = cfg_.n_bands;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  auto p = [&](const std::string& name) -> Var {
    if (!use_ema) return param(name);
    return ad::constant(find_tensor(ema_, name));
  };

  // ----- encoder: [S, L] signals -> compressed spectra and band features
  Tensor sig({s, len});
  for (int64_t r = 0; r < k; ++r)
    for (int64_t i = 0; i < len; ++i) sig.v[r * len + i] = x_perp.at(r, i);
  for (int64_t i = 0; i < len; ++i)
    sig.v[k * len + i] = cond[static_cast<size_t>(i)];
  Var enc_spec = compress_v(stft_v(ad::constant(std::move(sig)), plan_));  // [S,T,F,2]
  const int64_t frames = enc_spec->shape()[1];
  Var feats = global_norm_v(band_split_v(enc_spec, mel_));  // [S,T,B,O]
  Var hvar = ad::transpose(feats, {1, 2, 0, 3});            // [T,B,S,O]

  // ----- time conditioning: sinusoidal features -> MLP -> per-site mod
  Tensor tf({1, cfg_.time_embed_dim});
  tf.v = time_features(t, cfg_.time_embed_dim);
  Var temb = ad::swish(ad::add(ad::matmul(ad::constant(std::move(tf)), p("time.w1")),
                               p("time.b1")));  // [1, H]
  auto modulate = [&](const Var& x, const std::string& site) {
    Var mod = ad::matmul(temb, p(site));             // [1, 2O]
    Var sc = ad::reshape(ad::slice(mod, 1, 0, o), {1, o});
    Var sh = ad::reshape(ad::slice(mod, 1, o, o), {1, o});
    return ad::add(ad::mul(x, ad::add_scalar(sc, 1.0)), sh);
  };

  // ----- marker embedding, added to the mixture token at every block input
  Var marker_rows =
      ad::concat(0, {ad::constant(Tensor::zeros({k, o})),
                     ad::reshape(p("marker"), {1, o})});  // [S, O]

  auto conv = [&](const Var& x, const Var& w, bool bsja) {
    if (!bsja) return ad::conv2d_front(x, w);  // [T,B,S,*]
    const auto& sh = x->shape();
    Var flat = ad::reshape(x, {sh[0], sh[1] * sh[2], sh[3]});
    Var y = ad::conv1d_front(flat, w);
    return ad::reshape(y, {sh[0], sh[1], sh[2], y->shape()[2]});
  };

  for (int64_t i = 0; i < 2 * cfg_.n_blocks; ++i) {
    const bool bsja = (i % 2 == 0);
    const std::string pre = "block" + std::to_string(i) + ".";
    hvar = ad::add(hvar, marker_rows);

    // attention half
    Var n1 = modulate(rms_group_norm(hvar, p(pre + "norm1.gain"), cfg_.norm_groups),
                      pre + "norm1.mod");
    Var q = conv(n1, p(pre + "attn.wq"), bsja);
    Var kk = conv(n1, p(pre + "attn.wk"), bsja);
    Var vv = conv(n1, p(pre + "attn.wv"), bsja);
    Var attn;
    if (bsja) {
      // joint attention over the flattened (band, source) axis per time step
      auto heads = [&](const Var& x) {
        return ad::transpose(ad::reshape(x, {frames, b * s, nh, dh}),
                             {0, 2, 1, 3});  // [T, nh, BS, dh]
      };
      Var out = attend(heads(q), heads(kk), heads(vv), inv_sqrt_dh);
      attn = ad::reshape(ad::transpose(out, {0, 2, 1, 3}), {frames, b, s, o});
    } else {
      // time attention per (band, source) plus a parallel source-axis
      // attention, summed before the output projection
      auto split_heads = [&](const Var& x) {
        return ad::reshape(x, {frames, b, s, nh, dh});
      };
      Var qh = split_heads(q), kh = split_heads(kk), vh = split_heads(vv);
      Var time_out = attend(ad::transpose(qh, {1, 2, 3, 0, 4}),
                            ad::transpose(kh, {1, 2, 3, 0, 4}),
                            ad::transpose(vh, {1, 2, 3, 0, 4}), inv_sqrt_dh);
      time_out = ad::transpose(time_out, {3, 0, 1, 2, 4});  // [T,B,S,nh,dh]
      Var src_out = attend(ad::transpose(qh, {0, 1, 3, 2, 4}),
                           ad::transpose(kh, {0, 1, 3, 2, 4}),
                           ad::transpose(vh, {0, 1, 3, 2, 4}), inv_sqrt_dh);
      src_out = ad::transpose(src_out, {0, 1, 3, 2, 4});  // [T,B,S,nh,dh]
      attn = ad::reshape(ad::add(time_out, src_out), {frames, b, s, o});
    }
    hvar = ad::add(hvar, conv(attn, p(pre + "attn.wo"), bsja));

    // Conv-SwishGLU half
    Var n2 = modulate(rms_group_norm(hvar, p(pre + "norm2.gain"), cfg_.norm_groups),
                      pre + "norm2.mod");
    Var gate = ad::swish(conv(n2, p(pre + "mlp.w_gate"), bsja));
    Var lin = conv(n2, p(pre + "mlp.w_lin"), bsja);
    hvar = ad::add(hvar, conv(ad::mul(gate, lin), p(pre + "mlp.w_out"), bsja));

    if (!hvar->val.all_finite())
      throw std::runtime_error("net: non-finite activations after block " +
                               std::to_string(i));
  }

  // ----- hybrid mask decoder in the compressed spectrum domain
  Var hdec = ad::transpose(hvar, {2, 0, 1, 3});  // [S,T,B,O]
  Var u3 = ad::add(ad::matmul(hdec, p("head.w")), p("head.b"));  // [S,T,B,3O]
  Var mapping = band_unsplit_v(ad::slice(u3, 3, 0, o), mel_);
  Var mask_in = band_unsplit_v(ad::slice(u3, 3, o, o), mel_);
  Var mask_mix = band_unsplit_v(ad::slice(u3, 3, 2 * o, o), mel_);  // [S,T,F,2]

  Var enc_src = ad::slice(enc_spec, 0, 0, k);
  Var enc_mix = ad::slice(enc_spec, 0, k, 1);  // broadcast over sources
  Var out_spec = ad::add(
      ad::add(ad::slice(mapping, 0, 0, k),
              ad::mul(ad::slice(mask_in, 0, 0, k), enc_src)),
      ad::mul(ad::slice(mask_mix, 0, 0, k), enc_mix));

  return istft_v(decompress_v(out_spec), plan_, len);  // [K, L]
}

Stack VelocityNet::forward_stack(double t, const Stack& x_perp,
                                 const std::vector<double>& cond,
                                 bool use_ema) const {
  Var out = forward(t, x_perp, cond, use_ema);
  Stack result(x_perp.k, x_perp.l);
  result.data = out->val.v;
  return result;
}

RawVelocityFn VelocityNet::raw_fn(bool use_ema) const {
  return [this, use_ema](double t, const Stack& x_perp,
                         const std::vector<double>& cond) {
    return forward_stack(t, x_perp, cond, use_ema);
  };
}

DriftFn VelocityNet::drift_fn(bool use_ema) const {
  return wrapped(raw_fn(use_ema));
}

void VelocityNet::ema_reset() {
  ema_.clear();
  for (const auto& [name, v] : params_) ema_.emplace_back(name, v->val);
}

void VelocityNet::ema_update(double decay) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& shadow = ema_[i].second;
    const Tensor& current = params_[i].second->val;
    for (size_t j = 0; j < shadow.v.size(); ++j)
      shadow.v[j] = decay * shadow.v[j] + (1.0 - decay) * current.v[j];
  }
}

void VelocityNet::save(const std::string& path) const {
  NamedTensorList out;
  Tensor meta({11});
  meta.v = {static_cast<double>(cfg_.n_blocks),
            static_cast<double>(cfg_.embed_dim),
            static_cast<double>(cfg_.n_heads),
            static_cast<double>(cfg_.n_bands),
            static_cast<double>(cfg_.norm_groups),
            static_cast<double>(cfg_.time_embed_dim),
            static_cast<double>(cfg_.time_hidden),
            static_cast<double>(cfg_.mlp_mult),
            static_cast<double>(cfg_.stft.sample_rate),
            static_cast<double>(cfg_.stft.frame_len),
            static_cast<double>(cfg_.stft.hop)};
  out.emplace_back("config", std::move(meta));
  for (const auto& [name, v] : params_) out.emplace_back(name, v->val);
  for (const auto& [name, t] : ema_) out.emplace_back("ema/" + name, t);
  save_checkpoint(path, out);
}

VelocityNet VelocityNet::load(const std::string& path) {
  NamedTensorList stored = load_checkpoint(path);
  const Tensor& meta = find_tensor(stored, "config");
  if (meta.numel() != 11)
    throw std::runtime_error("checkpoint: malformed config tensor in " + path);
  NetConfig cfg;
  cfg.n_blocks = static_cast<int64_t>(meta.v[0]);
  cfg.embed_dim = static_cast<int64_t>(meta.v[1]);
  cfg.n_heads = static_cast<int64_t>(meta.v[2]);
  cfg.n_bands = static_cast<int64_t>(meta.v[3]);
  cfg.norm_groups = static_cast<int64_t>(meta.v[4]);
  cfg.time_embed_dim = static_cast<int64_t>(meta.v[5]);
  cfg.time_hidden = static_cast<int64_t>(meta.v[6]);
  cfg.mlp_mult = static_cast<int64_t>(meta.v[7]);
  cfg.stft.sample_rate = static_cast<int>(meta.v[8]);
  cfg.stft.frame_len = static_cast<int64_t>(meta.v[9]);
  cfg.stft.hop = static_cast<int64_t>(meta.v[10]);

  VelocityNet net(cfg, 0);
  for (auto& [name, v] : net.params_) {
    const Tensor& stored_t = find_tensor(stored, name);
    if (stored_t.shape != v->val.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "' in " + path);
    v->val = stored_t;
  }
  for (auto& [name, t] : net.ema_) {
    const Tensor& stored_t = find_tensor(stored, "ema/" + name);
    if (stored_t.shape != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for 'ema/" + name +
                               "' in " + path);
    t = stored_t;
  }
  return net;
}

}  // namespace floss
