// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace floss {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Distinct, reproducible sub-seeds for (purpose, step, index) triples.
uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

SourceKind parse_source_kind(const std::string& s) {
  if (s == "sine_chirp") return SourceKind::kSineChirp;
  if (s == "filtered_noise") return SourceKind::kFilteredNoise;
  if (s == "am_tones") return SourceKind::kAmTones;
  throw std::invalid_argument(
      "unknown source kind '" + s +
      "' (expected sine_chirp|filtered_noise|am_tones)");
}

Band source_band(int index, int64_t n_sources, int sample_rate) {
  if (index < 0 || index >= n_sources)
    throw std::invalid_argument("source_band: index out of range");
  const double lo = 300.0;
  const double hi = 0.4 * sample_rate;
  const double ratio = std::pow(hi / lo, 1.0 / static_cast<double>(n_sources));
  Band band;
  band.lo_hz = lo * std::pow(ratio, index);
  // 30% stretch so neighbouring bands overlap
  band.hi_hz = std::min(hi, band.lo_hz * ratio * 1.3);
  return band;
}

std::vector<double> synth_am_tone(double carrier_hz, double rate_hz, double depth,
                                  double amplitude, int64_t length,
                                  int sample_rate, double phase) {
  std::vector<double> x(static_cast<size_t>(length));
  for (int64_t n = 0; n < length; ++n) {
    const double t = static_cast<double>(n) / sample_rate;
    const double env = 1.0 - depth * 0.5 * (1.0 + std::sin(2.0 * kPi * rate_hz * t));
    x[static_cast<size_t>(n)] =
        amplitude * env * std::sin(2.0 * kPi * carrier_hz * t + phase);
  }
  return x;
}

std::vector<double> synth_source(SourceKind kind, int index, int64_t n_sources,
                                 int64_t length, int sample_rate, Rng& rng) {
  const Band band = source_band(index, n_sources, sample_rate);
  const double span = band.hi_hz - band.lo_hz;
  std::vector<double> x(static_cast<size_t>(length));
  switch (kind) {
    case SourceKind::kSineChirp: {
      // linear sweep inside the band, random endpoints and phase
      double f0 = band.lo_hz + 0.05 * span + 0.4 * span * rng.uniform();
      double f1 = band.hi_hz - 0.05 * span - 0.4 * span * rng.uniform();
      if (f0 > f1) std::swap(f0, f1);
      const double phase = 2.0 * kPi * rng.uniform();
      const double dur = static_cast<double>(length) / sample_rate;
      for (int64_t n = 0; n < length; ++n) {
        const double t = static_cast<double>(n) / sample_rate;
        const double ph = 2.0 * kPi * (f0 * t + (f1 - f0) * t * t / (2.0 * dur));
        x[static_cast<size_t>(n)] = std::sin(ph + phase);
      }
      return x;
    }
    case SourceKind::kFilteredNoise: {
      // white noise through a windowed-sinc band-pass for the band
      const int64_t taps = 255;
      const int64_t half = taps / 2;
      std::vector<double> h(static_cast<size_t>(taps));
      const double flo = band.lo_hz / sample_rate;
      const double fhi = band.hi_hz / sample_rate;
      for (int64_t n = 0; n < taps; ++n) {
        const double m = static_cast<double>(n - half);
        const double lowpass_hi =
            m == 0.0 ? 2.0 * fhi : std::sin(2.0 * kPi * fhi * m) / (kPi * m);
        const double lowpass_lo =
            m == 0.0 ? 2.0 * flo : std::sin(2.0 * kPi * flo * m) / (kPi * m);
        const double window =
            0.54 - 0.46 * std::cos(2.0 * kPi * n / static_cast<double>(taps - 1));
        h[static_cast<size_t>(n)] = (lowpass_hi - lowpass_lo) * window;
      }
      std::vector<double> noise(static_cast<size_t>(length));
      for (auto& v : noise) v = rng.normal();
      for (int64_t n = 0; n < length; ++n) {
        double acc = 0.0;
        for (int64_t k = 0; k < taps; ++k) {
          const int64_t j = n - half + k;
          if (j >= 0 && j < length)
            acc += h[static_cast<size_t>(k)] * noise[static_cast<size_t>(j)];
        }
        x[static_cast<size_t>(n)] = acc;
      }
      return x;
    }
    case SourceKind::kAmTones: {
      const double carrier = band.lo_hz + span * (0.1 + 0.8 * rng.uniform());
      const double rate = 2.0 + 6.0 * rng.uniform();
      const double depth = 0.5 + 0.5 * rng.uniform();
      const double phase = 2.0 * kPi * rng.uniform();
      return synth_am_tone(carrier, rate, depth, 1.0, length, sample_rate, phase);
    }
  }
  return x;
}

int64_t env_window_samples(const RunConfig& cfg) {
  int64_t w = static_cast<int64_t>(cfg.env_window_ms * cfg.sample_rate / 1000.0 + 0.5);
  if (w % 2 == 0) --w;
  const int64_t max_w = cfg.crop_samples() % 2 == 0 ? cfg.crop_samples() - 1
                                                    : cfg.crop_samples();
  w = std::min(w, max_w);
  return std::max<int64_t>(w, 3);
}

NoiseShaper make_shaper_from_config(const RunConfig& cfg,
                                    const std::vector<double>& mixture) {
  const int64_t w = env_window_samples(cfg);
  if (cfg.noise == "constant") return make_constant_shaper(cfg.sigma0);
  if (cfg.noise == "active_power")
    return make_active_power_shaper(mixture, w, cfg.env_threshold_db);
  if (cfg.noise == "envelope")
    return make_envelope_shaper(mixture, w, cfg.env_threshold_db);
  throw std::invalid_argument("unknown noise kind '" + cfg.noise + "'");
}

double active_power_db(const std::vector<double>& x, const RunConfig& cfg) {
  const double ap = active_power(envelope(x, env_window_samples(cfg),
                                          cfg.env_threshold_db));
  if (ap <= 0.0) return -300.0;
  return 20.0 * std::log10(ap);
}

FlowPair make_example(const RunConfig& cfg, Rng& rng) {
  const SourceKind kind = parse_source_kind(cfg.source_kind);
  const int64_t k = cfg.n_sources;
  const int64_t len = cfg.crop_samples();
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::vector<std::vector<double>> sources;
    std::vector<double> power_db;
    bool silent = false;
    for (int i = 0; i < k; ++i) {
      sources.push_back(synth_source(kind, i, k, len, cfg.sample_rate, rng));
      const double db = active_power_db(sources.back(), cfg);
      if (db <= -299.0) silent = true;
      power_db.push_back(db);
    }
    if (silent) continue;

    // target levels: source 0 at the level draw, the rest offset by SNR
    // draws, then everything shifted so the loudest sits at the level draw
    const double level =
        cfg.level_min_db + (cfg.level_max_db - cfg.level_min_db) * rng.uniform();
    std::vector<double> targets(static_cast<size_t>(k), level);
    for (int i = 1; i < k; ++i) {
      const double snr =
          cfg.snr_min_db + (cfg.snr_max_db - cfg.snr_min_db) * rng.uniform();
      targets[static_cast<size_t>(i)] = level - snr;
    }
    const double shift = level - *std::max_element(targets.begin(), targets.end());
    Stack x1(k, len);
    for (int i = 0; i < k; ++i) {
      const double gain_db = targets[static_cast<size_t>(i)] + shift -
                             power_db[static_cast<size_t>(i)];
      const double gain = std::pow(10.0, gain_db / 20.0);
      for (int64_t n = 0; n < len; ++n)
        x1.at(i, n) = gain * sources[static_cast<size_t>(i)][static_cast<size_t>(n)];
    }
    validate_stack(x1, "make_example");

    FlowPair pair;
    pair.x1 = x1;
    const std::vector<double> mixture = mix(x1);
    pair.cond = mean_stack_from_mixture(mixture, k);
    const NoiseShaper shaper = make_shaper_from_config(cfg, mixture);
    pair.x0 = make_x0(pair.cond, shaper, rng);
    return pair;
  }
  throw std::runtime_error("make_example: sources stayed silent after 10 draws");
}

double lr_at(const RunConfig& cfg, int64_t step) {
  const int64_t warmup = static_cast<int64_t>(cfg.warmup_frac * cfg.steps);
  if (warmup > 0 && step < warmup)
    return cfg.lr_peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double denom = static_cast<double>(std::max<int64_t>(cfg.steps - warmup, 1));
  const double progress = static_cast<double>(step - warmup) / denom;
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(kPi * progress));
}

TrainResult train(VelocityNet& net, const RunConfig& cfg,
                  const std::string& loss_csv_path) {
  TrainResult result;
  auto& params = net.params();
  std::vector<Tensor> adam_m, adam_v;
  for (auto& [name, p] : params) {
    adam_m.push_back(Tensor::zeros(p->val.shape));
    adam_v.push_back(Tensor::zeros(p->val.shape));
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const TimeWeighting weighting = cfg.weighting();
  const DriftFn drift = net.drift_fn(false);
  net.ema_reset();

  std::ofstream csv;
  if (!loss_csv_path.empty()) {
    csv.open(loss_csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("train: cannot write " + loss_csv_path);
    csv << "step,loss,lr\n";
  }

  for (int64_t step = 0; step < cfg.steps; ++step) {
    for (auto& [name, p] : params)
      if (!p->grad.v.empty()) std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0);

    double loss_sum = 0.0;
    std::vector<uint64_t> batch_seeds;
    for (int64_t i = 0; i < cfg.batch_size; ++i) {
      const uint64_t ex_seed = mix_seed(cfg.seed, static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(i));
      batch_seeds.push_back(ex_seed);
      Rng ex_rng(ex_seed);
      FlowPair pair = make_example(cfg, ex_rng);
      const double denom = target_norm2(pair);
      if (cfg.loss != LossKind::kRaw && denom <= 0.0) {
        ++result.counters.skipped_zero_denominator;
        continue;
      }
      const Permutation perm = cfg.assignment == "euclidean"
                                   ? euclidean_assign(pair.x0, pair.x1)
                                   : pit_assign(drift, pair);
      const double t = sample_time(weighting, ex_rng);

      Stack p1 = permute_rows(pair.x1, perm);
      Stack xt(pair.x0.k, pair.x0.l);
      Stack ptarget(pair.x0.k, pair.x0.l);
      for (size_t j = 0; j < xt.data.size(); ++j) {
        xt.data[j] = t * p1.data[j] + (1.0 - t) * pair.x0.data[j];
        ptarget.data[j] = p1.data[j] - pair.x0.data[j];
      }
      const Stack x_perp = project_perp(xt);
      ad::Var raw_out = net.forward(t, x_perp, cond_row(pair));
      ad::Var pred = ad::sub(raw_out, ad::mean_axis(raw_out, 0));  // P_perp
      ad::Var loss = loss_graph(pred, ptarget, denom, cfg.loss, &result.counters);
      loss_sum += loss->val.v[0];
      ad::backward(ad::scale(loss, 1.0 / static_cast<double>(cfg.batch_size)));
    }
    const double mean_loss = loss_sum / static_cast<double>(cfg.batch_size);
    if (!std::isfinite(mean_loss)) {
      std::string seeds;
      for (uint64_t s : batch_seeds) seeds += " " + std::to_string(s);
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step) + "; example seeds:" + seeds);
    }

    // global-norm clip, then AdamW with decoupled weight decay
    double norm2 = 0.0;
    for (auto& [name, p] : params)
      if (!p->grad.v.empty())
        for (double g : p->grad.v) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    const double lr = lr_at(cfg, step);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step + 1));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step + 1));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& p = params[pi].second;
      if (p->grad.v.empty()) continue;
      for (size_t j = 0; j < p->val.v.size(); ++j) {
        const double g = clip * p->grad.v[j];
        adam_m[pi].v[j] = beta1 * adam_m[pi].v[j] + (1.0 - beta1) * g;
        adam_v[pi].v[j] = beta2 * adam_v[pi].v[j] + (1.0 - beta2) * g * g;
        const double mhat = adam_m[pi].v[j] / bc1;
        const double vhat = adam_v[pi].v[j] / bc2;
        p->val.v[j] -= lr * (mhat / (std::sqrt(vhat) + eps) +
                             cfg.weight_decay * p->val.v[j]);
      }
    }
    net.ema_update(cfg.ema_decay);

    result.losses.push_back(mean_loss);
    result.lrs.push_back(lr);
    if (csv.is_open()) csv << step << "," << mean_loss << "," << lr << "\n";
  }
  return result;
}

EvalReport evaluate(const VelocityNet& net, const RunConfig& cfg,
                    const std::string& csv_path) {
  EvalReport report;
  const DriftFn drift = net.drift_fn(cfg.use_ema);
  const Schedule sched = parse_schedule(cfg.schedule);

  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("evaluate: cannot write " + csv_path);
    csv << "id,perm";
    for (int64_t i = 0; i < cfg.n_sources; ++i) csv << ",sisdr_src" << (i + 1);
    csv << ",sisdr_mean,baseline_mean\n";
  }

  std::vector<double> means;
  for (int id = 0; id < cfg.eval_examples; ++id) {
    Rng ex_rng(mix_seed(cfg.sample_seed, 0xEA11u, static_cast<uint64_t>(id)));
    FlowPair pair = make_example(cfg, ex_rng);
    const std::vector<double> mixture = mix(pair.x1);
    const NoiseShaper shaper = make_shaper_from_config(cfg, mixture);
    Rng sep_rng(mix_seed(cfg.sample_seed, 0x5E9u, static_cast<uint64_t>(id)));
    const Stack est =
        separate(drift, mixture, cfg.n_sources, shaper, sched, sep_rng);

    EvalRow row;
    row.id = id;
    PermScore score = best_perm_score(est, pair.x1);
    row.perm = score.perm;
    row.per_source = score.per_source;
    row.mean = score.mean;
    for (int64_t i = 0; i < cfg.n_sources; ++i) {
      std::vector<double> ref(pair.x1.row(i), pair.x1.row(i) + pair.x1.l);
      row.baseline += si_sdr(mixture, ref);
    }
    row.baseline /= static_cast<double>(cfg.n_sources);

    report.mean += row.mean;
    report.baseline_mean += row.baseline;
    means.push_back(row.mean);
    if (csv.is_open()) {
      csv << row.id << ",";
      for (size_t i = 0; i < row.perm.size(); ++i)
        csv << (i ? "-" : "") << row.perm[i];
      for (double v : row.per_source) csv << "," << v;
      csv << "," << row.mean << "," << row.baseline << "\n";
    }
    report.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean /= n;
  report.baseline_mean /= n;
  std::sort(means.begin(), means.end());
  report.median = means.size() % 2 == 1
                      ? means[means.size() / 2]
                      : 0.5 * (means[means.size() / 2 - 1] + means[means.size() / 2]);
  return report;
}

}  // namespace floss
