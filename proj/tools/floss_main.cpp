// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: train / separate / eval / ablate / selftest.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 I/O error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "floss/pipeline.hpp"
#include "floss/selftest.hpp"
#include "floss/wav.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

// Thrown for problems that should map to the I/O exit code.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_readable(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
}

void require_writable_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir);
}

floss::RunConfig config_from(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  floss::KvList kv;
  if (!config_path.empty()) {
    require_readable(config_path);
    kv = floss::read_config_file(config_path);
  }
  for (const auto& o : overrides) floss::add_override(kv, o);
  return floss::make_run_config(kv);
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_dir) {
  floss::RunConfig cfg = config_from(config_path, overrides);
  require_writable_dir(out_dir);
  floss::VelocityNet net(cfg.net, cfg.seed);
  std::cout << "training: " << cfg.steps << " steps, batch " << cfg.batch_size
            << ", " << net.param_count() << " parameters\n";
  floss::TrainResult r = floss::train(net, cfg, out_dir + "/loss.csv");
  net.save(out_dir + "/model.ckpt");
  std::cout << "final loss " << r.losses.back() << " ("
            << floss::loss_kind_name(cfg.loss) << "), skipped "
            << r.counters.skipped_zero_denominator << ", clamps "
            << r.counters.db_clamps << "\n"
            << "wrote " << out_dir << "/loss.csv and " << out_dir
            << "/model.ckpt\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& config_path,
             const std::vector<std::string>& overrides,
             const std::string& out_csv) {
  floss::RunConfig cfg = config_from(config_path, overrides);
  require_readable(model_path);
  floss::VelocityNet net = floss::VelocityNet::load(model_path);
  floss::EvalReport rep = floss::evaluate(net, cfg, out_csv);
  std::cout << "evaluated " << rep.rows.size() << " examples\n"
            << "mean SI-SDR " << rep.mean << " dB, median " << rep.median
            << " dB, mixture baseline " << rep.baseline_mean << " dB\n"
            << "wrote " << out_csv << "\n";
  return 0;
}

int cmd_separate(const std::string& model_path, const std::string& input_wav,
                 const std::string& out_dir, int64_t n_sources,
                 const std::string& schedule, const std::string& noise,
                 double sigma0, double env_window_ms, double env_threshold_db,
                 bool use_ema, uint64_t seed) {
  require_readable(model_path);
  require_readable(input_wav);
  require_writable_dir(out_dir);
  floss::VelocityNet net = floss::VelocityNet::load(model_path);
  floss::WavData in = floss::read_wav(input_wav);

  floss::RunConfig shaper_cfg;
  shaper_cfg.sample_rate = in.sample_rate;
  shaper_cfg.crop_seconds =
      static_cast<double>(in.samples.size()) / in.sample_rate;
  shaper_cfg.noise = noise;
  shaper_cfg.sigma0 = sigma0;
  shaper_cfg.env_window_ms = env_window_ms;
  shaper_cfg.env_threshold_db = env_threshold_db;
  if (noise != "constant" && noise != "active_power" && noise != "envelope")
    throw std::invalid_argument("noise must be constant|active_power|envelope");
  floss::NoiseShaper shaper = floss::make_shaper_from_config(shaper_cfg, in.samples);

  floss::Rng rng(seed);
  floss::Stack est =
      floss::separate(net.drift_fn(use_ema), in.samples, n_sources, shaper,
                      floss::parse_schedule(schedule), rng);

  const std::string stem = std::filesystem::path(input_wav).stem().string();
  for (int64_t k = 0; k < est.k; ++k) {
    floss::WavData out;
    out.sample_rate = in.sample_rate;
    out.samples.assign(est.row(k), est.row(k) + est.l);
    const std::string path =
        out_dir + "/" + stem + "_src" + std::to_string(k + 1) + ".wav";
    floss::write_wav(path, out);
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& config_path,
               const std::vector<std::string>& overrides,
               const std::vector<std::string>& axes,
               const std::string& out_csv, int64_t max_runs) {
  const floss::RunConfig base = config_from(config_path, overrides);

  std::vector<std::pair<std::string, std::vector<std::string>>> grid_axes;
  for (const std::string& axis : axes) {
    if (axis == "loss")
      grid_axes.push_back({axis, {"raw", "normalized", "db"}});
    else if (axis == "time_weighting")
      grid_axes.push_back({axis, {"half_delta", "mostly_uniform", "snr_uniform"}});
    else if (axis == "noise")
      grid_axes.push_back({axis, {"constant", "active_power", "envelope"}});
    else if (axis == "schedule")
      grid_axes.push_back({axis, {"linear:25", "custom5", "custom5_reversed"}});
    else if (axis == "assignment")
      grid_axes.push_back({axis, {"pit", "euclidean"}});
    else
      throw std::invalid_argument(
          "unknown ablation axis '" + axis +
          "' (expected loss|time_weighting|noise|schedule|assignment)");
  }
  int64_t n_runs = 1;
  for (const auto& [axis, values] : grid_axes)
    n_runs *= static_cast<int64_t>(values.size());
  if (n_runs > max_runs)
    throw std::invalid_argument(
        "ablation grid has " + std::to_string(n_runs) + " runs, above the " +
        std::to_string(max_runs) + "-run limit; shrink the axes or raise "
        "--max-runs");

  std::ofstream csv(out_csv, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + out_csv);
  csv << "loss,time_weighting,noise,schedule,assignment,sisdr_mean,"
         "baseline_mean\n";

  for (int64_t run = 0; run < n_runs; ++run) {
    floss::RunConfig cfg = base;
    int64_t rem = run;
    for (const auto& [axis, values] : grid_axes) {
      const std::string& value = values[static_cast<size_t>(rem % values.size())];
      rem /= static_cast<int64_t>(values.size());
      if (axis == "loss") cfg.loss = floss::parse_loss_kind(value);
      else if (axis == "time_weighting") cfg.time_weighting = value;
      else if (axis == "noise") cfg.noise = value;
      else if (axis == "schedule") cfg.schedule = value;
      else cfg.assignment = value;
    }
    std::cout << "run " << (run + 1) << "/" << n_runs << ": loss="
              << floss::loss_kind_name(cfg.loss) << " time_weighting="
              << cfg.time_weighting << " noise=" << cfg.noise << " schedule="
              << cfg.schedule << " assignment=" << cfg.assignment << "\n";
    floss::VelocityNet net(cfg.net, cfg.seed);
    floss::train(net, cfg);
    floss::EvalReport rep = floss::evaluate(net, cfg);
    std::cout << "  mean SI-SDR " << rep.mean << " dB (baseline "
              << rep.baseline_mean << " dB)\n";
    csv << floss::loss_kind_name(cfg.loss) << "," << cfg.time_weighting << ","
        << cfg.noise << "," << cfg.schedule << "," << cfg.assignment << ","
        << rep.mean << "," << rep.baseline_mean << "\n";
    csv.flush();
  }
  std::cout << "wrote " << out_csv << "\n";
  return 0;
}

int cmd_selftest(uint64_t seed) {
  floss::SelfTestReport rep = floss::run_selftest(seed, &std::cout);
  return rep.all_ok() ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"floss: flow matching for single-channel source separation"};
  app.require_subcommand(1);

  int threads = 1;
  if (const char* env = std::getenv("FLOSS_THREADS")) threads = std::atoi(env);
  app.add_option("--threads", threads, "worker thread count (env FLOSS_THREADS)")
      ->capture_default_str();

  std::string config_path, out_dir = ".", model_path, input_wav;
  std::string out_csv = "metrics.csv", ablation_csv = "ablation.csv";
  std::string schedule = "linear:25", noise = "envelope";
  std::vector<std::string> overrides, axes;
  int64_t n_sources = 2, max_runs = 27;
  double sigma0 = 1.0, env_window_ms = 64.0, env_threshold_db = 40.0;
  bool use_ema = true;
  uint64_t seed = 1;

  CLI::App* train = app.add_subcommand("train", "train a separation model");
  train->add_option("--config", config_path, "run config file");
  train->add_option("--set", overrides, "override, e.g. train.steps=100");
  train->add_option("--out", out_dir, "output directory")->capture_default_str();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained model");
  eval->add_option("--model", model_path, "checkpoint path")->required();
  eval->add_option("--config", config_path, "run config file");
  eval->add_option("--set", overrides, "config override");
  eval->add_option("--out", out_csv, "metrics CSV path")->capture_default_str();

  CLI::App* sep = app.add_subcommand("separate", "separate a mixture WAV");
  sep->add_option("--model", model_path, "checkpoint path")->required();
  sep->add_option("--input", input_wav, "mono mixture WAV")->required();
  sep->add_option("--out", out_dir, "output directory")->capture_default_str();
  sep->add_option("--sources", n_sources, "number of sources")
      ->capture_default_str();
  sep->add_option("--schedule", schedule, "sampling schedule")
      ->capture_default_str();
  sep->add_option("--noise", noise, "noise shaping kind")->capture_default_str();
  sep->add_option("--sigma0", sigma0, "constant noise scale")
      ->capture_default_str();
  sep->add_option("--env-window-ms", env_window_ms, "envelope window")
      ->capture_default_str();
  sep->add_option("--env-threshold-db", env_threshold_db, "activity threshold")
      ->capture_default_str();
  sep->add_flag("--no-ema{false}", use_ema, "use raw instead of EMA weights");
  sep->add_option("--seed", seed, "noise draw seed")->capture_default_str();

  CLI::App* ablate = app.add_subcommand("ablate", "train/eval an ablation grid");
  ablate->add_option("--config", config_path, "run config file");
  ablate->add_option("--set", overrides, "config override");
  ablate->add_option("--axes", axes, "axes: loss,time_weighting,noise,schedule,assignment")
      ->delimiter(',');
  ablate->add_option("--out", ablation_csv, "ablation CSV path")
      ->capture_default_str();
  ablate->add_option("--max-runs", max_runs, "refuse larger grids")
      ->capture_default_str();

  CLI::App* selftest = app.add_subcommand("selftest", "run the invariant checklist");
  selftest->add_option("--seed", seed, "rng seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    openblas_set_num_threads(threads < 1 ? 1 : threads);
    if (train->parsed()) return cmd_train(config_path, overrides, out_dir);
    if (eval->parsed()) return cmd_eval(model_path, config_path, overrides, out_csv);
    if (sep->parsed())
      return cmd_separate(model_path, input_wav, out_dir, n_sources, schedule,
                          noise, sigma0, env_window_ms, env_threshold_db,
                          use_ema, seed);
    if (ablate->parsed())
      return cmd_ablate(config_path, overrides, axes, ablation_csv, max_runs);
    if (selftest->parsed()) return cmd_selftest(seed);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
