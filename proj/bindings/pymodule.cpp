// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: training from a config string,
// separation, scoring, and the selftest checklist.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "floss/metrics.hpp"
#include "floss/pipeline.hpp"
#include "floss/selftest.hpp"

namespace py = pybind11;
using namespace floss;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D float array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

py::array_t<double> stack_to_array(const Stack& s) {
  py::array_t<double> out({s.k, s.l});
  std::copy(s.data.begin(), s.data.end(), out.mutable_data());
  return out;
}

RunConfig config_from_text(const std::string& text,
                           const std::vector<std::string>& overrides) {
  KvList kv = parse_config_text(text);
  for (const auto& o : overrides) add_override(kv, o);
  return make_run_config(kv);
}

struct PyModel {
  std::shared_ptr<VelocityNet> net;

  py::array_t<double> separate_mixture(
      const py::array_t<double, py::array::c_style | py::array::forcecast>& mixture,
      int64_t n_sources, const std::string& schedule, const std::string& noise,
      double sigma0, int sample_rate, bool use_ema, uint64_t seed) {
    const std::vector<double> mix = to_vector(mixture);
    RunConfig shaper_cfg;
    shaper_cfg.sample_rate = sample_rate;
    shaper_cfg.crop_seconds =
        static_cast<double>(mix.size()) / static_cast<double>(sample_rate);
    shaper_cfg.noise = noise;
    shaper_cfg.sigma0 = sigma0;
    if (noise != "constant" && noise != "active_power" && noise != "envelope")
      throw std::invalid_argument("noise must be constant|active_power|envelope");
    NoiseShaper shaper = make_shaper_from_config(shaper_cfg, mix);
    Rng rng(seed);
    Stack est = separate(net->drift_fn(use_ema), mix, n_sources, shaper,
                         parse_schedule(schedule), rng);
    return stack_to_array(est);
  }
};

}  // namespace

PYBIND11_MODULE(_floss, m) {
  m.doc() = "flow matching for single-channel source separation";

  py::class_<PyModel>(m, "Model")
      .def_static("load",
                  [](const std::string& path) {
                    PyModel p;
                    p.net = std::make_shared<VelocityNet>(VelocityNet::load(path));
                    return p;
                  },
                  py::arg("path"))
      .def("save", [](const PyModel& p, const std::string& path) { p.net->save(path); },
           py::arg("path"))
      .def_property_readonly(
          "param_count", [](const PyModel& p) { return p.net->param_count(); })
      .def("separate", &PyModel::separate_mixture, py::arg("mixture"),
           py::arg("n_sources") = 2, py::arg("schedule") = "linear:25",
           py::arg("noise") = "envelope", py::arg("sigma0") = 1.0,
           py::arg("sample_rate") = 16000, py::arg("use_ema") = true,
           py::arg("seed") = 1,
           "Separate a 1-D mixture into an (n_sources, len) array.");

  m.def(
      "train",
      [](const std::string& config_text, const std::vector<std::string>& overrides,
         const std::string& loss_csv) {
        RunConfig cfg = config_from_text(config_text, overrides);
        PyModel p;
        p.net = std::make_shared<VelocityNet>(cfg.net, cfg.seed);
        TrainResult r = train(*p.net, cfg, loss_csv);
        return py::make_tuple(p, r.losses);
      },
      py::arg("config_text"), py::arg("overrides") = std::vector<std::string>{},
      py::arg("loss_csv") = "",
      "Train a fresh model from an INI config string; returns (model, losses).");

  m.def(
      "evaluate",
      [](const PyModel& p, const std::string& config_text,
         const std::vector<std::string>& overrides, const std::string& csv) {
        RunConfig cfg = config_from_text(config_text, overrides);
        EvalReport rep = evaluate(*p.net, cfg, csv);
        py::dict out;
        out["mean"] = rep.mean;
        out["median"] = rep.median;
        out["baseline_mean"] = rep.baseline_mean;
        return out;
      },
      py::arg("model"), py::arg("config_text"),
      py::arg("overrides") = std::vector<std::string>{}, py::arg("csv") = "",
      "Evaluate a model on the config's synthetic eval set.");

  m.def(
      "si_sdr",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& est,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& ref) {
        return si_sdr(to_vector(est), to_vector(ref));
      },
      py::arg("est"), py::arg("ref"),
      "Scale-invariant SDR in dB (clamped to +/-100).");

  m.def(
      "best_perm_score",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& est,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& ref) {
        if (est.ndim() != 2 || ref.ndim() != 2)
          throw std::invalid_argument("expected 2-D (sources, len) arrays");
        Stack e(est.shape(0), est.shape(1)), r(ref.shape(0), ref.shape(1));
        std::copy(est.data(), est.data() + est.size(), e.data.begin());
        std::copy(ref.data(), ref.data() + ref.size(), r.data.begin());
        PermScore s = best_perm_score(e, r);
        py::dict out;
        out["perm"] = s.perm;
        out["per_source"] = s.per_source;
        out["mean"] = s.mean;
        return out;
      },
      py::arg("est"), py::arg("ref"),
      "Best-permutation SI-SDR of an estimated stack against references.");

  m.def("snr_to_t", &snr_to_t, py::arg("r_db"),
        "Map an SNR draw in dB to flow time t = (1 + 10^(-r/20))^-1.");

  m.def(
      "selftest",
      [](uint64_t seed) {
        std::ostringstream out;
        SelfTestReport rep = run_selftest(seed, &out);
        return py::make_tuple(rep.all_ok(), out.str());
      },
      py::arg("seed") = 1, "Run the invariant checklist; returns (ok, report).");
}
