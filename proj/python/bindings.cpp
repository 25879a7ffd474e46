// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "dgd/config.hpp"
#include "dgd/dropout.hpp"
#include "dgd/errors.hpp"
#include "dgd/impact.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/reid.hpp"
#include "dgd/report.hpp"
#include "dgd/schedule.hpp"

namespace py = pybind11;

namespace {

std::vector<double> cmc_curve(const std::vector<std::vector<double>>& probes,
                              const std::vector<int>& probe_ids,
                              const std::vector<std::vector<double>>& gallery,
                              const std::vector<int>& gallery_ids, std::size_t max_rank) {
  return dgd::cmc(dgd::FeatureMatrix::from_rows(probes, probe_ids),
                  dgd::FeatureMatrix::from_rows(gallery, gallery_ids), max_rank)
      .accuracies;
}

std::string run_seed(const std::string& config_path, std::uint64_t seed,
                     const std::string& out_dir, const std::vector<std::string>& stages) {
  const auto config = dgd::load_config(config_path);
  dgd::PipelineOptions options;
  options.out_dir = out_dir;
  for (const auto& s : stages) options.only_stages.push_back(dgd::stage_from_key(s));
  dgd::PipelineOutcome outcome;
  {
    py::gil_scoped_release release;
    outcome = dgd::run_full_pipeline(config, seed, options);
  }
  return dgd::seed_summary(outcome).dump();
}

}  // namespace

PYBIND11_MODULE(_dgd_lab, m) {
  m.doc() = "Bindings for the dgd-lab core library";
  m.attr("__version__") = DGD_LAB_VERSION;

  // Later registrations are tried first, so the base class goes first.
  auto base = py::register_exception<dgd::Error>(m, "DgdError", PyExc_RuntimeError);
  py::register_exception<dgd::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<dgd::ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<dgd::ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<dgd::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<dgd::TrainingError>(m, "TrainingError", base.ptr());

  m.def(
      "lr_step_decay",
      [](std::size_t epoch, double initial, double factor, std::size_t every, double floor) {
        return dgd::lr_step_decay(epoch, dgd::StepDecay{initial, factor, every, floor});
      },
      py::arg("epoch"), py::arg("initial") = 0.1, py::arg("factor") = 0.96,
      py::arg("every_epochs") = 4, py::arg("floor") = 0.0005);
  m.def(
      "lr_poly_decay",
      [](std::size_t iter, std::size_t max_iter, double base_lr, double power) {
        return dgd::lr_poly_decay(iter, max_iter, dgd::PolyDecay{base_lr, power});
      },
      py::arg("iter"), py::arg("max_iter"), py::arg("base") = 0.01, py::arg("power") = 0.5);

  m.def("keep_probability", &dgd::keep_probability, py::arg("score"), py::arg("temperature"));
  m.def(
      "select_temperature",
      [](const std::vector<double>& scores, double target) {
        return dgd::select_temperature(scores, target);
      },
      py::arg("scores"), py::arg("target_max_keep") = 0.9);
  m.def(
      "deterministic_mask",
      [](const std::vector<double>& scores) {
        return dgd::deterministic_mask(scores).values.storage();
      },
      py::arg("scores"));

  m.def(
      "pearson",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return dgd::pearson_correlation(a, b);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "spearman",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return dgd::spearman_correlation(a, b);
      },
      py::arg("a"), py::arg("b"));

  m.def("cmc", &cmc_curve, py::arg("probes"), py::arg("probe_ids"), py::arg("gallery"),
        py::arg("gallery_ids"), py::arg("max_rank"));

  m.def(
      "load_config_json",
      [](const std::string& path) { return dgd::config_to_json(dgd::load_config(path)).dump(); },
      py::arg("path"));
  m.def(
      "config_hash",
      [](const std::string& path) { return dgd::config_hash(dgd::load_config(path)); },
      py::arg("path"));
  m.def("run_seed_json", &run_seed, py::arg("config"), py::arg("seed"),
        py::arg("out_dir") = "", py::arg("stages") = std::vector<std::string>{});
}
