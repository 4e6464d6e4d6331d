#include "clademap/assoc_bayes.hpp"
#include "clademap/cli.hpp"
#include "clademap/data_model.hpp"
#include "clademap/errors.hpp"
#include "clademap/treesim.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace clademap;

namespace {

PriorSpec make_prior(double a, double c, double prior_odds) {
  PriorSpec p;
  p.a = a;
  p.c = c;
  p.prior_odds_2v1 = prior_odds;
  p.validate();
  return p;
}

py::dict result_dict(const BayesResult& r) {
  py::dict d;
  d["position"] = r.position_bp;
  d["log10_bf1"] = r.log10_bf1;
  d["log10_bf2"] = r.log10_bf2;
  d["posterior_2v1"] = r.posterior_2v1;
  d["best_branch"] = r.best_branch;
  d["best_pair"] = py::make_tuple(r.best_pair.first, r.best_pair.second);
  d["error"] = r.error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_clademap, m) {
  m.doc() = "Genealogy-based association mapping";
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line; returns (exit_code, stdout, stderr).");

  m.def(
      "log_bf_table",
      [](const std::vector<double>& cases, const std::vector<double>& controls, double a, double c) {
        return log_bf_table(AlleleCountTable{controls, cases}, make_prior(a, c, 1.0));
      },
      py::arg("cases"), py::arg("controls"), py::arg("a") = 20.0, py::arg("c") = 30.0,
      "Natural-log Bayes factor of a case/control allele count table.");

  m.def("posterior_two_vs_one", &posterior_two_vs_one, py::arg("log10_bf1"), py::arg("log10_bf2"),
        py::arg("prior_odds") = 1.0);
  m.def("expected_branch_length", &expected_branch_length, py::arg("n_death"), py::arg("n_birth"));

  py::class_<HaplotypePanel>(m, "Panel")
      .def_property_readonly("n_haplotypes", &HaplotypePanel::n_haplotypes)
      .def_property_readonly("n_sites", &HaplotypePanel::n_sites)
      .def("position", &HaplotypePanel::position)
      .def("minor_allele_frequency", &HaplotypePanel::minor_allele_frequency)
      .def("haplotype", &HaplotypePanel::haplotype);
  m.def(
      "load_panel", [](const std::string& legend, const std::string& haps) { return load_panel(legend, haps); },
      py::arg("legend"), py::arg("haps"));

  m.def(
      "scan",
      [](const std::string& legend, const std::string& haps, const std::string& map_path, const std::string& gen,
         const std::string& sample, std::int64_t start, std::int64_t end, std::int64_t spacing, double a, double c,
         double prior_odds) {
        const auto panel = load_panel(legend, haps);
        const auto map = load_map(map_path);
        const auto study = load_genotypes(gen, sample, panel);
        const auto grid = make_grid(start, end, spacing).positions_bp;
        const auto prior = make_prior(a, c, prior_odds);
        std::vector<BayesResult> results;
        {
          py::gil_scoped_release release;
          results = scan(panel, map, study, grid, prior, default_scan_params(panel));
        }
        py::list out;
        for (const auto& r : results) out.append(result_dict(r));
        return out;
      },
      py::arg("legend"), py::arg("haps"), py::arg("map"), py::arg("gen"), py::arg("sample"), py::arg("start"),
      py::arg("end"), py::arg("spacing") = 5000, py::arg("a") = 20.0, py::arg("c") = 30.0,
      py::arg("prior_odds") = 1.0, "Scans a region; one dict per grid position.");
}
