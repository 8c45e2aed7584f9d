#include "wpcausal/errors.hpp"
#include "wpcausal/measurement.hpp"
#include "wpcausal/montecarlo.hpp"
#include "wpcausal/msm.hpp"
#include "wpcausal/scores.hpp"
#include "wpcausal/simulate.hpp"
#include "wpcausal/snmm.hpp"
#include "wpcausal/spd.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace wpcausal;

namespace {

py::dict named(const std::vector<std::string>& names, const VectorXd& values) {
    py::dict d;
    for (std::size_t j = 0; j < names.size(); ++j) d[py::str(names[j])] = values(static_cast<Eigen::Index>(j));
    return d;
}

py::dict series_dict(const std::vector<VariableSpec>& vars, const std::vector<MatrixXd>& series) {
    py::dict d;
    for (std::size_t v = 0; v < vars.size(); ++v) d[py::str(vars[v].name)] = series[v];
    return d;
}

std::vector<VariableSpec> parse_variables(const std::vector<std::pair<std::string, std::string>>& vars) {
    std::vector<VariableSpec> out;
    for (const auto& [name, role] : vars) out.push_back({name, parse_role(role)});
    return out;
}

SimConfig make_config(int n_persons, int k_times, double phi2, const std::string& scenario, std::uint64_t seed) {
    SimConfig c;
    c.n_persons = n_persons;
    c.k_times = k_times;
    c.phi2 = phi2;
    c.scenario = parse_scenario(scenario);
    c.seed = seed;
    return c;
}

py::dict estimates_dict(const CausalEstimates& est) {
    py::dict d;
    d["method"] = std::string(to_string(est.method));
    d["centering"] = std::string(to_string(est.centering));
    d["estimates"] = named(est.names, est.estimates);
    d["standard_errors"] = named(est.names, est.standard_errors);
    d["absent"] = est.absent;
    d["warnings"] = est.warnings;
    d["diagnostics"] = est.diagnostics;
    return d;
}

ScoreSet make_scores(const PanelDataset& data, const std::string& centering, const std::optional<MatrixXd>& true_traits) {
    const Centering c = parse_centering(centering);
    std::optional<Step1Result> s1;
    if (c == Centering::proposed || c == Centering::trait_predictor) s1 = run_step1(data);
    return center(data, c, {s1 ? &*s1 : nullptr, true_traits ? &*true_traits : nullptr});
}

}  // namespace

PYBIND11_MODULE(_wpcausal, m) {
    m.doc() = "Within-person causal effects from panel data";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

    py::class_<PanelDataset>(m, "PanelDataset")
        .def(py::init([](const std::vector<std::pair<std::string, std::string>>& variables,
                         const std::vector<MatrixXd>& values) {
                 return PanelDataset(parse_variables(variables), values);
             }),
             py::arg("variables"), py::arg("values"),
             "variables: [(name, role)], values: one N x (K+1) array per variable")
        .def_property_readonly("n_persons", &PanelDataset::n_persons)
        .def_property_readonly("n_times", &PanelDataset::n_times)
        .def_property_readonly("names", [](const PanelDataset& d) {
            std::vector<std::string> out;
            for (const auto& v : d.variables()) out.push_back(v.name);
            return out;
        })
        .def("series", &PanelDataset::series, py::arg("variable"))
        .def("series", [](const PanelDataset& d, const std::string& name) { return d.series(d.variable_index(name)); },
             py::arg("variable"))
        .def("to_dict", [](const PanelDataset& d) { return series_dict(d.variables(), d.all_series()); });

    m.def("load_panel_csv",
          [](const std::string& path, const std::vector<std::pair<std::string, std::string>>& variables) {
              return load_panel_csv(path, parse_variables(variables));
          },
          py::arg("path"),
          py::arg("variables") = std::vector<std::pair<std::string, std::string>>{
              {"Y", "outcome"}, {"A", "treatment"}, {"L", "confounder"}});
    m.def("write_panel_csv", py::overload_cast<const std::filesystem::path&, const PanelDataset&>(&write_panel_csv),
          py::arg("path"), py::arg("panel"));

    m.def("simulate",
          [](int n_persons, int k_times, double phi2, const std::string& scenario, std::uint64_t seed) {
              const SimulatedPanel sim = generate(make_config(n_persons, k_times, phi2, scenario, seed));
              py::dict d;
              d["observed"] = sim.observed;
              d["true_within"] = series_dict(sim.observed.variables(), sim.true_within);
              d["true_traits"] = sim.true_traits;
              d["true_tau"] = named(sim.true_tau.names, sim.true_tau.values);
              return d;
          },
          py::arg("n_persons") = 1000, py::arg("k_times") = 4, py::arg("phi2") = 10.0, py::arg("scenario") = "clean",
          py::arg("seed") = 1, "Draw a synthetic panel; returns observed panel and ground truth");

    m.def("true_tau",
          [](int k_times, int first_treatment) {
              const NamedVector t = true_tau(k_times, first_treatment);
              return named(t.names, t.values);
          },
          py::arg("k_times"), py::arg("first_treatment") = 0);

    m.def("fit_measurement",
          [](const MatrixXd& series) {
              const MeasurementFit f = fit_measurement(series);
              py::dict d;
              d["phi2"] = f.params.phi2;
              d["psi00"] = f.params.psi00;
              d["ar_coefs"] = f.params.ar_coefs;
              d["resid_vars"] = f.params.resid_vars;
              d["implied_sigma"] = f.implied_sigma;
              d["chi_square"] = f.chi_square.statistic;
              d["df"] = f.chi_square.df;
              d["cfi"] = f.indices.cfi;
              d["rmsea"] = f.indices.rmsea;
              d["srmr"] = f.indices.srmr;
              d["converged"] = f.converged;
              d["improper"] = f.improper;
              return d;
          },
          py::arg("series"), "Fit the trait + AR(1) measurement model to one N x (K+1) series");

    m.def("within_scores",
          [](const PanelDataset& data, const std::string& centering, std::optional<MatrixXd> true_traits) {
              const ScoreSet s = make_scores(data, centering, true_traits);
              py::dict d;
              d["within"] = series_dict(s.variables, s.within_scores);
              d["traits"] = s.trait_scores;
              d["warnings"] = s.warnings;
              return d;
          },
          py::arg("panel"), py::arg("centering") = "proposed", py::arg("true_traits") = py::none());

    m.def("weight_matrix", &weight_matrix, py::arg("psi"), py::arg("sigma"));
    m.def("spd_power", [](const MatrixXd& c, double p) { return spd_power(c, p); }, py::arg("matrix"), py::arg("power"));

    m.def("estimate",
          [](const PanelDataset& data, const std::string& method, const std::string& centering, int first_treatment,
             bool interactions, std::optional<MatrixXd> true_traits) {
              const ScoreSet s = make_scores(data, centering, true_traits);
              if (parse_method(method) == Method::msm) {
                  MsmOptions options;
                  options.window.first_treatment = first_treatment;
                  return estimates_dict(estimate_msm(s, options));
              }
              return estimates_dict(g_estimate(s, {{first_treatment}, interactions}).tau);
          },
          py::arg("panel"), py::arg("method") = "snmm", py::arg("centering") = "proposed",
          py::arg("first_treatment") = 0, py::arg("interactions") = false, py::arg("true_traits") = py::none(),
          "Step 1 (when needed), centering and MSM or SNMM estimation in one call");

    m.def("monte_carlo",
          [](int n_persons, int k_times, double phi2, int replications, std::uint64_t seed, int workers,
             const std::string& scenario, const std::vector<std::string>& methods,
             const std::vector<std::string>& centerings) {
              CellSpec spec;
              spec.sim = make_config(n_persons, k_times, phi2, scenario, seed);
              spec.replications = replications;
              spec.methods.clear();
              for (const auto& x : methods) spec.methods.push_back(parse_method(x));
              spec.centerings.clear();
              for (const auto& x : centerings) spec.centerings.push_back(parse_centering(x));
              CellResult r;
              {
                  py::gil_scoped_release release;
                  r = run_cell(spec, workers);
              }
              const Report report = summarize({r});
              py::dict d;
              d["csv"] = report.csv;
              d["markdown"] = report.markdown;
              d["failed"] = r.failed;
              d["discarded_improper"] = r.discarded_improper;
              return d;
          },
          py::arg("n_persons") = 1000, py::arg("k_times") = 4, py::arg("phi2") = 10.0, py::arg("replications") = 20,
          py::arg("seed") = 1, py::arg("workers") = 1, py::arg("scenario") = "clean",
          py::arg("methods") = std::vector<std::string>{"msm", "snmm"},
          py::arg("centerings") = std::vector<std::string>{"true_scores", "proposed", "observed_mean", "none"});
}
