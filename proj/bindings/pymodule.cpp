#include "multirfm/align.hpp"
#include "multirfm/metrics.hpp"
#include "multirfm/selection.hpp"
#include "multirfm/simulate.hpp"
#include "multirfm/types.hpp"
#include "multirfm/vem.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;

namespace {

using namespace multirfm;

MultiStudyDataset make_dataset(const std::vector<Matrix>& studies) {
  MultiStudyDataset data;
  data.studies = studies;
  data.validate();
  return data;
}

FitConfig make_config(int max_iter, double eps, std::optional<double> nu_fixed,
                      std::optional<std::vector<double>> nu_grid, double lambda_floor) {
  FitConfig config;
  config.max_iter = max_iter;
  config.eps = eps;
  config.nu_fixed = nu_fixed;
  if (nu_grid) config.nu_grid = *nu_grid;
  config.lambda_floor = lambda_floor;
  config.validate();
  return config;
}

py::dict fit_py(const std::vector<Matrix>& studies, int q, const std::vector<int>& q_s,
                int max_iter, double eps, std::optional<double> nu_fixed,
                std::optional<std::vector<double>> nu_grid, double lambda_floor,
                bool apply_align) {
  const MultiStudyDataset data = make_dataset(studies);
  FitResult result =
      multirfm::fit(data, FactorCounts{q, q_s},
                    make_config(max_iter, eps, nu_fixed, std::move(nu_grid), lambda_floor));
  if (apply_align) result = align(result);

  py::dict out;
  out["A"] = result.params.A;
  out["B"] = result.params.B;
  out["mu"] = result.params.mu;
  out["lambda"] = result.params.lambda;
  out["nu"] = result.params.nu;
  out["F"] = result.factor_scores_shared;
  out["H"] = result.factor_scores_specific;
  out["elbo_trace"] = result.elbo_trace;
  out["converged"] = result.converged;
  out["iterations"] = result.iterations;
  out["monotonicity_warnings"] = result.monotonicity_warnings;
  return out;
}

py::dict truth_dict(const GroundTruth& truth) {
  py::dict out;
  out["A"] = truth.params0.A;
  out["B"] = truth.params0.B;
  out["mu"] = truth.params0.mu;
  out["F"] = truth.F0;
  out["H"] = truth.H0;
  out["covariance_defined"] = truth.covariance_defined;
  return out;
}

py::dict simulate_py(const std::string& scenario, std::uint64_t seed, std::uint64_t replicate) {
  SimulationSpec spec = scenario_preset(scenario);
  spec.seed = seed;
  auto [data, truth] = simulate_dataset(spec, replicate);
  py::dict out;
  out["X"] = data.studies;
  out["truth"] = truth_dict(truth);
  return out;
}

py::dict simulate_custom_py(const std::vector<Index>& n, Index p, int q,
                            const std::vector<int>& q_s, double rho_a, double rho_b,
                            const std::string& law, double nu, double alpha, std::uint64_t seed,
                            std::uint64_t replicate) {
  SimulationSpec spec;
  spec.S = static_cast<int>(n.size());
  spec.n_s = n;
  spec.p = p;
  spec.q = q;
  spec.q_s = q_s;
  spec.rho_A = rho_a;
  spec.rho_B = rho_b;
  spec.error_law = parse_error_law(law, nu, alpha);
  spec.seed = seed;
  auto [data, truth] = simulate_dataset(spec, replicate);
  py::dict out;
  out["X"] = data.studies;
  out["truth"] = truth_dict(truth);
  return out;
}

py::dict select_factors_py(const std::vector<Matrix>& studies, int q_max,
                           const std::vector<int>& q_s_max, int max_iter, double eps,
                           std::optional<double> nu_fixed,
                           std::optional<std::vector<double>> nu_grid, double lambda_floor) {
  const MultiStudyDataset data = make_dataset(studies);
  std::vector<int> bounds = q_s_max;
  if (bounds.size() == 1 && data.num_studies() > 1)
    bounds.assign(static_cast<std::size_t>(data.num_studies()), bounds.front());
  const SelectionResult sel = select_factor_counts(
      data, q_max, bounds, make_config(max_iter, eps, nu_fixed, std::move(nu_grid), lambda_floor));
  py::dict out;
  out["q_hat"] = sel.q_hat;
  out["q_s_hat"] = sel.q_s_hat;
  out["q_max"] = sel.q_max;
  out["q_s_max"] = sel.q_s_max;
  out["shared_singular_values"] = sel.shared_singular_values;
  out["specific_singular_values"] = sel.specific_singular_values;
  return out;
}

}  // namespace

PYBIND11_MODULE(_multirfm, m) {
  m.doc() = "multi-study robust factor model core";

  m.def("fit", &fit_py, py::arg("studies"), py::arg("q"), py::arg("q_s"),
        py::arg("max_iter") = 500, py::arg("eps") = 1e-6, py::arg("nu_fixed") = py::none(),
        py::arg("nu_grid") = py::none(), py::arg("lambda_floor") = 1e-8,
        py::arg("align") = false,
        "Fit the robust multi-study factor model; returns a dict of estimates.");

  m.def("simulate", &simulate_py, py::arg("scenario"), py::arg("seed") = 0,
        py::arg("replicate") = 0, "Generate a named scenario replicate.");

  m.def("simulate_custom", &simulate_custom_py, py::arg("n"), py::arg("p"), py::arg("q"),
        py::arg("q_s"), py::arg("rho_a") = 5.0, py::arg("rho_b") = 5.0,
        py::arg("law") = "student_t", py::arg("nu") = 3.0, py::arg("alpha") = 2.0,
        py::arg("seed") = 0, py::arg("replicate") = 0,
        "Generate a replicate from an explicit design.");

  m.def("select_factors", &select_factors_py, py::arg("studies"), py::arg("q_max") = 10,
        py::arg("q_s_max") = std::vector<int>{6}, py::arg("max_iter") = 500,
        py::arg("eps") = 1e-6, py::arg("nu_fixed") = py::none(), py::arg("nu_grid") = py::none(),
        py::arg("lambda_floor") = 1e-8, "Step-wise singular-value-ratio factor-count selection.");

  m.def("trace_stat", &trace_stat, py::arg("estimate"), py::arg("truth"),
        "Normalized projection of the truth onto the estimate's column space.");

  m.def("mean_trace", &mean_trace, py::arg("estimates"), py::arg("truths"),
        "Mean per-study trace statistic.");

  m.def("scenario_names", &scenario_names, "Available simulation presets.");
}
