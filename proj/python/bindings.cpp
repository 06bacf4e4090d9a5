// Python bindings: configs travel as JSON text, arrays as NumPy float64.

#include "iis/ensemble.hpp"
#include "iis/error.hpp"
#include "iis/harness.hpp"
#include "iis/inference.hpp"
#include "iis/likelihood.hpp"
#include "iis/random_field.hpp"
#include "iis/surrogate.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace iis;

namespace {

py::dict summary_dict(const RunSummary& s) {
  py::dict out;
  out["algorithm"] = to_string(s.algorithm);
  out["converged"] = s.converged;
  out["iterations"] = s.iterations;
  out["evaluations"] = s.evaluations;
  out["wall_seconds"] = s.wall_seconds;
  py::dict params;
  for (const auto& p : s.parameters) {
    py::dict e;
    e["truth"] = p.truth;
    e["mean"] = p.mean;
    e["sd"] = p.sd;
    params[py::str(p.name)] = e;
  }
  out["parameters"] = params;
  if (s.field_rmse) out["field_rmse"] = *s.field_rmse;
  if (s.prior_field_rmse) out["prior_field_rmse"] = *s.prior_field_rmse;
  if (s.rhat.size() > 0) out["rhat"] = s.rhat;
  return out;
}

ParameterSchema box_schema(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (lower.size() != upper.size()) throw ShapeError("lower and upper differ in length");
  ParameterSchema s;
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    s.slots.push_back({"p" + std::to_string(i), Prior::uniform, lower[i], upper[i]});
  return s;
}

}  // namespace

PYBIND11_MODULE(_iis, m) {
  m.doc() = "Inverse iterative simulation: ensemble smoother with inverse-GP refinement";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("preset_json", [](const std::string& name) { return config_to_json(preset(name)); },
        py::arg("name"), "Preset configuration (case1 or case2) as JSON text.");

  m.def(
      "simulate",
      [](const std::string& config_json, const Eigen::VectorXd& params) {
        const ContaminantModel model(config_from_json(config_json));
        return model.evaluate(params);
      },
      py::arg("config_json"), py::arg("params"),
      "Noise-free observations: heads per well, then concentrations well-major.");

  m.def(
      "generate_case",
      [](const std::string& config_json) {
        const RunConfig cfg = config_from_json(config_json);
        const ContaminantModel model(cfg);
        const TruthRecord t = generate_case(cfg, model);
        py::dict out;
        out["parameters"] = t.parameters;
        out["noise_free"] = t.noise_free.values;
        out["noise"] = t.noise;
        out["noisy"] = Eigen::VectorXd(t.noisy());
        out["sigma"] = t.sigma;
        return out;
      },
      py::arg("config_json"));

  m.def(
      "run",
      [](const std::string& config_json, const std::string& algorithm,
         const std::string& out_dir) {
        const RunConfig cfg = config_from_json(config_json);
        const Algorithm alg = parse_algorithm(algorithm);
        RunSummary s;
        {
          py::gil_scoped_release release;
          s = run_experiment(cfg, alg, out_dir);
        }
        return summary_dict(s);
      },
      py::arg("config_json"), py::arg("algorithm"), py::arg("out_dir"),
      "Runs iis or mcmc and writes a result bundle; returns the summary.");

  m.def("report", &report, py::arg("bundle_dirs"));

  m.def(
      "es_update",
      [](const Eigen::MatrixXd& params, const Eigen::MatrixXd& outputs,
         const Eigen::MatrixXd& perturbed, const Eigen::VectorXd& r_diag) {
        return es_update(params, outputs, perturbed, r_diag);
      },
      py::arg("params"), py::arg("outputs"), py::arg("perturbed"), py::arg("r_diag"),
      "M + K (En_d - F) with K from ensemble anomalies; columns are members.");

  m.def(
      "kalman_gain",
      [](const Eigen::MatrixXd& params, const Eigen::MatrixXd& outputs,
         const Eigen::VectorXd& r_diag) { return kalman_gain_diag(params, outputs, r_diag); },
      py::arg("params"), py::arg("outputs"), py::arg("r_diag"));

  m.def(
      "log_likelihoods",
      [](const Eigen::MatrixXd& outputs, const Eigen::VectorXd& d, const Eigen::VectorXd& sigma) {
        return log_likelihoods(outputs, MeasurementSet{d, sigma, {}});
      },
      py::arg("outputs"), py::arg("d"), py::arg("sigma"));

  m.def(
      "stopping_check",
      [](const Eigen::VectorXd& log_lik_f, const Eigen::VectorXd& log_lik_end) {
        const StopVerdict v = stopping_check(log_lik_f, log_lik_end, StopRule{});
        py::dict out;
        out["stop"] = v.stop;
        out["inside"] = v.inside;
        out["inliers"] = v.inliers;
        out["outliers"] = v.outliers;
        out["lower"] = v.lower;
        out["upper"] = v.upper;
        return out;
      },
      py::arg("log_lik_f"), py::arg("log_lik_end"));

  m.def(
      "run_iis_linear",
      [](const Eigen::MatrixXd& a, const Eigen::VectorXd& d, const Eigen::VectorXd& sigma,
         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, int ensemble_size,
         int n_replace, int max_iterations, std::uint64_t seed) {
        const LinearModel model(a);
        const ParameterSchema schema = box_schema(lower, upper);
        IISConfig cfg;
        cfg.ensemble_size = ensemble_size;
        cfg.gp.n_replace = n_replace;
        cfg.max_iterations = max_iterations;
        cfg.seed = seed;
        IISResult r;
        {
          py::gil_scoped_release release;
          r = run_iis(model, schema, MeasurementSet{d, sigma, {}}, cfg);
        }
        py::dict out;
        out["parameters"] = r.parameters;
        out["outputs"] = r.outputs;
        out["converged"] = r.converged;
        out["iterations"] = r.iterations;
        out["evaluations"] = r.evaluations;
        return out;
      },
      py::arg("a"), py::arg("d"), py::arg("sigma"), py::arg("lower"), py::arg("upper"),
      py::arg("ensemble_size") = 400, py::arg("n_replace") = 50,
      py::arg("max_iterations") = 30, py::arg("seed") = 1,
      "iIS on f(m) = A m with a uniform box prior.");

  m.def(
      "kl_basis",
      [](int nx, int ny, double lx, double ly, double variance, double length_x,
         double length_y, int n_terms) {
        FlowGrid g;
        g.nx = nx;
        g.ny = ny;
        g.lx = lx;
        g.ly = ly;
        CovarianceSpec cov;
        cov.variance = variance;
        cov.length_x = length_x;
        cov.length_y = length_y;
        const KLBasis b = build_kl_basis(g, cov, n_terms);
        py::dict out;
        out["eigenvalues"] = b.eigenvalues;
        out["modes"] = b.modes;
        out["variance_fraction"] = variance_fraction(b);
        return out;
      },
      py::arg("nx") = 81, py::arg("ny") = 41, py::arg("lx") = 20.0, py::arg("ly") = 10.0,
      py::arg("variance") = 1.0, py::arg("length_x") = 20.0, py::arg("length_y") = 10.0,
      py::arg("n_terms") = 100,
      "Truncated KL basis; modes are cells x n_terms with cells indexed y-fastest.");
}
