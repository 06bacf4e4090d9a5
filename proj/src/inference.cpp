#include "iis/inference.hpp"

#include "iis/error.hpp"

#include <fstream>
#include <iomanip>

namespace iis {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void IISConfig::validate() const {
  if (ensemble_size < 2) throw ConfigError("ensemble size must be at least 2");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  stop.validate();
  gp.validate();
  if (gp.n_replace >= ensemble_size)
    throw ConfigError("n_replace must be smaller than the ensemble size");
}

IISResult run_iis(const ForwardModel& model, const ParameterSchema& schema,
                  const MeasurementSet& d, const IISConfig& config) {
  config.validate();
  schema.validate();
  d.validate();
  if (model.parameter_count() != schema.size() || model.output_count() != d.size())
    throw ShapeError("run_iis: model, schema and measurements disagree in size");

  IISResult result;
  Eigen::MatrixXd next = draw_prior(schema, config.ensemble_size,
                                    derive_seed(config.seed, 0));
  for (int it = 1; it <= config.max_iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    Ensemble ens = Ensemble::evaluate(model, std::move(next), &result.evaluations);
    rec.parameters = ens.parameters();

    if (config.gp.n_replace > 0) {
      rec.refinement = refine_ensemble(ens, schema, config.gp, d, model);
      result.evaluations += rec.refinement.evaluations;
    }

    const Eigen::MatrixXd perturbed = perturb_measurements(
        d, config.ensemble_size, derive_seed(config.seed, static_cast<std::uint64_t>(it)));
    rec.log_lik_f = log_likelihoods(ens.outputs(), d);
    rec.log_lik_end = log_likelihoods(perturbed, d);
    rec.verdict = stopping_check(rec.log_lik_f, rec.log_lik_end, config.stop);
    rec.evaluations = result.evaluations;
    result.iterations = it;

    const bool last = rec.verdict.stop || it == config.max_iterations;
    if (last) {
      result.converged = rec.verdict.stop;
      result.parameters = ens.parameters();
      result.outputs = ens.outputs();
      result.records.push_back(std::move(rec));
      break;
    }
    UpdateResult up = es_update(schema, ens.parameters(), ens.outputs(),
                                perturbed, d.variance());
    rec.clipped = std::move(up.clipped);
    next = std::move(up.parameters);
    result.records.push_back(std::move(rec));
  }
  return result;
}

void write_likelihood_csv(const std::string& path,
                          const std::vector<IterationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "iteration,member,set,log_lik\n" << std::setprecision(10);
  for (const auto& r : records) {
    for (Eigen::Index j = 0; j < r.log_lik_f.size(); ++j)
      out << r.iteration << ',' << j << ",F," << r.log_lik_f[j] << '\n';
    for (Eigen::Index j = 0; j < r.log_lik_end.size(); ++j)
      out << r.iteration << ',' << j << ",En," << r.log_lik_end[j] << '\n';
  }
}

void write_trace_csv(const std::string& path, const ParameterSchema& schema,
                     const std::vector<IterationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "iteration,member";
  for (const auto& s : schema.slots) out << ',' << s.name;
  out << '\n' << std::setprecision(10);
  for (const auto& r : records) {
    for (Eigen::Index j = 0; j < r.parameters.cols(); ++j) {
      out << r.iteration << ',' << j;
      for (Eigen::Index i = 0; i < r.parameters.rows(); ++i)
        out << ',' << r.parameters(i, j);
      out << '\n';
    }
  }
}

}  // namespace iis
