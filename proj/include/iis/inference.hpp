#pragma once

// Inverse iterative simulation driver: per iteration the current parameter
// ensemble is evaluated, its worst members are replaced by inverse-GP
// estimates, the likelihood-consistency rule is checked, and (unless it
// stops) an ensemble-smoother update produces the next ensemble.

#include "iis/ensemble.hpp"
#include "iis/likelihood.hpp"
#include "iis/surrogate.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace iis {

/// Independent 64-bit seed for sub-stream `stream` of a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct IISConfig {
  int ensemble_size = 400;
  int max_iterations = 30;
  StopRule stop;
  GPConfig gp;
  std::uint64_t seed = 1;

  void validate() const;
  int evaluations_per_iteration() const { return ensemble_size + gp.n_replace; }
  bool operator==(const IISConfig& o) const {
    return ensemble_size == o.ensemble_size &&
           max_iterations == o.max_iterations &&
           stop.fraction == o.stop.fraction &&
           stop.outlier_iqr == o.stop.outlier_iqr && gp == o.gp &&
           seed == o.seed;
  }
};

struct IterationRecord {
  int iteration = 0;
  /// The N members as evaluated at the start of the iteration, before the
  /// GP replacements.
  Eigen::MatrixXd parameters;
  /// Likelihoods of the refined ensemble outputs and of the perturbed
  /// measurements.
  Eigen::VectorXd log_lik_f;
  Eigen::VectorXd log_lik_end;
  StopVerdict verdict;
  RefinementLog refinement;
  /// Per-slot clip counts of the update that ends this iteration (empty on
  /// the final iteration).
  std::vector<int> clipped;
  std::int64_t evaluations = 0;  // cumulative
};

struct IISResult {
  /// Final refined ensemble.
  Eigen::MatrixXd parameters;
  Eigen::MatrixXd outputs;
  std::vector<IterationRecord> records;
  bool converged = false;
  int iterations = 0;
  std::int64_t evaluations = 0;
};

IISResult run_iis(const ForwardModel& model, const ParameterSchema& schema,
                  const MeasurementSet& d, const IISConfig& config);

/// iteration,member,set,log_lik rows; set is F or En.
void write_likelihood_csv(const std::string& path,
                          const std::vector<IterationRecord>& records);

/// iteration,member,<slot names...> rows of the evaluated ensembles.
void write_trace_csv(const std::string& path, const ParameterSchema& schema,
                     const std::vector<IterationRecord>& records);

}  // namespace iis
