#pragma once

// Inverse Gaussian-process surrogate: regresses parameters on forward
// outputs so that the real measurements can be mapped straight to a parameter
// estimate, which then replaces the worst ensemble member.

#include "iis/ensemble.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace iis {

struct GPConfig {
  /// Nugget added to the unit-variance correlation matrix.
  double nugget = 1e-6;
  /// Candidate length scales, log-spaced over
  /// [length_min, length_max] x (median pairwise input distance).
  int length_candidates = 16;
  double length_min = 0.1;
  double length_max = 10.0;
  /// Share of input variance kept when inputs are projected onto principal
  /// components (only when n_d > N / 2).
  double pca_variance = 0.999;

  int n_replace = 50;
  /// Refit the GP after this many replacements.
  int refit_every = 1;
  /// Reject candidates that do not beat the current worst member.
  bool guard_replacement = true;

  void validate() const;
  bool operator==(const GPConfig&) const = default;
};

/// One squared-exponential GP per parameter slot on standardized (and
/// possibly PCA-projected) inputs, with per-slot isotropic length scale chosen
/// by profiled marginal likelihood.
class GPModel {
 public:
  /// inputs: n_d x N, targets: n_m x N. `noise_floor` (length n_d, optional)
  /// lower-bounds the per-dimension standardization scale.
  static GPModel fit(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                     const Eigen::Ref<const Eigen::MatrixXd>& targets,
                     const GPConfig& config,
                     const Eigen::VectorXd& noise_floor = {});

  /// Posterior mean of every slot at a raw input vector.
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd>& input) const;

  int input_dim() const { return static_cast<int>(input_mean_.size()); }
  int feature_dim() const { return static_cast<int>(train_.rows()); }
  int slot_count() const { return static_cast<int>(target_mean_.size()); }
  const Eigen::VectorXd& length_scales() const { return length_; }
  const Eigen::VectorXd& signal_variances() const { return signal_; }
  const Eigen::VectorXd& log_marginal_likelihoods() const { return log_ml_; }
  bool projected() const { return projection_.size() > 0; }

 private:
  Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& input) const;

  Eigen::VectorXd input_mean_, input_scale_;
  Eigen::MatrixXd projection_;  // empty when inputs are not projected
  Eigen::MatrixXd train_;       // features x N
  Eigen::VectorXd target_mean_, target_scale_;
  std::vector<bool> constant_;
  Eigen::VectorXd length_, signal_, log_ml_;
  Eigen::MatrixXd alpha_;  // N x slots, (R + nugget I)^-1 y per slot
};

/// Fits the inverse map F -> M of an ensemble. When `d` is given its sigma
/// floors the input standardization.
GPModel fit_inverse_gp(const Ensemble& ensemble, const GPConfig& config,
                       const MeasurementSet* d = nullptr);

/// GP prediction at the measurements, clipped to the prior bounds.
Eigen::VectorXd predict_parameters(const GPModel& gp, const MeasurementSet& d,
                                   const ParameterSchema& schema);

struct RefinementStep {
  int step = 0;
  int member = -1;  // replaced member, -1 when rejected or failed
  double old_log_lik = 0.0;
  double new_log_lik = 0.0;
  bool accepted = false;
  bool failed = false;
};

struct RefinementLog {
  std::vector<RefinementStep> steps;
  int replaced = 0;
  int rejected = 0;
  int failed = 0;
  std::int64_t evaluations = 0;
};

/// Replaces up to config.n_replace lowest-likelihood members, one at a time,
/// by GP estimates evaluated through the forward model.
RefinementLog refine_ensemble(Ensemble& ensemble, const ParameterSchema& schema,
                              const GPConfig& config, const MeasurementSet& d,
                              const ForwardModel& model);

void write_refinement_csv(const std::string& path, int iteration,
                          const RefinementLog& log, bool append);

}  // namespace iis
