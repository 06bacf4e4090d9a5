#pragma once

#include "iis/ensemble.hpp"

#include <Eigen/Core>

namespace iis {

/// Gaussian log-likelihood of outputs f given measurements d with
/// independent per-datum sigma.
double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& f,
                      const MeasurementSet& d);

/// log_likelihood of every column.
Eigen::VectorXd log_likelihoods(const Eigen::Ref<const Eigen::MatrixXd>& f,
                                const MeasurementSet& d);

struct StopRule {
  /// Required share of inlier log Lik^F values inside the En_d range.
  double fraction = 0.90;
  /// Values below Q1 - outlier_iqr * IQR are treated as outliers.
  double outlier_iqr = 3.0;

  void validate() const;
};

struct StopVerdict {
  bool stop = false;
  int outliers = 0;
  int inside = 0;
  int inliers = 0;
  double lower = 0.0;
  double upper = 0.0;
  double fraction_inside() const {
    return inliers > 0 ? static_cast<double>(inside) / inliers : 0.0;
  }
};

/// Likelihood-consistency test: drops low outliers from log Lik^F, then stops
/// when enough of the rest lie within [min, max] of log Lik^{En_d}.
StopVerdict stopping_check(const Eigen::Ref<const Eigen::VectorXd>& log_lik_f,
                           const Eigen::Ref<const Eigen::VectorXd>& log_lik_end,
                           const StopRule& rule);

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(Eigen::VectorXd values, double q);

}  // namespace iis
