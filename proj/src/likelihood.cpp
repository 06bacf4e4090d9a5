#include "iis/likelihood.hpp"

#include "iis/error.hpp"

#include <algorithm>
#include <cmath>

namespace iis {

double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& f,
                      const MeasurementSet& d) {
  if (f.size() != d.size())
    throw ShapeError("log_likelihood: output and measurement lengths differ");
  constexpr double log_2pi = 1.8378770664093454836;
  double total = 0.0;
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    const double s = d.sigma[k];
    if (!(s > 0.0)) throw ConfigError("log_likelihood: sigma must be positive");
    const double r = (f[k] - d.values[k]) / s;
    total += -0.5 * (log_2pi + 2.0 * std::log(s)) - 0.5 * r * r;
  }
  return total;
}

Eigen::VectorXd log_likelihoods(const Eigen::Ref<const Eigen::MatrixXd>& f,
                                const MeasurementSet& d) {
  Eigen::VectorXd out(f.cols());
  for (Eigen::Index j = 0; j < f.cols(); ++j) out[j] = log_likelihood(f.col(j), d);
  return out;
}

void StopRule::validate() const {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("stop fraction must lie in (0, 1]");
  if (!(outlier_iqr >= 0.0)) throw ConfigError("outlier IQR factor must be >= 0");
}

double quantile(Eigen::VectorXd values, double q) {
  if (values.size() == 0) throw ShapeError("quantile of an empty sample");
  std::sort(values.data(), values.data() + values.size());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

StopVerdict stopping_check(const Eigen::Ref<const Eigen::VectorXd>& log_lik_f,
                           const Eigen::Ref<const Eigen::VectorXd>& log_lik_end,
                           const StopRule& rule) {
  rule.validate();
  if (log_lik_f.size() == 0 || log_lik_end.size() == 0)
    throw ShapeError("stopping_check: empty likelihood set");
  StopVerdict v;
  v.lower = log_lik_end.minCoeff();
  v.upper = log_lik_end.maxCoeff();
  const double q1 = quantile(log_lik_f, 0.25);
  const double q3 = quantile(log_lik_f, 0.75);
  const double cutoff = q1 - rule.outlier_iqr * (q3 - q1);
  for (Eigen::Index i = 0; i < log_lik_f.size(); ++i) {
    const double x = log_lik_f[i];
    if (x < cutoff) {
      ++v.outliers;
      continue;
    }
    ++v.inliers;
    if (x >= v.lower && x <= v.upper) ++v.inside;
  }
  v.stop = v.inliers > 0 && v.fraction_inside() >= rule.fraction;
  return v;
}

}  // namespace iis
