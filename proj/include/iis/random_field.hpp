#pragma once

// Karhunen-Loeve representation of a log-conductivity field with separable
// exponential covariance
//
//   C(x1, x2) = var * exp(-|x1 - x2| / len_x - |y1 - y2| / len_y)
//
// discretized on the cell centers of a FlowGrid with cell-area quadrature.

#include "iis/grid.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>

namespace iis {

struct CovarianceSpec {
  double variance = 1.0;
  double length_x = 20.0;
  double length_y = 10.0;
  double mean = 2.0;

  void validate() const;
  double operator()(double x1, double y1, double x2, double y2) const;
  bool operator==(const CovarianceSpec&) const = default;
};

enum class KLMethod {
  /// Eigenpairs of the full cells x cells covariance matrix.
  dense,
  /// Products of the 1-D eigenpairs of the x and y factors. The grid
  /// covariance matrix is exactly their Kronecker product, so this yields the
  /// same eigenpairs as `dense` at a fraction of the cost.
  kronecker,
};

struct KLBasis {
  FlowGrid grid;
  CovarianceSpec cov;
  /// Descending, strictly positive.
  Eigen::VectorXd eigenvalues;
  /// cells x n_kl; column i is f_i sampled at cell centers, normalized so
  /// that sum_p area * f_i(p) * f_j(p) = delta_ij.
  Eigen::MatrixXd modes;
  /// Integral of the variance over the domain (sum of all eigenvalues).
  double trace = 0.0;

  int size() const { return static_cast<int>(eigenvalues.size()); }
};

KLBasis build_kl_basis(const FlowGrid& grid, const CovarianceSpec& cov,
                       int n_kl, KLMethod method = KLMethod::kronecker);

/// Y = mean + sum_i xi_i sqrt(lambda_i) f_i.
ConductivityField synthesize_field(const KLBasis& basis,
                                   const Eigen::Ref<const Eigen::VectorXd>& xi);

/// Pointwise variance sum_i lambda_i f_i(x)^2 carried by the truncated basis.
Eigen::VectorXd captured_variance(const KLBasis& basis);

double variance_fraction(const KLBasis& basis);

/// Key identifying a basis by its grid, covariance and truncation.
std::string kl_cache_key(const FlowGrid& grid, const CovarianceSpec& cov,
                         int n_kl);

void save_kl_basis(const KLBasis& basis, const std::string& path);
/// Returns nothing when the file is missing or was built for other inputs.
std::optional<KLBasis> load_kl_basis(const std::string& path,
                                     const FlowGrid& grid,
                                     const CovarianceSpec& cov, int n_kl);

/// Loads <dir>/kl_<key>.bin when present, otherwise builds and stores it.
KLBasis cached_kl_basis(const std::string& dir, const FlowGrid& grid,
                        const CovarianceSpec& cov, int n_kl);

}  // namespace iis
