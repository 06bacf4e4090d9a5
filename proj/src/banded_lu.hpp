#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <vector>

namespace iis::detail {

// LU factorization without pivoting of a banded matrix. Intended for the
// column diagonally dominant transport systems, where elimination without
// pivoting is stable; factor() reports failure on a vanishing pivot so the
// caller can fall back to a pivoting solver.
class BandedLU {
 public:
  bool factor(const Eigen::SparseMatrix<double>& a) {
    n_ = static_cast<int>(a.rows());
    lower_ = upper_ = 0;
    for (int col = 0; col < a.outerSize(); ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it) {
        lower_ = std::max(lower_, static_cast<int>(it.row()) - col);
        upper_ = std::max(upper_, col - static_cast<int>(it.row()));
      }
    }
    width_ = lower_ + upper_ + 1;
    band_.assign(static_cast<std::size_t>(n_) * width_, 0.0);
    for (int col = 0; col < a.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it)
        at(static_cast<int>(it.row()), col) = it.value();

    for (int k = 0; k < n_; ++k) {
      const double pivot = at(k, k);
      if (!(std::abs(pivot) > 1e-300) || !std::isfinite(pivot)) return false;
      const int row_end = std::min(k + lower_, n_ - 1);
      const int col_end = std::min(k + upper_, n_ - 1);
      const double* urow = &at(k, k);
      for (int i = k + 1; i <= row_end; ++i) {
        double& lik = at(i, k);
        if (lik == 0.0) continue;
        lik /= pivot;
        const double l = lik;
        double* row = &at(i, k);
        for (int j = 1; j <= col_end - k; ++j) row[j] -= l * urow[j];
      }
    }
    // Column-major copy so the triangular solves run as contiguous axpys.
    columns_.assign(band_.size(), 0.0);
    for (int j = 0; j < n_; ++j) {
      const int i0 = std::max(0, j - upper_), i1 = std::min(n_ - 1, j + lower_);
      for (int i = i0; i <= i1; ++i) col(i, j) = at(i, j);
    }
    return true;
  }

  void solve_in_place(Eigen::VectorXd& b) const {
    double* x = b.data();
    for (int j = 0; j < n_ - 1; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      const int i1 = std::min(n_ - 1, j + lower_);
      const double* l = &col(j + 1, j);
      double* xs = x + j + 1;
      for (int k = 0; k < i1 - j; ++k) xs[k] -= l[k] * xj;
    }
    for (int j = n_ - 1; j >= 0; --j) {
      x[j] /= col(j, j);
      const double xj = x[j];
      if (xj == 0.0) continue;
      const int i0 = std::max(0, j - upper_);
      const double* u = &col(i0, j);
      double* xs = x + i0;
      for (int k = 0; k < j - i0; ++k) xs[k] -= u[k] * xj;
    }
  }

 private:
  // Row-major band storage: entry (i, j) lives at i * width + (j - i + lower).
  double& at(int i, int j) {
    return band_[static_cast<std::size_t>(i) * width_ + (j - i + lower_)];
  }
  const double& at(int i, int j) const {
    return band_[static_cast<std::size_t>(i) * width_ + (j - i + lower_)];
  }

  // Column-major band storage: entry (i, j) lives at j * width + (i - j + upper).
  const double& col(int i, int j) const {
    return columns_[static_cast<std::size_t>(j) * width_ + (i - j + upper_)];
  }
  double& col(int i, int j) {
    return columns_[static_cast<std::size_t>(j) * width_ + (i - j + upper_)];
  }

  int n_ = 0, lower_ = 0, upper_ = 0, width_ = 0;
  std::vector<double> band_;
  std::vector<double> columns_;
};

}  // namespace iis::detail
