#pragma once

#include "iis/harness.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace iis::test {

inline Eigen::VectorXd case1_truth() {
  Eigen::VectorXd m(11);
  m << 3.156, 4.770, 6.239, 5.667, 4.728, 3.016, 3.151, 3.427, 1.352, 2.722, 2.312;
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("iis_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Spatially uniform velocity; the no-flow top and bottom faces stay zero.
inline VelocityField uniform_velocity(const FlowGrid& g, double vx, double vy) {
  VelocityField v;
  v.face_x = Eigen::MatrixXd::Constant(g.nx + 1, g.ny, vx);
  v.face_y = Eigen::MatrixXd::Constant(g.nx, g.ny + 1, vy);
  v.face_y.col(0).setZero();
  v.face_y.col(g.ny).setZero();
  v.vx = Eigen::VectorXd::Constant(g.cells(), vx);
  v.vy = Eigen::VectorXd::Constant(g.cells(), vy);
  return v;
}

/// Kolmogorov-Smirnov statistic of a sample against N(0, 1).
inline double ks_normal(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  return d;
}

}  // namespace iis::test
