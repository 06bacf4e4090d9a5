#include "iis/random_field.hpp"

#include "iis/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

namespace iis {

void CovarianceSpec::validate() const {
  if (!(variance > 0.0)) throw ConfigError("covariance variance must be positive");
  if (!(length_x > 0.0) || !(length_y > 0.0))
    throw ConfigError("correlation lengths must be positive");
}

double CovarianceSpec::operator()(double x1, double y1, double x2,
                                  double y2) const {
  return variance *
         std::exp(-std::abs(x1 - x2) / length_x - std::abs(y1 - y2) / length_y);
}

namespace {

Eigen::MatrixXd correlation_1d(int count, double spacing, double length) {
  Eigen::MatrixXd c(count, count);
  for (int a = 0; a < count; ++a)
    for (int b = 0; b < count; ++b)
      c(a, b) = std::exp(-std::abs(a - b) * spacing / length);
  return c;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> symmetric_eigen(
    const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw NumericalError("covariance eigendecomposition failed");
  return es;
}

void check_truncation(const FlowGrid& grid, int n_kl) {
  if (n_kl < 1 || n_kl > grid.cells()) {
    std::ostringstream msg;
    msg << "n_kl = " << n_kl << " must lie in [1, " << grid.cells() << "]";
    throw ConfigError(msg.str());
  }
}

}  // namespace

KLBasis build_kl_basis(const FlowGrid& grid, const CovarianceSpec& cov,
                       int n_kl, KLMethod method) {
  grid.validate();
  cov.validate();
  check_truncation(grid, n_kl);
  const int n = grid.cells();
  const double area = grid.dx() * grid.dy();

  // Eigenpairs (mu, v) of the covariance matrix map to the integral operator
  // as lambda = area * mu and f = v / sqrt(area).
  Eigen::VectorXd mu;
  Eigen::MatrixXd vectors;
  if (method == KLMethod::dense) {
    Eigen::MatrixXd c(n, n);
    for (int p = 0; p < n; ++p) {
      const double xp = grid.x_center(p / grid.ny), yp = grid.y_center(p % grid.ny);
      for (int q = 0; q <= p; ++q) {
        c(p, q) = c(q, p) =
            cov(xp, yp, grid.x_center(q / grid.ny), grid.y_center(q % grid.ny));
      }
    }
    auto es = symmetric_eigen(c);
    mu = es.eigenvalues().reverse();
    vectors = es.eigenvectors().rowwise().reverse().leftCols(n_kl);
  } else {
    auto ex = symmetric_eigen(correlation_1d(grid.nx, grid.dx(), cov.length_x));
    auto ey = symmetric_eigen(correlation_1d(grid.ny, grid.dy(), cov.length_y));
    std::vector<double> products(n);
    for (int a = 0; a < grid.nx; ++a)
      for (int b = 0; b < grid.ny; ++b)
        products[a * grid.ny + b] =
            cov.variance * ex.eigenvalues()[a] * ey.eigenvalues()[b];
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int l, int r) { return products[l] > products[r]; });
    mu.resize(n);
    for (int k = 0; k < n; ++k) mu[k] = products[order[k]];
    vectors.resize(n, n_kl);
    for (int k = 0; k < n_kl; ++k) {
      const int a = order[k] / grid.ny, b = order[k] % grid.ny;
      for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j)
          vectors(grid.index(i, j), k) =
              ex.eigenvectors()(i, a) * ey.eigenvectors()(j, b);
    }
  }

  // Round-off can leave tiny negative eigenvalues; clip before truncation.
  mu = mu.cwiseMax(0.0);
  if (!(mu[n_kl - 1] > 0.0))
    throw NumericalError(
        "covariance is numerically singular within the requested truncation");

  KLBasis basis;
  basis.grid = grid;
  basis.cov = cov;
  basis.eigenvalues = area * mu.head(n_kl);
  basis.modes = vectors / std::sqrt(area);
  // Exact trace of the discretized operator: every diagonal entry is the
  // variance.
  basis.trace = cov.variance * area * n;
  // Fix the sign convention: the largest-magnitude entry of each mode is
  // positive.
  for (int k = 0; k < n_kl; ++k) {
    Eigen::Index arg;
    basis.modes.col(k).cwiseAbs().maxCoeff(&arg);
    if (basis.modes(arg, k) < 0.0) basis.modes.col(k) *= -1.0;
  }
  return basis;
}

ConductivityField synthesize_field(const KLBasis& basis,
                                   const Eigen::Ref<const Eigen::VectorXd>& xi) {
  if (xi.size() != basis.size()) {
    std::ostringstream msg;
    msg << "expected " << basis.size() << " KL coefficients, got " << xi.size();
    throw ShapeError(msg.str());
  }
  ConductivityField field;
  field.origin = FieldOrigin::kl_synthesized;
  field.log_k = Eigen::VectorXd::Constant(basis.modes.rows(), basis.cov.mean);
  field.log_k.noalias() +=
      basis.modes * (basis.eigenvalues.cwiseSqrt().cwiseProduct(xi));
  return field;
}

Eigen::VectorXd captured_variance(const KLBasis& basis) {
  return basis.modes.cwiseAbs2() * basis.eigenvalues;
}

double variance_fraction(const KLBasis& basis) {
  return basis.eigenvalues.sum() / basis.trace;
}

std::string kl_cache_key(const FlowGrid& grid, const CovarianceSpec& cov,
                         int n_kl) {
  std::ostringstream text;
  text.precision(17);
  text << grid.nx << ' ' << grid.ny << ' ' << grid.lx << ' ' << grid.ly << ' '
       << cov.variance << ' ' << cov.length_x << ' ' << cov.length_y << ' '
       << cov.mean << ' ' << n_kl;
  // FNV-1a; std::hash is not stable across library versions.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream key;
  key << std::hex << h;
  return key.str();
}

namespace {

constexpr char kMagic[8] = {'I', 'I', 'S', 'K', 'L', 'B', '0', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void save_kl_basis(const KLBasis& basis, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  const std::string key = kl_cache_key(basis.grid, basis.cov, basis.size());
  const std::uint64_t key_len = key.size();
  put(out, key_len);
  out.write(key.data(), static_cast<std::streamsize>(key.size()));
  const std::int64_t rows = basis.modes.rows(), cols = basis.modes.cols();
  put(out, rows);
  put(out, cols);
  put(out, basis.trace);
  out.write(reinterpret_cast<const char*>(basis.eigenvalues.data()),
            static_cast<std::streamsize>(sizeof(double) * cols));
  out.write(reinterpret_cast<const char*>(basis.modes.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
}

std::optional<KLBasis> load_kl_basis(const std::string& path,
                                     const FlowGrid& grid,
                                     const CovarianceSpec& cov, int n_kl) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) ||
      !std::equal(magic, magic + sizeof magic, kMagic))
    return std::nullopt;
  std::uint64_t key_len = 0;
  if (!get(in, key_len) || key_len > 64) return std::nullopt;
  std::string key(key_len, '\0');
  in.read(key.data(), static_cast<std::streamsize>(key_len));
  if (key != kl_cache_key(grid, cov, n_kl)) return std::nullopt;
  std::int64_t rows = 0, cols = 0;
  KLBasis basis;
  if (!get(in, rows) || !get(in, cols) || !get(in, basis.trace))
    return std::nullopt;
  if (rows != grid.cells() || cols != n_kl) return std::nullopt;
  basis.grid = grid;
  basis.cov = cov;
  basis.eigenvalues.resize(cols);
  basis.modes.resize(rows, cols);
  in.read(reinterpret_cast<char*>(basis.eigenvalues.data()),
          static_cast<std::streamsize>(sizeof(double) * cols));
  in.read(reinterpret_cast<char*>(basis.modes.data()),
          static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!in) return std::nullopt;
  return basis;
}

KLBasis cached_kl_basis(const std::string& dir, const FlowGrid& grid,
                        const CovarianceSpec& cov, int n_kl) {
  namespace fs = std::filesystem;
  const fs::path path = fs::path(dir) / ("kl_" + kl_cache_key(grid, cov, n_kl) + ".bin");
  if (auto cached = load_kl_basis(path.string(), grid, cov, n_kl)) return *cached;
  KLBasis basis = build_kl_basis(grid, cov, n_kl);
  fs::create_directories(dir);
  save_kl_basis(basis, path.string());
  return basis;
}

}  // namespace iis
