#include "iis/ensemble.hpp"

#include "iis/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace iis {

std::vector<std::string> ParameterSchema::names() const {
  std::vector<std::string> out;
  out.reserve(slots.size());
  for (const auto& s : slots) out.push_back(s.name);
  return out;
}

void ParameterSchema::validate() const {
  if (slots.empty()) throw ConfigError("parameter schema is empty");
  for (const auto& s : slots) {
    if (s.name.empty()) throw ConfigError("parameter slot without a name");
    if (s.bounded() && (!std::isfinite(s.lower) || !std::isfinite(s.upper) ||
                        s.lower > s.upper)) {
      std::ostringstream msg;
      msg << "invalid prior range [" << s.lower << ", " << s.upper
          << "] for slot " << s.name;
      throw ConfigError(msg.str());
    }
  }
}

bool ParameterSchema::in_support(
    const Eigen::Ref<const Eigen::VectorXd>& m) const {
  for (int i = 0; i < size(); ++i) {
    if (!std::isfinite(m[i])) return false;
    if (slots[i].bounded() && (m[i] < slots[i].lower || m[i] > slots[i].upper))
      return false;
  }
  return true;
}

double ParameterSchema::scale(int slot) const {
  const auto& s = slots[slot];
  return s.bounded() ? s.upper - s.lower : 1.0;
}

void MeasurementSet::validate() const {
  if (sigma.size() != values.size() ||
      (!info.empty() && info.size() != static_cast<std::size_t>(values.size())))
    throw ShapeError("measurement set: inconsistent lengths");
  for (Eigen::Index k = 0; k < sigma.size(); ++k)
    if (!(sigma[k] > 0.0))
      throw ConfigError("measurement noise sigma must be positive");
}

void NoiseModel::validate() const {
  if (!(sigma_head > 0.0) || !(sigma_concentration > 0.0))
    throw ConfigError("noise sigmas must be positive");
}

MeasurementSet NoiseModel::measurements(const Observations& obs) const {
  validate();
  MeasurementSet d{obs.values, Eigen::VectorXd(obs.values.size()), obs.info};
  for (std::size_t k = 0; k < obs.info.size(); ++k)
    d.sigma[static_cast<Eigen::Index>(k)] = sigma(obs.info[k].kind);
  return d;
}

LinearModel::LinearModel(Eigen::MatrixXd a, Eigen::VectorXd offset)
    : a_(std::move(a)), offset_(std::move(offset)) {
  if (offset_.size() == 0) offset_ = Eigen::VectorXd::Zero(a_.rows());
  if (offset_.size() != a_.rows())
    throw ShapeError("linear model offset has the wrong length");
}

Eigen::VectorXd LinearModel::evaluate(const Eigen::VectorXd& m) const {
  return a_ * m + offset_;
}

Ensemble Ensemble::evaluate(const ForwardModel& model,
                            Eigen::MatrixXd parameters,
                            std::int64_t* evaluations) {
  if (parameters.rows() != model.parameter_count())
    throw ShapeError("ensemble: parameter dimension does not match the model");
  const int n = static_cast<int>(parameters.cols());
  Eigen::MatrixXd outputs(model.output_count(), n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < n; ++j) {
    try {
      outputs.col(j) = model.evaluate(parameters.col(j));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (evaluations) *evaluations += n;
  if (failure) std::rethrow_exception(failure);
  return Ensemble(std::move(parameters), std::move(outputs));
}

void Ensemble::replace(int j, const Eigen::VectorXd& parameters,
                       const Eigen::VectorXd& output) {
  if (j < 0 || j >= size()) throw ShapeError("ensemble: member index out of range");
  if (parameters.size() != m_.rows() || output.size() != f_.rows())
    throw ShapeError("ensemble: replacement has the wrong dimensions");
  m_.col(j) = parameters;
  f_.col(j) = output;
}

Eigen::MatrixXd draw_prior(const ParameterSchema& schema, int n,
                           std::uint64_t seed) {
  schema.validate();
  if (n < 2) throw ConfigError("ensemble size must be at least 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  Eigen::MatrixXd m(schema.size(), n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < schema.size(); ++i) {
      const auto& s = schema.slots[i];
      m(i, j) = s.bounded() ? s.lower + (s.upper - s.lower) * unit(rng)
                            : normal(rng);
    }
  }
  return m;
}

Eigen::MatrixXd perturb_measurements(const MeasurementSet& d, int n,
                                     std::uint64_t seed) {
  d.validate();
  if (n < 2) throw ConfigError("ensemble size must be at least 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(d.size(), n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < d.size(); ++k)
      out(k, j) = d.values[k] + d.sigma[k] * normal(rng);
  return out;
}

namespace {

Eigen::MatrixXd anomalies(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  return x.colwise() - x.rowwise().mean();
}

}  // namespace

Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& m,
                            const Eigen::Ref<const Eigen::MatrixXd>& f,
                            const Eigen::Ref<const Eigen::MatrixXd>& r) {
  const Eigen::Index n = m.cols();
  if (n < 2) throw ShapeError("kalman gain needs at least two members");
  if (f.cols() != n) throw ShapeError("kalman gain: M and F member counts differ");
  if (r.rows() != f.rows() || r.cols() != f.rows())
    throw ShapeError("kalman gain: R does not match the output dimension");

  const Eigen::MatrixXd am = anomalies(m), af = anomalies(f);
  const double scale = 1.0 / static_cast<double>(n - 1);
  const Eigen::MatrixXd p_m = scale * am * af.transpose();
  Eigen::MatrixXd p_f = scale * af * af.transpose();
  Eigen::MatrixXd s = 0.5 * (p_f + p_f.transpose()) + 0.5 * (r + r.transpose());

  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError("kalman gain: P_F + R is not positive definite");
  // K = P_M S^-1  <=>  S K^T = P_M^T (S symmetric).
  return llt.solve(p_m.transpose()).transpose();
}

Eigen::MatrixXd kalman_gain_diag(const Eigen::Ref<const Eigen::MatrixXd>& m,
                                 const Eigen::Ref<const Eigen::MatrixXd>& f,
                                 const Eigen::VectorXd& r_diag) {
  return kalman_gain(m, f, Eigen::MatrixXd(r_diag.asDiagonal()));
}

Eigen::MatrixXd es_update(const Eigen::Ref<const Eigen::MatrixXd>& m,
                          const Eigen::Ref<const Eigen::MatrixXd>& f,
                          const Eigen::Ref<const Eigen::MatrixXd>& perturbed,
                          const Eigen::VectorXd& r_diag) {
  if (perturbed.rows() != f.rows() || perturbed.cols() != f.cols() ||
      m.cols() != f.cols())
    throw ShapeError("es_update: inconsistent ensemble shapes");
  const Eigen::MatrixXd gain = kalman_gain_diag(m, f, r_diag);
  return m + gain * (perturbed - f);
}

int clip_to_prior(const ParameterSchema& schema, Eigen::Ref<Eigen::VectorXd> m) {
  int clipped = 0;
  for (int i = 0; i < schema.size(); ++i) {
    const auto& s = schema.slots[i];
    if (!s.bounded()) continue;
    if (m[i] < s.lower) {
      m[i] = s.lower;
      ++clipped;
    } else if (m[i] > s.upper) {
      m[i] = s.upper;
      ++clipped;
    }
  }
  return clipped;
}

UpdateResult es_update(const ParameterSchema& schema,
                       const Eigen::Ref<const Eigen::MatrixXd>& m,
                       const Eigen::Ref<const Eigen::MatrixXd>& f,
                       const Eigen::Ref<const Eigen::MatrixXd>& perturbed,
                       const Eigen::VectorXd& r_diag) {
  if (m.rows() != schema.size())
    throw ShapeError("es_update: parameter rows do not match the schema");
  UpdateResult result{es_update(m, f, perturbed, r_diag),
                      std::vector<int>(schema.size(), 0)};
  for (int i = 0; i < schema.size(); ++i) {
    const auto& s = schema.slots[i];
    if (!s.bounded()) continue;
    for (Eigen::Index j = 0; j < result.parameters.cols(); ++j) {
      double& v = result.parameters(i, j);
      if (v < s.lower || v > s.upper) {
        v = std::clamp(v, s.lower, s.upper);
        ++result.clipped[i];
      }
    }
  }
  return result;
}

void write_ensemble_csv(const std::string& path, const ParameterSchema& schema,
                        const Eigen::MatrixXd& parameters) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "member";
  for (const auto& s : schema.slots) out << ',' << s.name;
  out << '\n' << std::setprecision(10);
  for (Eigen::Index j = 0; j < parameters.cols(); ++j) {
    out << j;
    for (Eigen::Index i = 0; i < parameters.rows(); ++i)
      out << ',' << parameters(i, j);
    out << '\n';
  }
}

}  // namespace iis
