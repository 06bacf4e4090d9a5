#include "iis/surrogate.hpp"

#include "iis/error.hpp"
#include "iis/likelihood.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>

namespace iis {

void GPConfig::validate() const {
  if (!(nugget > 0.0)) throw ConfigError("GP nugget must be positive");
  if (length_candidates < 1) throw ConfigError("GP needs at least one length scale");
  if (!(length_min > 0.0) || length_max < length_min)
    throw ConfigError("GP length-scale bounds are invalid");
  if (!(pca_variance > 0.0) || pca_variance > 1.0)
    throw ConfigError("pca_variance must lie in (0, 1]");
  if (n_replace < 0) throw ConfigError("n_replace must be non-negative");
  if (refit_every < 1) throw ConfigError("refit_every must be at least 1");
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd norms = x.colwise().squaredNorm().transpose();
  Eigen::MatrixXd d2 = -2.0 * x.transpose() * x;
  d2.colwise() += norms;
  d2.rowwise() += norms.transpose();
  return d2.cwiseMax(0.0);
}

double median_distance(const Eigen::MatrixXd& d2) {
  const Eigen::Index n = d2.rows();
  std::vector<double> upper;
  upper.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 1; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) upper.push_back(d2(i, j));
  if (upper.empty()) return 1.0;
  auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
  std::nth_element(upper.begin(), mid, upper.end());
  return std::sqrt(*mid);
}

Eigen::MatrixXd correlation(const Eigen::MatrixXd& d2, double length,
                            double nugget) {
  Eigen::MatrixXd r = (-0.5 / (length * length) * d2).array().exp().matrix();
  r.diagonal().array() += nugget;
  return r;
}

}  // namespace

GPModel GPModel::fit(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                     const Eigen::Ref<const Eigen::MatrixXd>& targets,
                     const GPConfig& config, const Eigen::VectorXd& noise_floor) {
  config.validate();
  const Eigen::Index n = inputs.cols();
  const Eigen::Index p = inputs.rows();
  if (targets.cols() != n) throw ShapeError("GP: inputs and targets differ in count");
  if (n < 2) throw ShapeError("GP: need at least two training points");
  if (noise_floor.size() != 0 && noise_floor.size() != p)
    throw ShapeError("GP: noise floor length does not match the inputs");

  GPModel gp;
  gp.input_mean_ = inputs.rowwise().mean();
  Eigen::MatrixXd z = inputs.colwise() - gp.input_mean_;
  gp.input_scale_.resize(p);
  double total_spread = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double sd = std::sqrt(z.row(k).squaredNorm() / static_cast<double>(n - 1));
    total_spread += sd;
    double scale = sd;
    if (noise_floor.size() != 0) scale = std::max(scale, noise_floor[k]);
    gp.input_scale_[k] = scale > 0.0 ? scale : 1.0;
  }
  if (!(total_spread > 0.0))
    throw NumericalError(
        "GP: ensemble outputs are identical; increase the ensemble spread");
  z.array().colwise() /= gp.input_scale_.array();

  if (2 * p > n) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(z * z.transpose());
    const Eigen::VectorXd ev = es.eigenvalues().reverse().cwiseMax(0.0);
    const double total = ev.sum();
    if (!(total > 0.0))
      throw NumericalError("GP: outputs have no variance after standardization");
    Eigen::Index keep = 0;
    double acc = 0.0;
    while (keep < p && acc < config.pca_variance * total) acc += ev[keep++];
    gp.projection_ =
        es.eigenvectors().rowwise().reverse().leftCols(keep).transpose();
    gp.train_ = gp.projection_ * z;
  } else {
    gp.train_ = std::move(z);
  }

  const Eigen::Index slots = targets.rows();
  gp.target_mean_ = targets.rowwise().mean();
  gp.target_scale_.resize(slots);
  gp.constant_.assign(static_cast<std::size_t>(slots), false);
  Eigen::MatrixXd y = targets.colwise() - gp.target_mean_;
  for (Eigen::Index s = 0; s < slots; ++s) {
    const double sd = std::sqrt(y.row(s).squaredNorm() / static_cast<double>(n - 1));
    const double tol = 1e-12 * std::max(1.0, std::abs(gp.target_mean_[s]));
    if (sd <= tol) {
      gp.constant_[s] = true;
      gp.target_mean_[s] = targets(s, 0);
      gp.target_scale_[s] = 1.0;
      y.row(s).setZero();
    } else {
      gp.target_scale_[s] = sd;
      y.row(s) /= sd;
    }
  }
  const Eigen::MatrixXd yt = y.transpose();  // N x slots

  const Eigen::MatrixXd d2 = squared_distances(gp.train_);
  const double base = median_distance(d2);
  const double reference = base > 0.0 ? base : 1.0;

  gp.length_ = Eigen::VectorXd::Constant(slots, reference);
  gp.signal_ = Eigen::VectorXd::Ones(slots);
  gp.log_ml_ = Eigen::VectorXd::Constant(slots, -std::numeric_limits<double>::infinity());
  std::vector<int> best(static_cast<std::size_t>(slots), -1);
  std::vector<double> lengths(static_cast<std::size_t>(config.length_candidates));
  for (int g = 0; g < config.length_candidates; ++g) {
    const double t = config.length_candidates == 1
                         ? 0.5
                         : static_cast<double>(g) / (config.length_candidates - 1);
    lengths[g] = reference * std::exp(std::log(config.length_min) +
                                      t * (std::log(config.length_max) -
                                           std::log(config.length_min)));
  }

  const double nd = static_cast<double>(n);
  for (int g = 0; g < config.length_candidates; ++g) {
    Eigen::LLT<Eigen::MatrixXd> llt(correlation(d2, lengths[g], config.nugget));
    if (llt.info() != Eigen::Success) continue;
    const double logdet =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::MatrixXd w = llt.matrixL().solve(yt);
    for (Eigen::Index s = 0; s < slots; ++s) {
      if (gp.constant_[s]) continue;
      // Signal variance profiled out: s2 = y' R^-1 y / N.
      const double s2 = std::max(w.col(s).squaredNorm() / nd, 1e-300);
      const double lml = -0.5 * nd * (std::log(s2) + 1.0 + kLog2Pi) - 0.5 * logdet;
      if (lml > gp.log_ml_[s]) {
        gp.log_ml_[s] = lml;
        gp.length_[s] = lengths[g];
        gp.signal_[s] = s2;
        best[s] = g;
      }
    }
  }

  gp.alpha_ = Eigen::MatrixXd::Zero(n, slots);
  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index s = 0; s < slots; ++s) {
    if (gp.constant_[s]) continue;
    if (best[s] < 0)
      throw NumericalError("GP: no length scale gave a positive-definite kernel");
    groups[best[s]].push_back(s);
  }
  for (const auto& [g, members] : groups) {
    Eigen::LLT<Eigen::MatrixXd> llt(correlation(d2, lengths[g], config.nugget));
    for (Eigen::Index s : members) gp.alpha_.col(s) = llt.solve(yt.col(s));
  }
  return gp;
}

Eigen::VectorXd GPModel::features(
    const Eigen::Ref<const Eigen::VectorXd>& input) const {
  if (input.size() != input_dim())
    throw ShapeError("GP: input dimension does not match the training data");
  Eigen::VectorXd z = (input - input_mean_).cwiseQuotient(input_scale_);
  if (projected()) return projection_ * z;
  return z;
}

Eigen::VectorXd GPModel::predict(
    const Eigen::Ref<const Eigen::VectorXd>& input) const {
  const Eigen::VectorXd z = features(input);
  const Eigen::VectorXd dist2 =
      (train_.colwise() - z).colwise().squaredNorm().transpose();
  Eigen::VectorXd out(slot_count());
  std::map<double, Eigen::VectorXd> kernels;
  for (int s = 0; s < slot_count(); ++s) {
    if (constant_[s]) {
      out[s] = target_mean_[s];
      continue;
    }
    auto it = kernels.find(length_[s]);
    if (it == kernels.end()) {
      const double l = length_[s];
      it = kernels
               .emplace(l, (-0.5 / (l * l) * dist2).array().exp().matrix())
               .first;
    }
    out[s] = target_mean_[s] + target_scale_[s] * it->second.dot(alpha_.col(s));
  }
  return out;
}

GPModel fit_inverse_gp(const Ensemble& ensemble, const GPConfig& config,
                       const MeasurementSet* d) {
  return GPModel::fit(ensemble.outputs(), ensemble.parameters(), config,
                      d ? d->sigma : Eigen::VectorXd());
}

Eigen::VectorXd predict_parameters(const GPModel& gp, const MeasurementSet& d,
                                   const ParameterSchema& schema) {
  if (gp.slot_count() != schema.size())
    throw ShapeError("GP slot count does not match the parameter schema");
  Eigen::VectorXd m = gp.predict(d.values);
  clip_to_prior(schema, m);
  return m;
}

RefinementLog refine_ensemble(Ensemble& ensemble, const ParameterSchema& schema,
                              const GPConfig& config, const MeasurementSet& d,
                              const ForwardModel& model) {
  config.validate();
  if (config.n_replace >= ensemble.size())
    throw ConfigError("n_replace must be smaller than the ensemble size");
  RefinementLog log;
  Eigen::VectorXd ll = log_likelihoods(ensemble.outputs(), d);
  GPModel gp;
  for (int r = 0; r < config.n_replace; ++r) {
    if (r % config.refit_every == 0) gp = fit_inverse_gp(ensemble, config, &d);
    const Eigen::VectorXd candidate = predict_parameters(gp, d, schema);

    RefinementStep step;
    step.step = r;
    Eigen::Index worst;
    step.old_log_lik = ll.minCoeff(&worst);
    ++log.evaluations;
    Eigen::VectorXd output;
    try {
      output = model.evaluate(candidate);
    } catch (const std::exception&) {
      step.failed = true;
      ++log.failed;
      log.steps.push_back(step);
      continue;
    }
    step.new_log_lik = log_likelihood(output, d);
    if (config.guard_replacement && !(step.new_log_lik > step.old_log_lik)) {
      ++log.rejected;
    } else {
      ensemble.replace(static_cast<int>(worst), candidate, output);
      ll[worst] = step.new_log_lik;
      step.member = static_cast<int>(worst);
      step.accepted = true;
      ++log.replaced;
    }
    log.steps.push_back(step);
  }
  return log;
}

void write_refinement_csv(const std::string& path, int iteration,
                          const RefinementLog& log, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  if (!append)
    out << "iteration,step,member,old_log_lik,new_log_lik,accepted,failed\n";
  out << std::setprecision(10);
  for (const auto& s : log.steps)
    out << iteration << ',' << s.step << ',' << s.member << ',' << s.old_log_lik
        << ',' << s.new_log_lik << ',' << s.accepted << ',' << s.failed << '\n';
}

}  // namespace iis
