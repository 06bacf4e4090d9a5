#pragma once

// Ensemble-smoother machinery: parameter schemas and priors, measurement sets,
// forward-model evaluation, perturbed observations, Kalman gain and the ES
// parameter update.

#include "iis/grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace iis {

enum class Prior { uniform, standard_normal };

struct ParameterSlot {
  std::string name;
  Prior prior = Prior::uniform;
  double lower = 0.0;
  double upper = 1.0;

  bool bounded() const { return prior == Prior::uniform; }
  bool operator==(const ParameterSlot&) const = default;
};

struct ParameterSchema {
  std::vector<ParameterSlot> slots;

  int size() const { return static_cast<int>(slots.size()); }
  std::vector<std::string> names() const;
  /// Throws ConfigError on empty names or inverted/non-finite ranges.
  void validate() const;
  bool in_support(const Eigen::Ref<const Eigen::VectorXd>& m) const;
  /// Width of the prior range; 1 for standard-normal slots.
  double scale(int slot) const;
  bool operator==(const ParameterSchema&) const = default;
};

/// Observation vector with independent Gaussian errors.
struct MeasurementSet {
  Eigen::VectorXd values;
  Eigen::VectorXd sigma;
  std::vector<ObservationInfo> info;

  int size() const { return static_cast<int>(values.size()); }
  /// sigma > 0 elementwise and consistent lengths.
  void validate() const;
  Eigen::VectorXd variance() const { return sigma.cwiseAbs2(); }
};

struct NoiseModel {
  double sigma_head = 0.01;
  double sigma_concentration = 0.05;

  void validate() const;
  double sigma(Quantity kind) const {
    return kind == Quantity::head ? sigma_head : sigma_concentration;
  }
  /// Attaches per-datum sigma by observation kind.
  MeasurementSet measurements(const Observations& obs) const;
  bool operator==(const NoiseModel&) const = default;
};

/// m -> f(m). Implementations must be safe to call concurrently.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual int parameter_count() const = 0;
  virtual int output_count() const = 0;
  virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& m) const = 0;
};

/// f(m) = A m + b.
class LinearModel final : public ForwardModel {
 public:
  explicit LinearModel(Eigen::MatrixXd a, Eigen::VectorXd offset = {});
  int parameter_count() const override { return static_cast<int>(a_.cols()); }
  int output_count() const override { return static_cast<int>(a_.rows()); }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& m) const override;
  const Eigen::MatrixXd& matrix() const { return a_; }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd offset_;
};

class FunctionModel final : public ForwardModel {
 public:
  using Fn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  FunctionModel(int n_params, int n_outputs, Fn fn)
      : n_params_(n_params), n_outputs_(n_outputs), fn_(std::move(fn)) {}
  int parameter_count() const override { return n_params_; }
  int output_count() const override { return n_outputs_; }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& m) const override {
    return fn_(m);
  }

 private:
  int n_params_, n_outputs_;
  Fn fn_;
};

/// N parameter vectors (columns of M) with their forward outputs (columns
/// of F). Members can only enter together with their own evaluation.
class Ensemble {
 public:
  /// Evaluates every column of `parameters`; adds N to `evaluations` when
  /// given. Columns whose evaluation throws are reported through the
  /// exception of the first failure.
  static Ensemble evaluate(const ForwardModel& model,
                           Eigen::MatrixXd parameters,
                           std::int64_t* evaluations = nullptr);

  const Eigen::MatrixXd& parameters() const { return m_; }
  const Eigen::MatrixXd& outputs() const { return f_; }
  int size() const { return static_cast<int>(m_.cols()); }

  /// Replaces member j by an already-evaluated pair, where
  /// output == model.evaluate(parameters).
  void replace(int j, const Eigen::VectorXd& parameters,
               const Eigen::VectorXd& output);

 private:
  Ensemble(Eigen::MatrixXd m, Eigen::MatrixXd f)
      : m_(std::move(m)), f_(std::move(f)) {}
  Eigen::MatrixXd m_;
  Eigen::MatrixXd f_;
};

/// Bounded slots ~ Uniform(lower, upper), others ~ N(0, 1); n_m x N.
Eigen::MatrixXd draw_prior(const ParameterSchema& schema, int n,
                           std::uint64_t seed);

/// Columns d + eps_i with eps_i ~ N(0, diag(sigma^2)); n_d x N.
Eigen::MatrixXd perturb_measurements(const MeasurementSet& d, int n,
                                     std::uint64_t seed);

/// K = P_M (P_F + R)^-1 from ensemble anomalies (divisor N - 1).
Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& m,
                            const Eigen::Ref<const Eigen::MatrixXd>& f,
                            const Eigen::Ref<const Eigen::MatrixXd>& r);

/// Diagonal R given by its variances.
Eigen::MatrixXd kalman_gain_diag(const Eigen::Ref<const Eigen::MatrixXd>& m,
                                 const Eigen::Ref<const Eigen::MatrixXd>& f,
                                 const Eigen::VectorXd& r_diag);

struct UpdateResult {
  Eigen::MatrixXd parameters;
  /// Number of members clipped back into the prior range, per slot.
  std::vector<int> clipped;
};

/// M^a = M + K (En_d - F) without any bound enforcement.
Eigen::MatrixXd es_update(const Eigen::Ref<const Eigen::MatrixXd>& m,
                          const Eigen::Ref<const Eigen::MatrixXd>& f,
                          const Eigen::Ref<const Eigen::MatrixXd>& perturbed,
                          const Eigen::VectorXd& r_diag);

/// As above, then clips bounded slots to their prior range.
UpdateResult es_update(const ParameterSchema& schema,
                       const Eigen::Ref<const Eigen::MatrixXd>& m,
                       const Eigen::Ref<const Eigen::MatrixXd>& f,
                       const Eigen::Ref<const Eigen::MatrixXd>& perturbed,
                       const Eigen::VectorXd& r_diag);

/// Clips bounded slots of one vector; returns the number of clipped slots.
int clip_to_prior(const ParameterSchema& schema, Eigen::Ref<Eigen::VectorXd> m);

/// One row per member: member index followed by the parameter slots.
void write_ensemble_csv(const std::string& path, const ParameterSchema& schema,
                        const Eigen::MatrixXd& parameters);

}  // namespace iis
