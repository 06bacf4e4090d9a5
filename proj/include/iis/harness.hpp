#pragma once

// Case-study configuration, the contaminant forward model built from it,
// synthetic measurement generation, experiment runs and reporting.

#include "iis/ensemble.hpp"
#include "iis/grid.hpp"
#include "iis/inference.hpp"
#include "iis/mcmc.hpp"
#include "iis/random_field.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace iis {

enum class ConductivityModel { zonated, kl };

struct Seeds {
  std::uint64_t truth = 11;
  std::uint64_t noise = 12;
  std::uint64_t algorithm = 13;
  bool operator==(const Seeds&) const = default;
};

struct RunConfig {
  std::string name = "custom";
  FlowGrid grid;
  TransportPhysics physics;
  TransportOptions transport;
  ConductivityModel conductivity = ConductivityModel::zonated;
  std::vector<Zone> zones;
  CovarianceSpec covariance;
  int n_kl = 100;
  ParameterSchema schema;
  /// Leading true parameter values; any remaining slots are drawn from the
  /// prior with seeds.truth.
  std::vector<double> truth;
  std::vector<Well> wells;
  std::vector<double> observation_times;
  NoiseModel noise;
  bool zero_noise = false;
  IISConfig iis;
  MCMCConfig mcmc;
  Seeds seeds;
  /// Directory for cached KL bases; empty disables caching.
  std::string cache_dir;

  void validate() const;
  bool operator==(const RunConfig&) const;
};

/// Zonated three-zone conductivity, 11 parameters, 5 wells.
RunConfig case1_config();
/// KL conductivity with 100 terms, 108 parameters, 40 wells.
RunConfig case2_config();
/// case1 | case2; throws ConfigError otherwise.
RunConfig preset(const std::string& name);

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
void save_config(const RunConfig& cfg, const std::string& path);
RunConfig load_config(const std::string& path);

/// Source location, six strengths, then conductivity parameters.
class ContaminantModel final : public ForwardModel {
 public:
  explicit ContaminantModel(RunConfig cfg);

  int parameter_count() const override { return cfg_.schema.size(); }
  int output_count() const override;
  Eigen::VectorXd evaluate(const Eigen::VectorXd& m) const override;

  struct Simulation {
    ConductivityField field;
    HeadField head;
    TransportResult transport;
    Observations observations;
  };
  Simulation simulate(const Eigen::VectorXd& m) const;

  ConductivityField conductivity(const Eigen::VectorXd& m) const;
  SourceSpec source(const Eigen::VectorXd& m) const;
  const RunConfig& config() const { return cfg_; }
  const KLBasis* basis() const { return basis_.get(); }

 private:
  RunConfig cfg_;
  std::shared_ptr<const KLBasis> basis_;
  int source_slots_ = 8;
};

struct TruthRecord {
  Eigen::VectorXd parameters;
  Observations noise_free;
  Eigen::VectorXd noise;
  Eigen::VectorXd sigma;

  Eigen::VectorXd noisy() const { return noise_free.values + noise; }
  MeasurementSet measurements() const;
};

TruthRecord generate_case(const RunConfig& cfg, const ContaminantModel& model);

/// truth.csv and observations.csv in `dir`.
void save_truth(const TruthRecord& truth, const ParameterSchema& schema,
                const std::string& dir);
std::optional<TruthRecord> load_truth(const std::string& dir);

enum class Algorithm { iis, mcmc };
Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

struct RunSummary {
  Algorithm algorithm = Algorithm::iis;
  bool converged = false;
  int iterations = 0;
  std::int64_t evaluations = 0;
  double wall_seconds = 0.0;
  std::vector<ParameterSummary> parameters;
  /// KL cases: RMSE of the ensemble-mean and best-member log K fields, and of
  /// the prior mean field, against the true field.
  std::optional<double> field_rmse;
  std::optional<double> best_field_rmse;
  std::optional<double> prior_field_rmse;
  Eigen::VectorXd rhat;
  double acceptance = 0.0;
};

/// Runs the inversion and writes the result bundle into `out_dir`: truth and
/// observation CSVs, likelihood/trace/refinement CSVs (iis) or the chain CSV
/// (mcmc), final ensemble, summary.csv and summary.json.
RunSummary run_experiment(const RunConfig& cfg, Algorithm algorithm,
                          const std::string& out_dir);

void write_summary(const RunSummary& summary, const std::string& dir);

struct BundleSummary {
  std::string label;
  std::vector<ParameterSummary> parameters;
  std::optional<double> field_rmse;
};
BundleSummary read_bundle(const std::string& dir);

/// Side-by-side per-parameter statistics, with differences against the first
/// bundle. Throws ConfigError when the bundles do not share a truth.
std::string report(const std::vector<std::string>& bundle_dirs);

}  // namespace iis
