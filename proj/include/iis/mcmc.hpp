#pragma once

// Differential-evolution MCMC with a past-state archive (DE-MCz), used as the
// reference sampler.

#include "iis/ensemble.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace iis {

/// Returns -infinity outside the support.
using LogDensity = std::function<double(const Eigen::VectorXd&)>;

/// Uniform slots contribute -log(width) inside their range, standard-normal
/// slots their N(0, 1) log density; outside the support the result is
/// -infinity and the model is not evaluated.
double log_prior(const Eigen::Ref<const Eigen::VectorXd>& m,
                 const ParameterSchema& schema);

double log_posterior(const Eigen::VectorXd& m, const ForwardModel& model,
                     const ParameterSchema& schema, const MeasurementSet& d);

LogDensity make_log_posterior(const ForwardModel& model,
                              const ParameterSchema& schema,
                              const MeasurementSet& d);

struct MCMCConfig {
  int chains = 3;
  /// Proposal budget across all chains.
  std::int64_t evaluations = 30000;
  /// Leading share of each chain discarded as burn-in.
  double burn_in = 2.0 / 3.0;
  /// Initial archive size as a multiple of the parameter count.
  int archive_factor = 10;
  /// Append the chain states to the archive every `archive_thin` generations.
  int archive_thin = 1;
  /// Jitter standard deviation relative to each slot's prior scale.
  double jitter = 1e-6;
  /// Every `jump_every`-th generation uses gamma = 1 so chains can hop
  /// between modes; 0 disables.
  int jump_every = 10;
  /// During burn-in the archive is cut to its most recent half every
  /// `refresh_every` generations, shedding early far-off states; 0 disables.
  int refresh_every = 250;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const MCMCConfig&) const = default;
};

struct ChainState {
  std::vector<Eigen::VectorXd> current;
  std::vector<double> log_post;
  /// Past states, one per column; only the first archive_size are used.
  Eigen::MatrixXd archive;
  int archive_size = 0;
  std::int64_t generation = 0;
  std::int64_t accepted = 0;
  std::int64_t proposed = 0;

  int chains() const { return static_cast<int>(current.size()); }
  void append_archive(const Eigen::VectorXd& state);
  /// Keeps only the `keep` most recent archive states.
  void drop_oldest(int keep);
};

/// One generation: every chain proposes x + gamma (z_a - z_b) + e with z_a,
/// z_b distinct archive members, then applies the Metropolis rule. gamma <= 0
/// selects 2.38 / sqrt(2 d). Chain states are appended to the archive every
/// `archive_thin` generations.
void demc_step(ChainState& state, const LogDensity& target,
               const Eigen::VectorXd& jitter_scale, int archive_thin,
               std::mt19937_64& rng, double gamma = 0.0);

struct MCMCResult {
  /// samples[c] is d x kept for chain c (post burn-in).
  std::vector<Eigen::MatrixXd> samples;
  Eigen::VectorXd rhat;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  std::int64_t evaluations = 0;
  std::int64_t generations = 0;
  double acceptance = 0.0;
};

/// Chains and the initial archive are drawn from the prior; runs whole
/// generations until the proposal budget is spent.
MCMCResult run_chain(const LogDensity& target, const ParameterSchema& schema,
                     const MCMCConfig& config);

/// Gelman-Rubin potential scale reduction per parameter.
Eigen::VectorXd gelman_rubin(const std::vector<Eigen::MatrixXd>& chains);

/// generation,chain,<slot names...> rows of the kept samples.
void write_chain_csv(const std::string& path, const ParameterSchema& schema,
                     const MCMCResult& result);

}  // namespace iis
