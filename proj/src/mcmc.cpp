#include "iis/mcmc.hpp"

#include "iis/error.hpp"
#include "iis/inference.hpp"
#include "iis/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace iis {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

double log_prior(const Eigen::Ref<const Eigen::VectorXd>& m,
                 const ParameterSchema& schema) {
  if (m.size() != schema.size()) throw ShapeError("log_prior: wrong length");
  if (!schema.in_support(m)) return kNegInf;
  double lp = 0.0;
  for (int i = 0; i < schema.size(); ++i) {
    const auto& s = schema.slots[i];
    if (s.bounded()) {
      const double width = s.upper - s.lower;
      if (width > 0.0) lp -= std::log(width);
    } else {
      lp += -0.5 * kLog2Pi - 0.5 * m[i] * m[i];
    }
  }
  return lp;
}

double log_posterior(const Eigen::VectorXd& m, const ForwardModel& model,
                     const ParameterSchema& schema, const MeasurementSet& d) {
  const double lp = log_prior(m, schema);
  if (lp == kNegInf) return kNegInf;
  return lp + log_likelihood(model.evaluate(m), d);
}

LogDensity make_log_posterior(const ForwardModel& model,
                              const ParameterSchema& schema,
                              const MeasurementSet& d) {
  return [&model, schema, d](const Eigen::VectorXd& m) {
    return log_posterior(m, model, schema, d);
  };
}

void MCMCConfig::validate() const {
  if (chains < 3) throw ConfigError("DE-MC needs at least three chains");
  if (evaluations < 100LL * chains)
    throw ConfigError("MCMC budget must be at least 100 proposals per chain");
  if (!(burn_in >= 0.0) || burn_in >= 1.0)
    throw ConfigError("burn-in fraction must lie in [0, 1)");
  if (archive_factor < 1 || archive_thin < 1)
    throw ConfigError("archive settings must be positive");
  if (!(jitter >= 0.0)) throw ConfigError("jitter must be non-negative");
  if (jump_every < 0 || refresh_every < 0)
    throw ConfigError("jump and refresh intervals must be non-negative");
}

void ChainState::append_archive(const Eigen::VectorXd& state) {
  if (archive_size == archive.cols()) {
    archive.conservativeResize(state.size(),
                               std::max<Eigen::Index>(16, 2 * archive.cols()));
  }
  archive.col(archive_size++) = state;
}

void ChainState::drop_oldest(int keep) {
  if (keep >= archive_size) return;
  const int start = archive_size - keep;
  archive.leftCols(keep) = archive.middleCols(start, keep).eval();
  archive_size = keep;
}

void demc_step(ChainState& state, const LogDensity& target,
               const Eigen::VectorXd& jitter_scale, int archive_thin,
               std::mt19937_64& rng, double gamma) {
  const int nc = state.chains();
  if (state.archive_size < 2 * nc)
    throw ConfigError("DE-MC archive must hold at least two states per chain");
  const Eigen::Index dim = state.current.front().size();
  if (gamma <= 0.0) gamma = 2.38 / std::sqrt(2.0 * static_cast<double>(dim));
  std::uniform_int_distribution<int> pick(0, state.archive_size - 1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;

  // Random draws happen in a fixed order before any density evaluation so
  // the chain is reproducible however the evaluations are scheduled.
  std::vector<Eigen::VectorXd> proposal(nc);
  std::vector<double> log_u(nc);
  for (int c = 0; c < nc; ++c) {
    const int a = pick(rng);
    int b = pick(rng);
    while (b == a) b = pick(rng);
    proposal[c] = state.current[c] +
                  gamma * (state.archive.col(a) - state.archive.col(b));
    for (Eigen::Index i = 0; i < dim; ++i)
      proposal[c][i] += jitter_scale[i] * normal(rng);
    log_u[c] = std::log(unit(rng));
  }
  std::vector<double> lp(nc);
#pragma omp parallel for
  for (int c = 0; c < nc; ++c) lp[c] = target(proposal[c]);

  for (int c = 0; c < nc; ++c) {
    ++state.proposed;
    if (lp[c] == kNegInf || std::isnan(lp[c])) continue;
    if (log_u[c] < lp[c] - state.log_post[c]) {
      state.current[c] = std::move(proposal[c]);
      state.log_post[c] = lp[c];
      ++state.accepted;
    }
  }
  ++state.generation;
  if (state.generation % archive_thin == 0)
    for (int c = 0; c < nc; ++c) state.append_archive(state.current[c]);
}

Eigen::VectorXd gelman_rubin(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.size() < 2) throw ShapeError("R-hat needs at least two chains");
  const Eigen::Index dim = chains.front().rows();
  const Eigen::Index n = chains.front().cols();
  if (n < 2) throw ShapeError("R-hat needs at least two samples per chain");
  const double m = static_cast<double>(chains.size());
  const double nn = static_cast<double>(n);
  Eigen::VectorXd rhat(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Eigen::VectorXd means(chains.size()), vars(chains.size());
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto row = chains[c].row(i).array();
      means[c] = row.mean();
      vars[c] = (row - means[c]).square().sum() / (nn - 1.0);
    }
    const double w = vars.mean();
    const double b = nn * (means.array() - means.mean()).square().sum() / (m - 1.0);
    const double v = (nn - 1.0) / nn * w + b / nn;
    rhat[i] = w > 0.0 ? std::sqrt(v / w) : (b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  }
  return rhat;
}

MCMCResult run_chain(const LogDensity& target, const ParameterSchema& schema,
                     const MCMCConfig& config) {
  config.validate();
  schema.validate();
  const int dim = schema.size();
  std::mt19937_64 rng(derive_seed(config.seed, 101));

  ChainState state;
  const int archive0 = std::max(config.archive_factor * dim, 2 * config.chains);
  const Eigen::MatrixXd init = draw_prior(schema, archive0 + config.chains,
                                          derive_seed(config.seed, 100));
  for (int k = 0; k < archive0; ++k) state.append_archive(init.col(k));

  Eigen::VectorXd jitter(dim);
  for (int i = 0; i < dim; ++i) jitter[i] = config.jitter * schema.scale(i);

  MCMCResult result;
  state.current.resize(config.chains);
  state.log_post.resize(config.chains);
  for (int c = 0; c < config.chains; ++c) {
    state.current[c] = init.col(archive0 + c);
    state.log_post[c] = target(state.current[c]);
  }
  result.evaluations = config.chains;

  const std::int64_t generations =
      std::max<std::int64_t>(2, (config.evaluations - config.chains) / config.chains);
  const std::int64_t burn = static_cast<std::int64_t>(
      std::floor(config.burn_in * static_cast<double>(generations)));
  const std::int64_t kept = generations - burn;
  result.samples.assign(config.chains, Eigen::MatrixXd(dim, kept));
  for (std::int64_t g = 0; g < generations; ++g) {
    const bool jump = config.jump_every > 0 && (g + 1) % config.jump_every == 0;
    demc_step(state, target, jitter, config.archive_thin, rng, jump ? 1.0 : 0.0);
    if (g < burn && config.refresh_every > 0 && (g + 1) % config.refresh_every == 0)
      state.drop_oldest(std::max(archive0, state.archive_size / 2));
    if (g >= burn)
      for (int c = 0; c < config.chains; ++c)
        result.samples[c].col(g - burn) = state.current[c];
  }
  result.evaluations += generations * config.chains;
  result.generations = generations;
  result.acceptance = static_cast<double>(state.accepted) /
                      static_cast<double>(std::max<std::int64_t>(1, state.proposed));
  result.rhat = gelman_rubin(result.samples);

  Eigen::MatrixXd pooled(dim, kept * config.chains);
  for (int c = 0; c < config.chains; ++c)
    pooled.middleCols(c * kept, kept) = result.samples[c];
  result.mean = pooled.rowwise().mean();
  result.sd = ((pooled.colwise() - result.mean).cwiseAbs2().rowwise().sum() /
               static_cast<double>(pooled.cols() - 1))
                  .cwiseSqrt();
  return result;
}

void write_chain_csv(const std::string& path, const ParameterSchema& schema,
                     const MCMCResult& result) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "generation,chain";
  for (const auto& s : schema.slots) out << ',' << s.name;
  out << '\n' << std::setprecision(10);
  const Eigen::Index kept = result.samples.empty() ? 0 : result.samples[0].cols();
  for (Eigen::Index g = 0; g < kept; ++g) {
    for (std::size_t c = 0; c < result.samples.size(); ++c) {
      out << g << ',' << c;
      for (Eigen::Index i = 0; i < result.samples[c].rows(); ++i)
        out << ',' << result.samples[c](i, g);
      out << '\n';
    }
  }
}

}  // namespace iis
