#include "support.hpp"

#include "iis/error.hpp"
#include "iis/mcmc.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

using namespace iis;

namespace {

ParameterSchema box(int n, double lo, double hi) {
  ParameterSchema s;
  for (int i = 0; i < n; ++i) s.slots.push_back({"p" + std::to_string(i), Prior::uniform, lo, hi});
  return s;
}

Eigen::MatrixXd pooled(const MCMCResult& r) {
  const Eigen::Index kept = r.samples.front().cols();
  Eigen::MatrixXd all(r.samples.front().rows(), kept * static_cast<Eigen::Index>(r.samples.size()));
  for (std::size_t c = 0; c < r.samples.size(); ++c)
    all.middleCols(static_cast<Eigen::Index>(c) * kept, kept) = r.samples[c];
  return all;
}

/// Standard error of a chain mean from non-overlapping batch means.
double batch_se(const std::vector<Eigen::MatrixXd>& chains, int row, int batches_per_chain) {
  std::vector<double> means;
  for (const auto& c : chains) {
    const Eigen::Index len = c.cols() / batches_per_chain;
    for (int b = 0; b < batches_per_chain; ++b)
      means.push_back(c.row(row).segment(b * len, len).mean());
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double m : means) ss += (m - mu) * (m - mu);
  const double n = static_cast<double>(means.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

ChainState manual_state(const std::vector<double>& archive, double start) {
  ChainState s;
  for (double a : archive) s.append_archive(Eigen::VectorXd::Constant(1, a));
  s.current.assign(3, Eigen::VectorXd::Constant(1, start));
  s.log_post.assign(3, 0.0);
  return s;
}

}  // namespace

TEST_CASE("log prior") {
  ParameterSchema s = box(2, 0.0, 4.0);
  s.slots.push_back({"xi1", Prior::standard_normal, 0.0, 0.0});
  s.slots.push_back({"xi2", Prior::standard_normal, 0.0, 0.0});
  const double log2pi = std::log(2.0 * std::numbers::pi);
  CHECK(log_prior(Eigen::Vector4d(1, 2, 0, 0), s) ==
        doctest::Approx(-2.0 * std::log(4.0) - log2pi).epsilon(1e-14));
  CHECK(log_prior(Eigen::Vector4d(1, 2, 1, -2), s) ==
        doctest::Approx(-2.0 * std::log(4.0) - log2pi - 2.5).epsilon(1e-14));
  CHECK(log_prior(Eigen::Vector4d(-0.1, 2, 0, 0), s) == -std::numeric_limits<double>::infinity());
  CHECK(log_prior(Eigen::Vector4d(1, 4.1, 0, 0), s) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(log_prior(Eigen::Vector3d(1, 2, 0), s), ShapeError);
}

TEST_CASE("posterior skips the model outside the support") {
  const ParameterSchema s = box(1, 0.0, 1.0);
  int calls = 0;
  const FunctionModel model(1, 1, [&](const Eigen::VectorXd& m) {
    ++calls;
    return m;
  });
  const MeasurementSet d{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), {}};
  CHECK(log_posterior(Eigen::VectorXd::Constant(1, 2.0), model, s, d) ==
        -std::numeric_limits<double>::infinity());
  CHECK(calls == 0);
  CHECK(std::isfinite(log_posterior(Eigen::VectorXd::Constant(1, 0.5), model, s, d)));
  CHECK(calls == 1);
}

TEST_CASE("equal archive states give a jitter-only step") {
  ChainState s = manual_state({2.0, 2.0, 2.0, 2.0, 2.0, 2.0}, 0.7);
  std::mt19937_64 rng(1);
  const LogDensity flat = [](const Eigen::VectorXd&) { return 0.0; };
  demc_step(s, flat, Eigen::VectorXd::Zero(1), 1, rng);
  for (const auto& x : s.current) CHECK(x[0] == 0.7);
  CHECK(s.accepted == 3);
  CHECK(s.archive_size == 9);
}

TEST_CASE("a better proposal is always accepted") {
  const LogDensity vee = [](const Eigen::VectorXd& x) { return std::abs(x[0]); };
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    ChainState s = manual_state({0.0, 1.0, 2.0, 3.0, 4.0, 5.0}, 0.0);
    demc_step(s, vee, Eigen::VectorXd::Zero(1), 1, rng);
    CHECK(s.accepted == 3);
    for (const auto& x : s.current) CHECK(x[0] != 0.0);
  }
}

TEST_CASE("proposals outside the support are rejected") {
  const ParameterSchema schema = box(2, 0.0, 1.0);
  const LogDensity uniform = [&](const Eigen::VectorXd& x) { return log_prior(x, schema); };
  MCMCConfig cfg;
  cfg.evaluations = 6000;
  cfg.seed = 4;
  const MCMCResult r = run_chain(uniform, schema, cfg);
  for (const auto& c : r.samples)
    for (Eigen::Index j = 0; j < c.cols(); ++j) CHECK(schema.in_support(c.col(j)));
  CHECK(r.acceptance < 1.0);
  CHECK(r.acceptance > 0.0);
}

TEST_CASE("one-dimensional standard normal target") {
  const ParameterSchema schema = box(1, -10.0, 10.0);
  const LogDensity target = [](const Eigen::VectorXd& x) {
    return std::abs(x[0]) > 10.0 ? -std::numeric_limits<double>::infinity() : -0.5 * x[0] * x[0];
  };
  MCMCConfig cfg;
  cfg.evaluations = 90000;
  cfg.burn_in = 0.2;
  cfg.seed = 5;
  const MCMCResult r = run_chain(target, schema, cfg);
  const double var = r.sd[0] * r.sd[0];
  MESSAGE("mean " << r.mean[0] << " variance " << var << " acceptance " << r.acceptance);
  CHECK(var >= 0.9);
  CHECK(var <= 1.1);
  CHECK(std::abs(r.mean[0]) <= 3.0 * batch_se(r.samples, 0, 10));
  CHECK(r.rhat[0] <= 1.01);
  CHECK(r.evaluations <= cfg.evaluations);
  CHECK(r.evaluations > cfg.evaluations - cfg.chains);
}

TEST_CASE("correlated Gaussian target: moments within three standard errors") {
  const ParameterSchema schema = box(2, -20.0, 20.0);
  const Eigen::Vector2d mu(1.5, -2.0);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 2.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const LogDensity target = [&](const Eigen::VectorXd& x) {
    if (!schema.in_support(x)) return -std::numeric_limits<double>::infinity();
    const Eigen::Vector2d r = x - mu;
    return -0.5 * r.dot(prec * r);
  };
  MCMCConfig cfg;
  cfg.evaluations = 120000;
  cfg.burn_in = 0.2;
  cfg.seed = 6;
  const MCMCResult r = run_chain(target, schema, cfg);
  for (int i = 0; i < 2; ++i) {
    const double se = batch_se(r.samples, i, 10);
    MESSAGE("slot " << i << " mean " << r.mean[i] << " se " << se);
    CHECK(std::abs(r.mean[i] - mu[i]) <= 3.0 * se);
    CHECK(r.sd[i] * r.sd[i] == doctest::Approx(cov(i, i)).epsilon(0.1));
  }
  const Eigen::MatrixXd all = pooled(r);
  const Eigen::MatrixXd centred = all.colwise() - all.rowwise().mean();
  const double c01 = centred.row(0).dot(centred.row(1)) / static_cast<double>(all.cols() - 1);
  CHECK(c01 == doctest::Approx(0.8).epsilon(0.1));
}

TEST_CASE("stationary distribution of a two-level target") {
  // Density 3 on [0, 1) and 1 on [1, 2): the chain must spend 3/4 of its time
  // on the left half. Thinned samples are binned and compared by chi-square.
  const ParameterSchema schema = box(1, 0.0, 2.0);
  const LogDensity target = [&](const Eigen::VectorXd& x) {
    if (!schema.in_support(x)) return -std::numeric_limits<double>::infinity();
    return x[0] < 1.0 ? std::log(3.0) : 0.0;
  };
  MCMCConfig cfg;
  cfg.evaluations = 150000;
  cfg.burn_in = 0.1;
  cfg.seed = 7;
  const MCMCResult r = run_chain(target, schema, cfg);
  int counts[4] = {0, 0, 0, 0};
  int n = 0;
  for (const auto& c : r.samples)
    for (Eigen::Index j = 0; j < c.cols(); j += 25) {
      ++counts[std::min(3, static_cast<int>(c(0, j) * 2.0))];
      ++n;
    }
  const double p[4] = {0.375, 0.375, 0.125, 0.125};
  double chi2 = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double e = p[k] * n;
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  MESSAGE("chi-square " << chi2 << " over " << n << " samples");
  CHECK(chi2 < 11.34);  // 3 dof, 99th percentile
}

TEST_CASE("Gelman-Rubin against a two-pass oracle") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  std::vector<Eigen::MatrixXd> chains(4, Eigen::MatrixXd(3, 250));
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 250; ++j) chains[c](i, j) = normal(rng) + 0.1 * c * i;
  const Eigen::VectorXd rhat = gelman_rubin(chains);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> means(4), vars(4);
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int j = 0; j < 250; ++j) s += chains[c](i, j);
      means[c] = s / 250.0;
      double ss = 0.0;
      for (int j = 0; j < 250; ++j) ss += (chains[c](i, j) - means[c]) * (chains[c](i, j) - means[c]);
      vars[c] = ss / 249.0;
    }
    double grand = 0.0, w = 0.0;
    for (int c = 0; c < 4; ++c) {
      grand += means[c] / 4.0;
      w += vars[c] / 4.0;
    }
    double b = 0.0;
    for (int c = 0; c < 4; ++c) b += (means[c] - grand) * (means[c] - grand);
    b *= 250.0 / 3.0;
    const double expected = std::sqrt((249.0 / 250.0 * w + b / 250.0) / w);
    CHECK(std::abs(rhat[i] - expected) < 1e-10);
  }
  CHECK(rhat[0] < rhat[2]);
  CHECK_THROWS_AS(gelman_rubin({chains[0]}), ShapeError);
}

TEST_CASE("chains are deterministic for a fixed seed") {
  const ParameterSchema schema = box(2, -5.0, 5.0);
  const LogDensity target = [&](const Eigen::VectorXd& x) {
    return schema.in_support(x) ? -0.5 * x.squaredNorm() : -std::numeric_limits<double>::infinity();
  };
  MCMCConfig cfg;
  cfg.evaluations = 3000;
  cfg.seed = 9;
  const std::string dir = test::scratch_dir("mcmc_determinism");
  write_chain_csv(dir + "/a.csv", schema, run_chain(target, schema, cfg));
  write_chain_csv(dir + "/b.csv", schema, run_chain(target, schema, cfg));
  const std::string a = test::slurp(dir + "/a.csv");
  CHECK(a == test::slurp(dir + "/b.csv"));
  CHECK(a.rfind("generation,chain,p0,p1\n", 0) == 0);
  cfg.seed = 10;
  write_chain_csv(dir + "/c.csv", schema, run_chain(target, schema, cfg));
  CHECK(a != test::slurp(dir + "/c.csv"));
}

TEST_CASE("MCMC configuration errors") {
  MCMCConfig cfg;
  cfg.chains = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MCMCConfig{};
  cfg.evaluations = 100;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MCMCConfig{};
  cfg.burn_in = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  ChainState s = manual_state({1.0, 2.0}, 0.0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(demc_step(s, [](const Eigen::VectorXd&) { return 0.0; },
                            Eigen::VectorXd::Zero(1), 1, rng),
                  ConfigError);
}
