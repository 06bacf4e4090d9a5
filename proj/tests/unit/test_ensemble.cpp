#include "support.hpp"

#include "iis/ensemble.hpp"
#include "iis/error.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace iis;

namespace {

ParameterSchema normal_schema(int n) {
  ParameterSchema s;
  for (int i = 0; i < n; ++i) s.slots.push_back({"m" + std::to_string(i), Prior::standard_normal, 0, 0});
  return s;
}

MeasurementSet measurements(const Eigen::VectorXd& values, double sigma) {
  return {values, Eigen::VectorXd::Constant(values.size(), sigma), {}};
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd a = x.colwise() - x.rowwise().mean();
  return a * a.transpose() / static_cast<double>(x.cols() - 1);
}

}  // namespace

TEST_CASE("uniform prior draws stay in range with the right mean") {
  ParameterSchema s;
  s.slots.push_back({"x_s", Prior::uniform, 3.0, 5.0});
  const int n = 5000;
  const Eigen::MatrixXd m = draw_prior(s, n, 42);
  CHECK(m.minCoeff() >= 3.0);
  CHECK(m.maxCoeff() <= 5.0);
  const double tol = 3.0 * (2.0 / std::sqrt(12.0)) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(m.mean() - 4.0) <= tol);
}

TEST_CASE("degenerate prior range returns the single value") {
  ParameterSchema s;
  s.slots.push_back({"a", Prior::uniform, 2.5, 2.5});
  const Eigen::MatrixXd m = draw_prior(s, 10, 1);
  CHECK((m.array() == 2.5).all());
}

TEST_CASE("standard-normal slots pass a Kolmogorov-Smirnov test") {
  const Eigen::MatrixXd m = draw_prior(normal_schema(1), 10000, 7);
  std::vector<double> x(m.data(), m.data() + m.size());
  const double d = test::ks_normal(x);
  // Asymptotic critical value at alpha = 0.01.
  CHECK(d < 1.628 / std::sqrt(10000.0));
}

TEST_CASE("prior draws are seeded") {
  const auto s = case1_config().schema;
  CHECK(draw_prior(s, 20, 5) == draw_prior(s, 20, 5));
  CHECK(draw_prior(s, 20, 5) != draw_prior(s, 20, 6));
  CHECK_THROWS_AS(draw_prior(s, 1, 5), ConfigError);
}

TEST_CASE("schema validation and support") {
  ParameterSchema s;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.slots.push_back({"a", Prior::uniform, 2.0, 1.0});
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.slots[0] = {"a", Prior::uniform, 1.0, 2.0};
  s.slots.push_back({"xi", Prior::standard_normal, 0, 0});
  s.validate();
  CHECK(s.in_support(Eigen::Vector2d(1.5, 10.0)));
  CHECK_FALSE(s.in_support(Eigen::Vector2d(2.5, 0.0)));
  CHECK_FALSE(s.in_support(Eigen::Vector2d(1.5, NAN)));
  CHECK(s.scale(0) == 1.0);
  CHECK(s.scale(1) == 1.0);
  CHECK(s.names() == std::vector<std::string>{"a", "xi"});
}

TEST_CASE("perturbed measurements") {
  SUBCASE("vanishing sigma reproduces d") {
    const auto d = measurements(Eigen::Vector3d(1.0, -2.0, 3.0), 1e-15);
    const Eigen::MatrixXd en = perturb_measurements(d, 50, 3);
    CHECK(((en.colwise() - d.values).cwiseAbs().maxCoeff()) < 1e-13);
  }
  SUBCASE("sample standard deviation within chi-square bounds") {
    const auto d = measurements(Eigen::Vector2d(0.5, 7.0), 0.05);
    const Eigen::MatrixXd en = perturb_measurements(d, 10000, 11);
    for (int k = 0; k < 2; ++k) {
      const Eigen::VectorXd row = en.row(k).transpose();
      const double sd = std::sqrt((row.array() - row.mean()).square().sum() / 9999.0);
      CHECK(sd >= 0.0485);
      CHECK(sd <= 0.0515);
    }
  }
  SUBCASE("seeded") {
    const auto d = measurements(Eigen::Vector2d(0.5, 7.0), 0.05);
    CHECK(perturb_measurements(d, 30, 9) == perturb_measurements(d, 30, 9));
  }
  SUBCASE("non-positive sigma is rejected") {
    const auto d = measurements(Eigen::Vector2d(0.5, 7.0), 0.0);
    CHECK_THROWS_AS(perturb_measurements(d, 30, 9), ConfigError);
  }
}

TEST_CASE("Kalman gain special cases") {
  SUBCASE("scalar identity model with unit sample variance") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(1, 200);
    for (int j = 0; j < 200; ++j) m(0, j) = normal(rng);
    // Rescale to sample variance exactly 1.
    m = (m.array() - m.mean()).matrix();
    m /= std::sqrt(m.squaredNorm() / 199.0);
    const Eigen::MatrixXd k = kalman_gain_diag(m, m, Eigen::VectorXd::Ones(1));
    CHECK(k(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("constant outputs give a zero gain") {
    const Eigen::MatrixXd m = draw_prior(normal_schema(3), 50, 2);
    const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(4, 50, 3.0);
    CHECK(kalman_gain_diag(m, f, Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches the dense sample formula") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd a(3, 5);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    const Eigen::MatrixXd m = draw_prior(normal_schema(5), 40, 4);
    const Eigen::MatrixXd f = a * m;
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(3, 3);
    r.diagonal() << 0.1, 0.2, 0.3;
    // Independent oracle: explicit means and loops.
    const int n = 40;
    const Eigen::VectorXd mb = m.rowwise().sum() / n, fb = f.rowwise().sum() / n;
    Eigen::MatrixXd pm = Eigen::MatrixXd::Zero(5, 3), pf = Eigen::MatrixXd::Zero(3, 3);
    for (int j = 0; j < n; ++j) {
      pm += (m.col(j) - mb) * (f.col(j) - fb).transpose();
      pf += (f.col(j) - fb) * (f.col(j) - fb).transpose();
    }
    pm /= n - 1;
    pf /= n - 1;
    const Eigen::MatrixXd oracle = pm * (pf + r).inverse();
    CHECK((kalman_gain(m, f, r) - oracle).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((kalman_gain_diag(m, f, r.diagonal()) - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("slots constant in the ensemble get zero gain rows") {
    Eigen::MatrixXd m = draw_prior(normal_schema(3), 60, 5);
    m.row(1).setConstant(3.0);
    Eigen::MatrixXd a(4, 3);
    a << 1, 2, 0, 0, 1, 1, 3, 0, -1, 1, 1, 1;
    const Eigen::MatrixXd k = kalman_gain_diag(m, a * m, Eigen::VectorXd::Constant(4, 0.5));
    CHECK((k.row(1).array() == 0.0).all());
    CHECK(k.row(0).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("shape mismatches") {
    const Eigen::MatrixXd m = draw_prior(normal_schema(2), 10, 5);
    CHECK_THROWS_AS(kalman_gain_diag(m, Eigen::MatrixXd::Zero(3, 9), Eigen::VectorXd::Ones(3)),
                    ShapeError);
    CHECK_THROWS_AS(kalman_gain(m, Eigen::MatrixXd::Zero(3, 10), Eigen::MatrixXd::Identity(2, 2)),
                    ShapeError);
  }
}

TEST_CASE("ES update algebra") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(4, 3);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  const Eigen::MatrixXd m = draw_prior(normal_schema(3), 100, 6);
  const Eigen::MatrixXd f = a * m;
  const Eigen::VectorXd r = Eigen::VectorXd::Constant(4, 0.2);

  CHECK((es_update(m, f, f, r) - m).cwiseAbs().maxCoeff() == 0.0);

  const auto d = measurements(Eigen::Vector4d(0.3, -1.0, 0.7, 2.0), std::sqrt(0.2));
  const Eigen::MatrixXd en = perturb_measurements(d, 100, 3);
  const Eigen::Vector4d delta(0.5, -0.25, 1.0, 0.125);
  const Eigen::MatrixXd shifted = en.colwise() + delta;
  const Eigen::MatrixXd diff = es_update(m, f, shifted, r) - es_update(m, f, en, r);
  const Eigen::VectorXd k_delta = kalman_gain_diag(m, f, r) * delta;
  CHECK((diff.colwise() - k_delta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("clipped update keeps bounded slots in range") {
  const auto schema = case1_config().schema;
  const Eigen::MatrixXd m = draw_prior(schema, 80, 3);
  // Outputs that push every slot hard towards a target far outside the box.
  const Eigen::MatrixXd f = m;
  const MeasurementSet d = measurements(Eigen::VectorXd::Constant(11, 100.0), 0.01);
  const Eigen::MatrixXd en = perturb_measurements(d, 80, 4);
  const UpdateResult up = es_update(schema, m, f, en, d.variance());
  CHECK(up.clipped.size() == 11);
  CHECK(up.clipped[0] > 0);
  for (Eigen::Index j = 0; j < up.parameters.cols(); ++j)
    CHECK(schema.in_support(up.parameters.col(j)));
  Eigen::VectorXd v = Eigen::VectorXd::Constant(11, 100.0);
  CHECK(clip_to_prior(schema, v) == 11);
  CHECK(v[0] == 5.0);
}

TEST_CASE("scalar linear-Gaussian update matches the analytic posterior") {
  const int n = 50000;
  const Eigen::MatrixXd m = draw_prior(normal_schema(1), n, 21);
  const MeasurementSet d = measurements(Eigen::VectorXd::Ones(1), 1.0);
  const Eigen::MatrixXd up = es_update(m, m, perturb_measurements(d, n, 22), d.variance());
  const double mean = up.mean();
  const double var = (up.array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean - 0.5) <= 0.02);
  CHECK(std::abs(var - 0.5) <= 0.02);
}

TEST_CASE("multivariate linear-Gaussian update matches the Kalman posterior") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::MatrixXd a(4, 3);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    const Eigen::Vector4d sigma(0.5, 0.8, 1.0, 0.6);
    const Eigen::Vector3d m_true(0.4, -0.7, 1.1);
    Eigen::Vector4d obs = a * m_true;
    for (int k = 0; k < 4; ++k) obs[k] += sigma[k] * normal(rng);
    const MeasurementSet d{obs, sigma, {}};

    const Eigen::MatrixXd r = sigma.cwiseAbs2().asDiagonal();
    const Eigen::MatrixXd post_cov =
        (Eigen::MatrixXd::Identity(3, 3) + a.transpose() * r.inverse() * a).inverse();
    const Eigen::Vector3d post_mean = post_cov * a.transpose() * r.inverse() * obs;

    const int n = 20000;
    const Eigen::MatrixXd m = draw_prior(normal_schema(3), n, 100 + trial);
    const Eigen::MatrixXd up =
        es_update(m, a * m, perturb_measurements(d, n, 200 + trial), d.variance());
    const Eigen::Vector3d mean = up.rowwise().mean();
    const Eigen::MatrixXd cov = sample_cov(up);
    const double mean_scale = std::max(post_mean.cwiseAbs().maxCoeff(), 1e-12);
    CHECK((mean - post_mean).cwiseAbs().maxCoeff() <= 0.05 * mean_scale);
    const double cov_scale = post_cov.diagonal().maxCoeff();
    CHECK((cov - post_cov).cwiseAbs().maxCoeff() <= 0.10 * cov_scale);
  }
}

TEST_CASE("ensemble evaluation counts calls and keeps pairs together") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 3, 4;
  const LinearModel model(a, Eigen::Vector2d(1.0, -1.0));
  std::int64_t evals = 0;
  Ensemble ens = Ensemble::evaluate(model, draw_prior(normal_schema(2), 7, 1), &evals);
  CHECK(evals == 7);
  CHECK(ens.size() == 7);
  CHECK((ens.outputs().col(3) - model.evaluate(ens.parameters().col(3))).norm() == 0.0);
  ens.replace(3, Eigen::Vector2d(1, 1), model.evaluate(Eigen::Vector2d(1, 1)));
  CHECK(ens.outputs()(0, 3) == 4.0);
  CHECK_THROWS_AS(ens.replace(9, Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1)), ShapeError);
  CHECK_THROWS_AS(Ensemble::evaluate(model, Eigen::MatrixXd::Zero(3, 4)), ShapeError);

  const FunctionModel failing(1, 1, [](const Eigen::VectorXd& m) -> Eigen::VectorXd {
    if (m[0] > 0.0) throw NumericalError("boom");
    return m;
  });
  Eigen::MatrixXd p(1, 3);
  p << -1.0, 2.0, -3.0;
  CHECK_THROWS_AS(Ensemble::evaluate(failing, p), NumericalError);
}

TEST_CASE("ensemble CSV names the slots") {
  const auto schema = case1_config().schema;
  const std::string dir = test::scratch_dir("ensemble_csv");
  write_ensemble_csv(dir + "/e.csv", schema, draw_prior(schema, 3, 1));
  const std::string text = test::slurp(dir + "/e.csv");
  CHECK(text.rfind("member,x_s,y_s,S_s1", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
