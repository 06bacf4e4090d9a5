#include "support.hpp"

#include "iis/error.hpp"
#include "iis/harness.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace iis;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(IIS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunSummary fake_summary(double shift) {
  RunSummary s;
  s.converged = true;
  s.iterations = 3;
  s.evaluations = 1350;
  s.parameters = {{"x_s", 3.156, 3.2 + shift, 0.05}, {"y_s", 4.77, 4.75, 0.02}};
  return s;
}

int count_lines(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("presets") {
  const RunConfig c1 = case1_config();
  CHECK(c1.schema.size() == 11);
  CHECK(c1.wells.size() == 5);
  CHECK(c1.observation_times.size() == 5);
  CHECK(c1.truth.size() == 11);
  CHECK_NOTHROW(c1.validate());
  const RunConfig c2 = case2_config();
  CHECK(c2.schema.size() == 108);
  CHECK(c2.wells.size() == 40);
  CHECK(c2.truth.size() == 8);
  CHECK_NOTHROW(c2.validate());
  CHECK(preset("case1") == c1);
  CHECK_THROWS_AS(preset("case3"), ConfigError);
}

TEST_CASE("configuration JSON round trip") {
  for (RunConfig cfg : {case1_config(), case2_config()}) {
    CHECK(config_from_json(config_to_json(cfg)) == cfg);
    cfg.physics.advection = Advection::upwind;
    cfg.zero_noise = true;
    cfg.seeds.algorithm = cfg.iis.seed = cfg.mcmc.seed = 77;
    cfg.iis.gp.guard_replacement = false;
    const RunConfig back = config_from_json(config_to_json(cfg));
    CHECK(back == cfg);
    // Algorithm seeds always follow seeds.algorithm.
    cfg.seeds.algorithm = 78;
    CHECK(config_from_json(config_to_json(cfg)).iis.seed == 78);
    CHECK(config_from_json(config_to_json(cfg)).mcmc.seed == 78);
  }
  const std::string dir = test::scratch_dir("config_io");
  save_config(case1_config(), dir + "/c.json");
  CHECK(load_config(dir + "/c.json") == case1_config());
  CHECK(test::slurp(dir + "/c.json").find('\r') == std::string::npos);
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(config_from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{}"), ConfigError);
  std::string text = config_to_json(case1_config());
  CHECK_THROWS_AS(config_from_json(std::string(text).replace(text.find("\"zonated\""), 9, "\"voronoi\"")),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(std::string(text).replace(text.find("\"hybrid\""), 8, "\"quick\"")),
                  ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  RunConfig cfg = case1_config();
  cfg.wells.push_back({"far", 30.0, 5.0});
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = case1_config();
  cfg.zones.pop_back();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = case1_config();
  cfg.observation_times.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("case-1 model outputs") {
  const ContaminantModel model(case1_config());
  CHECK(model.parameter_count() == 11);
  CHECK(model.output_count() == 30);
  const auto sim = model.simulate(test::case1_truth());
  int heads = 0;
  for (const auto& info : sim.observations.info) heads += info.kind == Quantity::head;
  CHECK(heads == 5);
  CHECK(sim.observations.values.size() == 30);
  CHECK(sim.observations.values.allFinite());
  const SourceSpec s = model.source(test::case1_truth());
  CHECK(s.x == 3.156);
  CHECK(s.strengths.size() == 6);
  CHECK(s.strengths.back() == 3.427);
  CHECK_THROWS_AS(model.evaluate(Eigen::VectorXd::Zero(10)), ShapeError);
}

TEST_CASE("synthetic measurements") {
  RunConfig cfg = case1_config();
  const ContaminantModel model(cfg);

  SUBCASE("noise draws are recorded and reproducible") {
    const TruthRecord a = generate_case(cfg, model);
    CHECK(a.parameters == test::case1_truth());
    CHECK(a.noisy() == a.noise_free.values + a.noise);
    CHECK(a.noise.cwiseAbs().minCoeff() > 0.0);
    const std::string d1 = test::scratch_dir("truth_a"), d2 = test::scratch_dir("truth_b");
    save_truth(a, cfg.schema, d1);
    save_truth(generate_case(cfg, model), cfg.schema, d2);
    CHECK(test::slurp(d1 + "/truth.csv") == test::slurp(d2 + "/truth.csv"));
    CHECK(test::slurp(d1 + "/observations.csv") == test::slurp(d2 + "/observations.csv"));
    CHECK(count_lines(test::slurp(d1 + "/observations.csv")) == 31);
    CHECK(test::slurp(d1 + "/observations.csv")
              .rfind("index,kind,well,time,noise_free,noise,noisy,sigma\n", 0) == 0);

    const auto loaded = load_truth(d1);
    REQUIRE(loaded.has_value());
    CHECK(loaded->parameters == a.parameters);
    CHECK(loaded->noise_free.values == a.noise_free.values);
    CHECK(loaded->noise == a.noise);
    CHECK(loaded->sigma == a.sigma);
    CHECK(loaded->noise_free.info.size() == 30);
    CHECK_FALSE(load_truth(test::scratch_dir("truth_empty")).has_value());

    cfg.seeds.noise = 99;
    CHECK(generate_case(cfg, model).noise != a.noise);
  }
  SUBCASE("zero noise gives noise-free measurements") {
    cfg.zero_noise = true;
    const TruthRecord t = generate_case(cfg, model);
    CHECK(t.noisy() == t.noise_free.values);
    CHECK(t.measurements().values == t.noise_free.values);
  }
  SUBCASE("sigma follows the observation kind") {
    const TruthRecord t = generate_case(cfg, model);
    for (std::size_t k = 0; k < t.noise_free.info.size(); ++k)
      CHECK(t.sigma[static_cast<Eigen::Index>(k)] ==
            (t.noise_free.info[k].kind == Quantity::head ? 0.01 : 0.05));
  }
  SUBCASE("slots without a truth value are drawn from the prior") {
    cfg.truth.resize(8);
    const TruthRecord t = generate_case(cfg, model);
    CHECK(t.parameters.head(8) == test::case1_truth().head(8));
    CHECK(cfg.schema.in_support(t.parameters));
    CHECK(t.parameters.tail(3) != test::case1_truth().tail(3));
  }
}

TEST_CASE("result bundles and reports") {
  const std::string a = test::scratch_dir("bundle_a"), b = test::scratch_dir("bundle_b");
  write_summary(fake_summary(0.0), a);
  write_summary(fake_summary(0.0), b);
  const std::string csv = test::slurp(a + "/summary.csv");
  CHECK(csv == "parameter,truth,mean,sd\nx_s,3.156,3.2,0.05\ny_s,4.77,4.75,0.02\n");

  SUBCASE("identical bundles differ by zero") {
    const std::string table = report({a, b});
    CHECK(table.rfind("parameter,truth,mean_iis_test_bundle_a,sd_iis_test_bundle_a,"
                      "error_iis_test_bundle_a,mean_iis_test_bundle_b,sd_iis_test_bundle_b,"
                      "error_iis_test_bundle_b,dmean_iis_test_bundle_b\n", 0) == 0);
    CHECK(table.find("x_s,3.156,3.2,0.05,0.044,3.2,0.05,0.044,0\n") != std::string::npos);
    CHECK(count_lines(table) == 3);
  }
  SUBCASE("a single bundle") {
    CHECK(count_lines(report({a})) == 3);
  }
  SUBCASE("differing means") {
    write_summary(fake_summary(0.5), b);
    CHECK(report({a, b}).find(",0.5\n") != std::string::npos);
  }
  SUBCASE("mismatched truth is rejected") {
    RunSummary other = fake_summary(0.0);
    other.parameters[0].truth = 3.5;
    write_summary(other, b);
    CHECK_THROWS_AS(report({a, b}), ConfigError);
  }
  SUBCASE("field RMSE row") {
    RunSummary s = fake_summary(0.0);
    s.field_rmse = 0.6;
    write_summary(s, a);
    s.field_rmse = 0.5;
    write_summary(s, b);
    CHECK(report({a, b}).find("log_k_field_rmse,0,0.6,0,0.6,0.5,0,0.5,-0.1") != std::string::npos);
  }
  CHECK_THROWS_AS(report({}), ConfigError);
}

TEST_CASE("short experiment writes a complete bundle") {
  RunConfig cfg = case1_config();
  cfg.iis.ensemble_size = 24;
  cfg.iis.gp.n_replace = 4;
  cfg.iis.max_iterations = 2;
  const std::string dir = test::scratch_dir("experiment");
  const RunSummary s = run_experiment(cfg, Algorithm::iis, dir);
  CHECK(s.evaluations == s.iterations * 28);
  CHECK(s.parameters.size() == 11);
  for (const char* f : {"truth.csv", "observations.csv", "config.json", "likelihoods.csv",
                        "trace.csv", "refinement.csv", "final_ensemble.csv", "summary.csv",
                        "summary.json"})
    CHECK_MESSAGE(fs::exists(fs::path(dir) / f), f);
  CHECK(load_config(dir + "/config.json") == cfg);

  // A second run reuses the stored truth and reproduces the summary.
  const std::string first = test::slurp(dir + "/summary.csv");
  run_experiment(cfg, Algorithm::iis, dir);
  CHECK(test::slurp(dir + "/summary.csv") == first);
}

TEST_CASE("command-line exit codes") {
  const std::string dir = test::scratch_dir("cli");
  CHECK(cli("--help") == 0);
  CHECK(cli("") == 1);
  CHECK(cli("run case1 bogus --out " + dir + "/x") == 1);
  CHECK(cli("run case9 iis --out " + dir + "/x") == 1);
  CHECK(cli("generate-case case1 --out " + dir + "/gen") == 0);
  CHECK(fs::exists(dir + "/gen/observations.csv"));
  CHECK(cli("write-config case1 --out " + dir + "/c.json") == 0);
  CHECK(load_config(dir + "/c.json") == case1_config());
  CHECK(cli("run " + dir + "/c.json iis --out " + dir + "/run --ensemble-size 20 "
            "--n-replace 2 --max-iterations 1") == 2);
  CHECK(cli("run case1 iis --out " + dir + "/bad --ensemble-size 1") == 1);
  CHECK(cli("report " + dir + "/run --out " + dir + "/report.csv") == 0);
  CHECK(test::slurp(dir + "/report.csv").rfind("parameter,truth,mean_run", 0) == 0);
  CHECK(cli("report " + dir + "/missing") == 1);
}
