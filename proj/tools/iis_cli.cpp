// Command-line front end: generate-case, run, report, write-config.
//
// Exit codes: 0 success, 2 run finished without converging, 1 error.

#include "iis/error.hpp"
#include "iis/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

iis::RunConfig resolve_case(const std::string& name) {
  if (std::filesystem::exists(name) && std::filesystem::is_regular_file(name))
    return iis::load_config(name);
  return iis::preset(name);
}

void print_summary(const iis::RunSummary& s) {
  std::cout << "algorithm: " << iis::to_string(s.algorithm) << '\n'
            << "converged: " << (s.converged ? "yes" : "no") << '\n'
            << "iterations: " << s.iterations << '\n'
            << "evaluations: " << s.evaluations << '\n';
  if (s.field_rmse) std::cout << "log K field RMSE: " << *s.field_rmse << '\n';
  if (s.algorithm == iis::Algorithm::mcmc)
    std::cout << "max R-hat: " << s.rhat.maxCoeff()
              << "  acceptance: " << s.acceptance << '\n';
  std::cout << "parameter,truth,mean,sd\n";
  for (const auto& p : s.parameters)
    std::cout << p.name << ',' << p.truth << ',' << p.mean << ',' << p.sd << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse iterative simulation for contaminant source identification"};
  app.require_subcommand(1);

  std::string case_name, out_dir, algorithm_name;
  std::optional<std::uint64_t> seed, truth_seed, noise_seed;
  std::optional<int> ensemble_size, max_iterations, n_replace, chains;
  std::optional<std::int64_t> evaluations;
  bool zero_noise = false;

  auto* gen = app.add_subcommand("generate-case", "Write the true parameters and synthetic measurements");
  gen->add_option("case", case_name, "Preset name (case1, case2) or config JSON path")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--truth-seed", truth_seed, "Seed for prior-drawn true parameters");
  gen->add_option("--noise-seed", noise_seed, "Seed for measurement noise");
  gen->add_flag("--zero-noise", zero_noise, "Use noise-free measurements");

  auto* run = app.add_subcommand("run", "Run an inversion and write a result bundle");
  run->add_option("case", case_name, "Preset name (case1, case2) or config JSON path")->required();
  run->add_option("algorithm", algorithm_name, "iis or mcmc")
      ->required()
      ->check(CLI::IsMember({"iis", "mcmc"}));
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Algorithm seed");
  run->add_option("--truth-seed", truth_seed, "Seed for prior-drawn true parameters");
  run->add_option("--noise-seed", noise_seed, "Seed for measurement noise");
  run->add_flag("--zero-noise", zero_noise, "Use noise-free measurements");
  run->add_option("--ensemble-size", ensemble_size, "iIS ensemble size");
  run->add_option("--max-iterations", max_iterations, "iIS iteration cap");
  run->add_option("--n-replace", n_replace, "GP replacements per iteration");
  run->add_option("--evaluations", evaluations, "MCMC proposal budget");
  run->add_option("--chains", chains, "MCMC chain count");

  std::vector<std::string> bundles;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "Compare result bundles that share a truth");
  rep->add_option("bundles", bundles, "Bundle directories")->required();
  rep->add_option("--out", report_out, "CSV output path (default: stdout)");

  auto* cfg_cmd = app.add_subcommand("write-config", "Write a preset as editable JSON");
  cfg_cmd->add_option("case", case_name, "Preset name")->required();
  cfg_cmd->add_option("--out", out_dir, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*rep) {
      const std::string table = iis::report(bundles);
      if (report_out.empty()) {
        std::cout << table;
      } else {
        std::ofstream out(report_out);
        if (!out) throw iis::ConfigError("cannot open " + report_out + " for writing");
        out << table;
      }
      return 0;
    }

    iis::RunConfig cfg = resolve_case(case_name);
    if (*cfg_cmd) {
      iis::save_config(cfg, out_dir);
      return 0;
    }
    if (truth_seed) cfg.seeds.truth = *truth_seed;
    if (noise_seed) cfg.seeds.noise = *noise_seed;
    if (seed) cfg.seeds.algorithm = *seed;
    if (zero_noise) cfg.zero_noise = true;
    if (ensemble_size) cfg.iis.ensemble_size = *ensemble_size;
    if (max_iterations) cfg.iis.max_iterations = *max_iterations;
    if (n_replace) cfg.iis.gp.n_replace = *n_replace;
    if (evaluations) cfg.mcmc.evaluations = *evaluations;
    if (chains) cfg.mcmc.chains = *chains;
    cfg.iis.seed = cfg.mcmc.seed = cfg.seeds.algorithm;

    if (*gen) {
      const iis::ContaminantModel model(cfg);
      const iis::TruthRecord truth = iis::generate_case(cfg, model);
      iis::save_truth(truth, cfg.schema, out_dir);
      iis::save_config(cfg, (std::filesystem::path(out_dir) / "config.json").string());
      std::cout << "wrote " << truth.sigma.size() << " measurements to " << out_dir << '\n';
      return 0;
    }

    const iis::RunSummary summary =
        iis::run_experiment(cfg, iis::parse_algorithm(algorithm_name), out_dir);
    print_summary(summary);
    return summary.converged ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
