#include "iis/harness.hpp"

#include "iis/error.hpp"
#include "iis/likelihood.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace iis {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Presets

namespace {

ParameterSchema source_schema() {
  ParameterSchema schema;
  schema.slots.push_back({"x_s", Prior::uniform, 3.0, 5.0});
  schema.slots.push_back({"y_s", Prior::uniform, 4.0, 6.0});
  for (int i = 1; i <= 6; ++i)
    schema.slots.push_back({"S_s" + std::to_string(i), Prior::uniform, 0.0, 8.0});
  return schema;
}

void sync_seeds(RunConfig& cfg) {
  cfg.iis.seed = cfg.seeds.algorithm;
  cfg.mcmc.seed = cfg.seeds.algorithm;
}

}  // namespace

RunConfig case1_config() {
  RunConfig cfg;
  cfg.name = "case1";
  cfg.conductivity = ConductivityModel::zonated;
  // Zone 1 holds the source area; zones 2 and 3 split the downstream part
  // along y = 5. The layout approximates the three-zone setup and is not
  // digitized from a figure.
  cfg.zones = {{0.0, 8.0, 0.0, 10.0}, {8.0, 20.0, 5.0, 10.0}, {8.0, 20.0, 0.0, 5.0}};
  cfg.schema = source_schema();
  for (int i = 1; i <= 3; ++i)
    cfg.schema.slots.push_back({"Y" + std::to_string(i), Prior::uniform, 1.0, 3.0});
  cfg.truth = {3.156, 4.770, 6.239, 5.667, 4.728, 3.016,
               3.151, 3.427, 1.352, 2.722, 2.312};
  // Downstream transect around the expected plume path.
  cfg.wells = {{"W1", 5.5, 4.5},
               {"W2", 6.5, 5.25},
               {"W3", 7.5, 4.25},
               {"W4", 9.0, 5.0},
               {"W5", 12.0, 4.75}};
  cfg.observation_times = {2.0, 4.0, 6.0, 8.0, 10.0};
  cfg.noise = {0.01, 0.05};
  sync_seeds(cfg);
  return cfg;
}

RunConfig case2_config() {
  RunConfig cfg = case1_config();
  cfg.name = "case2";
  cfg.conductivity = ConductivityModel::kl;
  cfg.zones.clear();
  cfg.n_kl = 100;
  cfg.schema = source_schema();
  for (int i = 1; i <= cfg.n_kl; ++i)
    cfg.schema.slots.push_back({"xi" + std::to_string(i), Prior::standard_normal, 0.0, 0.0});
  // Source truth as in case 1; the KL coefficients are drawn with seeds.truth.
  cfg.truth.resize(8);
  // Regular 8 x 5 lattice.
  cfg.wells.clear();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 5; ++j)
      cfg.wells.push_back({"W" + std::to_string(i * 5 + j + 1), 1.25 + 2.5 * i,
                           1.0 + 2.0 * j});
  cfg.noise = {0.001, 0.005};
  cfg.cache_dir = ".iis_cache";
  sync_seeds(cfg);
  return cfg;
}

RunConfig preset(const std::string& name) {
  if (name == "case1") return case1_config();
  if (name == "case2") return case2_config();
  throw ConfigError("unknown preset '" + name + "' (expected case1 or case2)");
}

void RunConfig::validate() const {
  grid.validate();
  physics.validate();
  schema.validate();
  noise.validate();
  iis.validate();
  mcmc.validate();
  if (schema.size() < 8) throw ConfigError("schema needs the 8 source slots first");
  if (conductivity == ConductivityModel::zonated) {
    if (zones.empty()) throw ConfigError("zonated conductivity needs zones");
    if (schema.size() != 8 + static_cast<int>(zones.size()))
      throw ConfigError("schema must have one conductivity slot per zone");
  } else {
    covariance.validate();
    if (schema.size() != 8 + n_kl)
      throw ConfigError("schema must have one slot per KL term");
  }
  if (static_cast<int>(truth.size()) > schema.size())
    throw ConfigError("more truth values than parameter slots");
  if (wells.empty()) throw ConfigError("no wells configured");
  for (const auto& w : wells)
    if (!grid.contains(w.x, w.y))
      throw ConfigError("well '" + w.name + "' lies outside the domain");
  if (observation_times.empty()) throw ConfigError("no observation times");
}

bool RunConfig::operator==(const RunConfig& o) const {
  auto zones_equal = [](const std::vector<Zone>& a, const std::vector<Zone>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].x0 != b[i].x0 || a[i].x1 != b[i].x1 || a[i].y0 != b[i].y0 ||
          a[i].y1 != b[i].y1)
        return false;
    return true;
  };
  return name == o.name && grid == o.grid && physics == o.physics &&
         transport.t_end == o.transport.t_end && transport.dt == o.transport.dt &&
         conductivity == o.conductivity && zones_equal(zones, o.zones) &&
         covariance == o.covariance && n_kl == o.n_kl && schema == o.schema &&
         truth == o.truth && wells == o.wells &&
         observation_times == o.observation_times && noise == o.noise &&
         zero_noise == o.zero_noise && iis == o.iis && mcmc == o.mcmc &&
         seeds == o.seeds && cache_dir == o.cache_dir;
}

// ---------------------------------------------------------------------------
// JSON

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["grid"] = {{"nx", cfg.grid.nx},         {"ny", cfg.grid.ny},
               {"lx", cfg.grid.lx},         {"ly", cfg.grid.ly},
               {"head_left", cfg.grid.head_left},
               {"head_right", cfg.grid.head_right}};
  j["physics"] = {{"porosity", cfg.physics.porosity},
                  {"alpha_l", cfg.physics.alpha_l},
                  {"alpha_t", cfg.physics.alpha_t},
                  {"cross_dispersion", cfg.physics.cross_dispersion},
                  {"advection", cfg.physics.advection == Advection::upwind ? "upwind" : "hybrid"}};
  j["transport"] = {{"t_end", cfg.transport.t_end}, {"dt", cfg.transport.dt}};
  if (cfg.conductivity == ConductivityModel::zonated) {
    json zones = json::array();
    for (const auto& z : cfg.zones)
      zones.push_back({{"x0", z.x0}, {"x1", z.x1}, {"y0", z.y0}, {"y1", z.y1}});
    j["conductivity"] = {{"model", "zonated"}, {"zones", zones}};
  } else {
    j["conductivity"] = {{"model", "kl"},
                         {"variance", cfg.covariance.variance},
                         {"length_x", cfg.covariance.length_x},
                         {"length_y", cfg.covariance.length_y},
                         {"mean", cfg.covariance.mean},
                         {"n_kl", cfg.n_kl}};
  }
  json params = json::array();
  for (const auto& s : cfg.schema.slots) {
    json p = {{"name", s.name},
              {"prior", s.bounded() ? "uniform" : "standard_normal"}};
    if (s.bounded()) {
      p["lower"] = s.lower;
      p["upper"] = s.upper;
    }
    params.push_back(p);
  }
  j["parameters"] = params;
  j["truth"] = cfg.truth;
  json wells = json::array();
  for (const auto& w : cfg.wells)
    wells.push_back({{"name", w.name}, {"x", w.x}, {"y", w.y}});
  j["wells"] = wells;
  j["observation_times"] = cfg.observation_times;
  j["noise"] = {{"sigma_head", cfg.noise.sigma_head},
                {"sigma_concentration", cfg.noise.sigma_concentration},
                {"zero_noise", cfg.zero_noise}};
  const auto& g = cfg.iis.gp;
  j["iis"] = {{"ensemble_size", cfg.iis.ensemble_size},
              {"max_iterations", cfg.iis.max_iterations},
              {"stop_fraction", cfg.iis.stop.fraction},
              {"outlier_iqr", cfg.iis.stop.outlier_iqr},
              {"n_replace", g.n_replace},
              {"refit_every", g.refit_every},
              {"guard_replacement", g.guard_replacement},
              {"nugget", g.nugget},
              {"length_candidates", g.length_candidates},
              {"length_min", g.length_min},
              {"length_max", g.length_max},
              {"pca_variance", g.pca_variance}};
  j["mcmc"] = {{"chains", cfg.mcmc.chains},
               {"evaluations", cfg.mcmc.evaluations},
               {"burn_in", cfg.mcmc.burn_in},
               {"archive_factor", cfg.mcmc.archive_factor},
               {"archive_thin", cfg.mcmc.archive_thin},
               {"jitter", cfg.mcmc.jitter},
               {"jump_every", cfg.mcmc.jump_every},
               {"refresh_every", cfg.mcmc.refresh_every}};
  j["seeds"] = {{"truth", cfg.seeds.truth},
                {"noise", cfg.seeds.noise},
                {"algorithm", cfg.seeds.algorithm}};
  j["cache_dir"] = cfg.cache_dir;
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    RunConfig cfg;
    cfg.name = j.value("name", "custom");
    const auto& gj = j.at("grid");
    cfg.grid = {gj.at("nx"), gj.at("ny"), gj.at("lx"), gj.at("ly"),
                gj.at("head_left"), gj.at("head_right")};
    const auto& pj = j.at("physics");
    cfg.physics = {pj.at("porosity"), pj.at("alpha_l"), pj.at("alpha_t"),
                   pj.value("cross_dispersion", true)};
    const std::string advection = pj.value("advection", "hybrid");
    if (advection == "upwind") cfg.physics.advection = Advection::upwind;
    else if (advection != "hybrid") throw ConfigError("unknown advection scheme '" + advection + "'");
    cfg.transport.t_end = j.at("transport").at("t_end");
    cfg.transport.dt = j.at("transport").at("dt");
    const auto& cj = j.at("conductivity");
    const std::string model = cj.at("model");
    if (model == "zonated") {
      cfg.conductivity = ConductivityModel::zonated;
      for (const auto& z : cj.at("zones"))
        cfg.zones.push_back({z.at("x0"), z.at("x1"), z.at("y0"), z.at("y1")});
    } else if (model == "kl") {
      cfg.conductivity = ConductivityModel::kl;
      cfg.covariance = {cj.at("variance"), cj.at("length_x"), cj.at("length_y"),
                        cj.at("mean")};
      cfg.n_kl = cj.at("n_kl");
    } else {
      throw ConfigError("unknown conductivity model '" + model + "'");
    }
    for (const auto& p : j.at("parameters")) {
      ParameterSlot s;
      s.name = p.at("name");
      const std::string prior = p.at("prior");
      if (prior == "uniform") {
        s.prior = Prior::uniform;
        s.lower = p.at("lower");
        s.upper = p.at("upper");
      } else if (prior == "standard_normal") {
        s.prior = Prior::standard_normal;
        s.lower = s.upper = 0.0;
      } else {
        throw ConfigError("unknown prior '" + prior + "'");
      }
      cfg.schema.slots.push_back(s);
    }
    cfg.truth = j.value("truth", std::vector<double>{});
    for (const auto& w : j.at("wells"))
      cfg.wells.push_back({w.at("name"), w.at("x"), w.at("y")});
    cfg.observation_times = j.at("observation_times").get<std::vector<double>>();
    const auto& nj = j.at("noise");
    cfg.noise = {nj.at("sigma_head"), nj.at("sigma_concentration")};
    cfg.zero_noise = nj.value("zero_noise", false);
    const auto& ij = j.at("iis");
    cfg.iis.ensemble_size = ij.at("ensemble_size");
    cfg.iis.max_iterations = ij.at("max_iterations");
    cfg.iis.stop.fraction = ij.at("stop_fraction");
    cfg.iis.stop.outlier_iqr = ij.at("outlier_iqr");
    cfg.iis.gp.n_replace = ij.at("n_replace");
    cfg.iis.gp.refit_every = ij.at("refit_every");
    cfg.iis.gp.guard_replacement = ij.at("guard_replacement");
    cfg.iis.gp.nugget = ij.at("nugget");
    cfg.iis.gp.length_candidates = ij.at("length_candidates");
    cfg.iis.gp.length_min = ij.at("length_min");
    cfg.iis.gp.length_max = ij.at("length_max");
    cfg.iis.gp.pca_variance = ij.at("pca_variance");
    const auto& mj = j.at("mcmc");
    cfg.mcmc.chains = mj.at("chains");
    cfg.mcmc.evaluations = mj.at("evaluations");
    cfg.mcmc.burn_in = mj.at("burn_in");
    cfg.mcmc.archive_factor = mj.at("archive_factor");
    cfg.mcmc.archive_thin = mj.at("archive_thin");
    cfg.mcmc.jitter = mj.at("jitter");
    cfg.mcmc.jump_every = mj.value("jump_every", cfg.mcmc.jump_every);
    cfg.mcmc.refresh_every = mj.value("refresh_every", cfg.mcmc.refresh_every);
    const auto& sj = j.at("seeds");
    cfg.seeds = {sj.at("truth"), sj.at("noise"), sj.at("algorithm")};
    cfg.cache_dir = j.value("cache_dir", "");
    sync_seeds(cfg);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << config_to_json(cfg);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

// ---------------------------------------------------------------------------
// Forward model

ContaminantModel::ContaminantModel(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  cfg_.transport.output_times = cfg_.observation_times;
  if (cfg_.conductivity == ConductivityModel::kl) {
    basis_ = std::make_shared<KLBasis>(
        cfg_.cache_dir.empty()
            ? build_kl_basis(cfg_.grid, cfg_.covariance, cfg_.n_kl)
            : cached_kl_basis(cfg_.cache_dir, cfg_.grid, cfg_.covariance, cfg_.n_kl));
  }
}

int ContaminantModel::output_count() const {
  const auto nw = static_cast<int>(cfg_.wells.size());
  return nw + nw * static_cast<int>(cfg_.observation_times.size());
}

SourceSpec ContaminantModel::source(const Eigen::VectorXd& m) const {
  SourceSpec s;
  s.x = m[0];
  s.y = m[1];
  s.strengths.assign(m.data() + 2, m.data() + source_slots_);
  return s;
}

ConductivityField ContaminantModel::conductivity(const Eigen::VectorXd& m) const {
  if (basis_) return synthesize_field(*basis_, m.tail(cfg_.n_kl));
  const auto nz = static_cast<int>(cfg_.zones.size());
  std::vector<double> y(m.data() + source_slots_, m.data() + source_slots_ + nz);
  return zonated_field(cfg_.grid, cfg_.zones, y);
}

ContaminantModel::Simulation ContaminantModel::simulate(const Eigen::VectorXd& m) const {
  if (m.size() != parameter_count())
    throw ShapeError("contaminant model: wrong parameter count");
  Simulation sim;
  sim.field = conductivity(m);
  sim.head = solve_steady_flow(cfg_.grid, sim.field);
  const VelocityField v =
      darcy_velocity(cfg_.grid, sim.field, sim.head, cfg_.physics.porosity);
  sim.transport =
      simulate_transport(cfg_.grid, v, cfg_.physics, source(m), cfg_.transport);
  sim.observations = observe(cfg_.grid, sim.head, sim.transport.snapshots,
                             cfg_.wells, cfg_.observation_times);
  return sim;
}

Eigen::VectorXd ContaminantModel::evaluate(const Eigen::VectorXd& m) const {
  return simulate(m).observations.values;
}

// ---------------------------------------------------------------------------
// Truth

MeasurementSet TruthRecord::measurements() const {
  return {noisy(), sigma, noise_free.info};
}

TruthRecord generate_case(const RunConfig& cfg, const ContaminantModel& model) {
  const ParameterSchema& schema = cfg.schema;
  TruthRecord rec;
  rec.parameters = draw_prior(schema, 2, derive_seed(cfg.seeds.truth, 0)).col(0);
  for (std::size_t i = 0; i < cfg.truth.size(); ++i)
    rec.parameters[static_cast<Eigen::Index>(i)] = cfg.truth[i];
  rec.noise_free = model.simulate(rec.parameters).observations;
  rec.sigma = cfg.noise.measurements(rec.noise_free).sigma;
  rec.noise = Eigen::VectorXd::Zero(rec.sigma.size());
  if (!cfg.zero_noise) {
    std::mt19937_64 rng(derive_seed(cfg.seeds.noise, 0));
    std::normal_distribution<double> normal;
    for (Eigen::Index k = 0; k < rec.noise.size(); ++k)
      rec.noise[k] = rec.sigma[k] * normal(rng);
  }
  return rec;
}

void save_truth(const TruthRecord& truth, const ParameterSchema& schema,
                const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "truth.csv");
    out << "parameter,value\n" << std::setprecision(17);
    for (int i = 0; i < schema.size(); ++i)
      out << schema.slots[i].name << ',' << truth.parameters[i] << '\n';
  }
  std::ofstream out(fs::path(dir) / "observations.csv");
  out << "index,kind,well,time,noise_free,noise,noisy,sigma\n"
      << std::setprecision(17);
  for (std::size_t k = 0; k < truth.noise_free.info.size(); ++k) {
    const auto& info = truth.noise_free.info[k];
    const auto e = static_cast<Eigen::Index>(k);
    out << k << ',' << (info.kind == Quantity::head ? "head" : "concentration")
        << ',' << info.well << ',' << info.time << ','
        << truth.noise_free.values[e] << ',' << truth.noise[e] << ','
        << truth.noise_free.values[e] + truth.noise[e] << ',' << truth.sigma[e]
        << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::optional<TruthRecord> load_truth(const std::string& dir) {
  const fs::path tp = fs::path(dir) / "truth.csv", op = fs::path(dir) / "observations.csv";
  if (!fs::exists(tp) || !fs::exists(op)) return std::nullopt;
  TruthRecord rec;
  const auto truth_rows = read_csv(tp);
  rec.parameters.resize(static_cast<Eigen::Index>(truth_rows.size()));
  for (std::size_t i = 0; i < truth_rows.size(); ++i)
    rec.parameters[static_cast<Eigen::Index>(i)] = std::stod(truth_rows[i].at(1));
  const auto obs_rows = read_csv(op);
  const auto n = static_cast<Eigen::Index>(obs_rows.size());
  rec.noise_free.values.resize(n);
  rec.noise.resize(n);
  rec.sigma.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& r = obs_rows[static_cast<std::size_t>(k)];
    rec.noise_free.info.push_back(
        {r.at(1) == "head" ? Quantity::head : Quantity::concentration,
         std::stoi(r.at(2)), std::stod(r.at(3))});
    rec.noise_free.values[k] = std::stod(r.at(4));
    rec.noise[k] = std::stod(r.at(5));
    rec.sigma[k] = std::stod(r.at(7));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Experiments

Algorithm parse_algorithm(const std::string& name) {
  if (name == "iis") return Algorithm::iis;
  if (name == "mcmc") return Algorithm::mcmc;
  throw ConfigError("unknown algorithm '" + name + "' (expected iis or mcmc)");
}

std::string to_string(Algorithm algorithm) {
  return algorithm == Algorithm::iis ? "iis" : "mcmc";
}

namespace {

std::vector<ParameterSummary> summarize(const ParameterSchema& schema,
                                        const Eigen::VectorXd& truth,
                                        const Eigen::MatrixXd& samples) {
  const Eigen::VectorXd mean = samples.rowwise().mean();
  const double denom = static_cast<double>(std::max<Eigen::Index>(1, samples.cols() - 1));
  const Eigen::VectorXd sd =
      ((samples.colwise() - mean).cwiseAbs2().rowwise().sum() / denom).cwiseSqrt();
  std::vector<ParameterSummary> out;
  for (int i = 0; i < schema.size(); ++i)
    out.push_back({schema.slots[i].name, truth[i], mean[i], sd[i]});
  return out;
}

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

void write_summary(const RunSummary& summary, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "summary.csv");
    out << "parameter,truth,mean,sd\n";
    for (const auto& p : summary.parameters)
      out << p.name << ',' << format_number(p.truth) << ','
          << format_number(p.mean) << ',' << format_number(p.sd) << '\n';
  }
  json j;
  j["algorithm"] = to_string(summary.algorithm);
  j["converged"] = summary.converged;
  j["iterations"] = summary.iterations;
  j["evaluations"] = summary.evaluations;
  j["wall_seconds"] = summary.wall_seconds;
  if (summary.field_rmse) j["field_rmse"] = *summary.field_rmse;
  if (summary.best_field_rmse) j["best_field_rmse"] = *summary.best_field_rmse;
  if (summary.prior_field_rmse) j["prior_field_rmse"] = *summary.prior_field_rmse;
  if (summary.rhat.size() > 0)
    j["rhat"] = std::vector<double>(summary.rhat.data(),
                                    summary.rhat.data() + summary.rhat.size());
  if (summary.algorithm == Algorithm::mcmc) j["acceptance"] = summary.acceptance;
  std::ofstream out(fs::path(dir) / "summary.json");
  out << j.dump(2) << '\n';
}

RunSummary run_experiment(const RunConfig& cfg_in, Algorithm algorithm,
                          const std::string& out_dir) {
  RunConfig cfg = cfg_in;
  sync_seeds(cfg);
  const auto start = std::chrono::steady_clock::now();
  const ContaminantModel model(cfg);
  fs::create_directories(out_dir);

  std::optional<TruthRecord> truth = load_truth(out_dir);
  if (!truth || truth->parameters.size() != cfg.schema.size() ||
      truth->noise_free.values.size() != model.output_count()) {
    truth = generate_case(cfg, model);
    save_truth(*truth, cfg.schema, out_dir);
  }
  const MeasurementSet d = truth->measurements();
  save_config(cfg, (fs::path(out_dir) / "config.json").string());

  RunSummary summary;
  summary.algorithm = algorithm;
  Eigen::MatrixXd posterior;
  std::optional<Eigen::VectorXd> best_member;
  if (algorithm == Algorithm::iis) {
    IISResult r = run_iis(model, cfg.schema, d, cfg.iis);
    summary.converged = r.converged;
    summary.iterations = r.iterations;
    summary.evaluations = r.evaluations;
    posterior = r.parameters;
    const auto dir = fs::path(out_dir);
    write_likelihood_csv((dir / "likelihoods.csv").string(), r.records);
    write_trace_csv((dir / "trace.csv").string(), cfg.schema, r.records);
    for (std::size_t i = 0; i < r.records.size(); ++i)
      write_refinement_csv((dir / "refinement.csv").string(), r.records[i].iteration,
                           r.records[i].refinement, i > 0);
    if (r.records.empty())
      write_refinement_csv((dir / "refinement.csv").string(), 0, {}, false);
    write_ensemble_csv((dir / "final_ensemble.csv").string(), cfg.schema, r.parameters);
    Eigen::Index best;
    log_likelihoods(r.outputs, d).maxCoeff(&best);
    best_member = r.parameters.col(best);
  } else {
    const MCMCResult r = run_chain(make_log_posterior(model, cfg.schema, d),
                                   cfg.schema, cfg.mcmc);
    summary.converged = (r.rhat.array() <= 1.1).all();
    summary.iterations = static_cast<int>(r.generations);
    summary.evaluations = r.evaluations;
    summary.rhat = r.rhat;
    summary.acceptance = r.acceptance;
    const Eigen::Index kept = r.samples.front().cols();
    posterior.resize(cfg.schema.size(), kept * static_cast<Eigen::Index>(r.samples.size()));
    for (std::size_t c = 0; c < r.samples.size(); ++c)
      posterior.middleCols(static_cast<Eigen::Index>(c) * kept, kept) = r.samples[c];
    write_chain_csv((fs::path(out_dir) / "chain.csv").string(), cfg.schema, r);
    write_ensemble_csv((fs::path(out_dir) / "final_ensemble.csv").string(),
                       cfg.schema, posterior);
  }
  summary.parameters = summarize(cfg.schema, truth->parameters, posterior);

  if (const KLBasis* basis = model.basis()) {
    const Eigen::VectorXd true_field = model.conductivity(truth->parameters).log_k;
    // The log K field is affine in the KL coefficients, so the ensemble-mean
    // field is the field of the mean coefficients.
    const Eigen::VectorXd mean_m = posterior.rowwise().mean();
    const Eigen::VectorXd est = model.conductivity(mean_m).log_k;
    summary.field_rmse = rmse(est, true_field);
    summary.prior_field_rmse =
        rmse(Eigen::VectorXd::Constant(true_field.size(), basis->cov.mean), true_field);
    if (best_member)
      summary.best_field_rmse = rmse(model.conductivity(*best_member).log_k, true_field);
    write_field_csv((fs::path(out_dir) / "logk_truth.csv").string(), cfg.grid, true_field);
    write_field_csv((fs::path(out_dir) / "logk_estimate.csv").string(), cfg.grid, est);
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_summary(summary, out_dir);
  return summary;
}

BundleSummary read_bundle(const std::string& dir) {
  BundleSummary b;
  b.label = fs::path(dir).filename().string();
  if (b.label.empty()) b.label = fs::path(dir).parent_path().filename().string();
  for (const auto& r : read_csv(fs::path(dir) / "summary.csv"))
    b.parameters.push_back(
        {r.at(0), std::stod(r.at(1)), std::stod(r.at(2)), std::stod(r.at(3))});
  const fs::path js = fs::path(dir) / "summary.json";
  if (fs::exists(js)) {
    std::ifstream in(js);
    const json j = json::parse(in);
    if (j.contains("field_rmse")) b.field_rmse = j["field_rmse"].get<double>();
  }
  return b;
}

std::string report(const std::vector<std::string>& bundle_dirs) {
  if (bundle_dirs.empty()) throw ConfigError("report needs at least one bundle");
  std::vector<BundleSummary> bundles;
  for (const auto& dir : bundle_dirs) bundles.push_back(read_bundle(dir));
  const auto& ref = bundles.front();
  for (const auto& b : bundles) {
    if (b.parameters.size() != ref.parameters.size())
      throw ConfigError("bundles do not share a truth record");
    for (std::size_t i = 0; i < b.parameters.size(); ++i)
      if (b.parameters[i].name != ref.parameters[i].name ||
          b.parameters[i].truth != ref.parameters[i].truth)
        throw ConfigError("bundles do not share a truth record");
  }
  std::ostringstream out;
  out << "parameter,truth";
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    const auto& l = bundles[b].label;
    out << ",mean_" << l << ",sd_" << l << ",error_" << l;
    if (b > 0) out << ",dmean_" << l;
  }
  out << '\n';
  for (std::size_t i = 0; i < ref.parameters.size(); ++i) {
    out << ref.parameters[i].name << ',' << format_number(ref.parameters[i].truth);
    for (std::size_t b = 0; b < bundles.size(); ++b) {
      const auto& p = bundles[b].parameters[i];
      out << ',' << format_number(p.mean) << ',' << format_number(p.sd) << ','
          << format_number(p.mean - p.truth);
      if (b > 0) out << ',' << format_number(p.mean - ref.parameters[i].mean);
    }
    out << '\n';
  }
  if (ref.field_rmse) {
    out << "log_k_field_rmse,0";
    for (std::size_t b = 0; b < bundles.size(); ++b) {
      const double v = bundles[b].field_rmse.value_or(std::nan(""));
      out << ',' << format_number(v) << ",0," << format_number(v);
      if (b > 0)
        out << ',' << format_number(v - *ref.field_rmse);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace iis
