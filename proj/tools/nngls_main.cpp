#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nngls/dataset.hpp"
#include "nngls/experiments.hpp"
#include "nngls/inference.hpp"
#include "nngls/trainer.hpp"
#include "nngls/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInputError = 2;
constexpr int kExitNumericalError = 3;

struct ManifestWriter {
  std::string command;
  json config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  // written atomically: temp file in the same directory, then rename
  void write(const fs::path& dir) const {
    json j;
    j["command"] = command;
    j["version"] = nngls::kVersion;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const fs::path tmp = dir / "manifest.json.tmp";
    const fs::path final_path = dir / "manifest.json";
    {
      std::ofstream out(tmp);
      if (!out) throw std::invalid_argument("cannot write " + tmp.string());
      out << j.dump(2) << "\n";
    }
    fs::rename(tmp, final_path);
  }
};

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": invalid JSON (" + e.what() + ")");
  }
  return j;
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

nngls::TrainConfig load_train_config(const std::string& config_path) {
  if (config_path.empty()) return nngls::TrainConfig{};
  return load_json_file(config_path).get<nngls::TrainConfig>();
}

void write_predictions_csv(const std::string& path, const Eigen::MatrixXd& S0, const nngls::PredictionResult& pred) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << "s1,s2,y_hat,sigma0,pi_lower,pi_upper\n";
  for (Eigen::Index i = 0; i < pred.y_hat.size(); ++i) {
    out << nngls::format_double(S0(i, 0)) << "," << nngls::format_double(S0(i, 1)) << ","
        << nngls::format_double(pred.y_hat(i)) << "," << nngls::format_double(pred.sigma0(i)) << ","
        << nngls::format_double(pred.pi_lower(i)) << "," << nngls::format_double(pred.pi_upper(i)) << "\n";
  }
}

int cmd_simulate(const std::string& spec_path, const std::string& out, std::int64_t seed_override, int threads) {
  ManifestWriter manifest;
  manifest.command = "simulate";
  manifest.inputs = {spec_path};

  nngls::SimulationSpec spec = load_json_file(spec_path).get<nngls::SimulationSpec>();
  if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
  manifest.seed = spec.seed;
  manifest.config = spec;

  const nngls::SimulatedData sim = nngls::simulate(spec, threads);
  const fs::path dir = prepare_out_dir(out);
  nngls::write_training_csv((dir / "data.csv").string(), sim.data);
  {
    std::ofstream truth(dir / "truth.csv");
    if (!truth) throw std::invalid_argument("cannot write truth.csv");
    truth << "f_true,spatial_effect\n";
    for (Eigen::Index i = 0; i < sim.f_true.size(); ++i) {
      truth << nngls::format_double(sim.f_true(i)) << "," << nngls::format_double(sim.spatial_effect(i)) << "\n";
    }
  }
  manifest.outputs = {(dir / "data.csv").string(), (dir / "truth.csv").string()};
  manifest.write(dir);
  std::cout << "wrote " << (dir / "data.csv").string() << " (" << sim.data.n() << " rows)\n";
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& config_path, double nu, int m_override,
            std::int64_t seed_override, const std::string& out, int threads) {
  ManifestWriter manifest;
  manifest.command = "fit";
  manifest.inputs = {data_path};
  if (!config_path.empty()) manifest.inputs.push_back(config_path);

  nngls::TrainConfig config = load_train_config(config_path);
  if (m_override >= 0) config.m = m_override;
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  if (threads > 0) config.threads = threads;
  config.validate();
  manifest.seed = config.seed;
  manifest.config = config;

  const nngls::SpatialDataset data = nngls::read_training_csv(data_path);
  const nngls::FitResult fit = nngls::fit_nngls(data, config, nu);

  const fs::path dir = prepare_out_dir(out);
  {
    std::ofstream model(dir / "model.json");
    if (!model) throw std::invalid_argument("cannot write model.json");
    model << fit.model_json().dump(2) << "\n";
  }
  fit.write_history_csv((dir / "history.csv").string());
  manifest.outputs = {(dir / "model.json").string(), (dir / "history.csv").string()};
  manifest.write(dir);
  std::cout << "fit complete: theta = (sigma2 " << fit.theta.sigma2 << ", phi " << fit.theta.phi << ", tau2 "
            << fit.theta.tau2 << "), " << fit.history.size() - 1 << " epochs\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& query_path,
                const std::string& out, int threads) {
  ManifestWriter manifest;
  manifest.command = "predict";
  manifest.inputs = {model_path, data_path, query_path};

  const nngls::PersistedModel persisted = nngls::model_from_json(load_json_file(model_path));
  const nngls::SpatialDataset data = nngls::read_training_csv(data_path);
  const nngls::QueryData query = nngls::read_query_csv(query_path);

  nngls::FitResult fit;
  fit.model = persisted.model;
  fit.theta = persisted.theta;
  fit.config.m = persisted.dag_m;
  fit.config.ordering = persisted.dag_ordering;
  fit.config.threads = threads;
  fit.init_seed = persisted.init_seed;
  manifest.config = {{"m", persisted.dag_m}, {"theta", persisted.theta}};
  manifest.seed = persisted.init_seed;

  const nngls::PredictionResult pred = nngls::predict(fit, data, query.X, query.S, 0.95, threads);
  const fs::path dir = prepare_out_dir(out);
  write_predictions_csv((dir / "predictions.csv").string(), query.S, pred);
  manifest.outputs = {(dir / "predictions.csv").string()};
  manifest.write(dir);
  std::cout << "wrote " << (dir / "predictions.csv").string() << " (" << pred.y_hat.size() << " rows)\n";
  return 0;
}

int cmd_bootstrap(const std::string& data_path, const std::string& query_path, const std::string& model_path,
                  const std::string& config_path, int B, double level, bool freeze_theta, double nu,
                  std::int64_t seed_override, const std::string& out, int threads) {
  ManifestWriter manifest;
  manifest.command = "bootstrap";
  manifest.inputs = {data_path, query_path};
  if (!model_path.empty()) manifest.inputs.push_back(model_path);
  if (!config_path.empty()) manifest.inputs.push_back(config_path);

  nngls::TrainConfig config = load_train_config(config_path);
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  if (threads > 0) config.threads = threads;
  config.validate();
  manifest.seed = config.seed;

  const nngls::SpatialDataset data = nngls::read_training_csv(data_path);
  const nngls::QueryData query = nngls::read_query_csv(query_path);

  nngls::FitResult fit;
  if (!model_path.empty()) {
    const nngls::PersistedModel persisted = nngls::model_from_json(load_json_file(model_path));
    fit.model = persisted.model;
    fit.theta = persisted.theta;
    fit.config = config;
    fit.config.m = persisted.dag_m;
    config.m = persisted.dag_m;
  } else {
    fit = nngls::fit_nngls(data, config, nu);
  }

  nngls::BootstrapConfig boot;
  boot.B = B;
  boot.level = level;
  boot.freeze_theta = freeze_theta;
  manifest.config = {{"train", config}, {"B", B}, {"level", level}, {"freeze_theta", freeze_theta}};

  const nngls::BootstrapBand band = nngls::bootstrap_ci(data, config, fit, boot, query.X);
  const fs::path dir = prepare_out_dir(out);
  {
    std::ofstream csv(dir / "band.csv");
    if (!csv) throw std::invalid_argument("cannot write band.csv");
    csv << "query_id,lower,upper\n";
    for (Eigen::Index i = 0; i < band.lower.size(); ++i) {
      csv << i << "," << nngls::format_double(band.lower(i)) << "," << nngls::format_double(band.upper(i)) << "\n";
    }
  }
  manifest.outputs = {(dir / "band.csv").string()};
  manifest.write(dir);
  std::cout << "wrote band.csv with " << band.B << " replicates (" << band.failed_replicates << " failed)\n";
  return 0;
}

int cmd_diagnose(const std::string& data_path, const std::string& model_path, const std::string& m_list_arg,
                 int bins, double max_dist, const std::string& out, int threads) {
  ManifestWriter manifest;
  manifest.command = "diagnose";
  manifest.inputs = {data_path};
  if (!model_path.empty()) manifest.inputs.push_back(model_path);

  const nngls::SpatialDataset data = nngls::read_training_csv(data_path);

  nngls::CovarianceParams theta{1.0, 1.0, 0.5, 0.1};
  Eigen::VectorXd residual = data.Y.array() - data.Y.mean();
  if (!model_path.empty()) {
    const nngls::PersistedModel persisted = nngls::model_from_json(load_json_file(model_path));
    theta = persisted.theta;
    residual = data.Y - nngls::forward(persisted.model, data.X);
  }

  std::vector<int> m_list;
  {
    std::stringstream ss(m_list_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) m_list.push_back(std::stoi(tok));
    }
  }
  if (m_list.empty()) throw std::invalid_argument("--m-list is empty");
  manifest.config = {{"m_list", m_list}, {"bins", bins}, {"max_dist", max_dist}, {"theta", theta}};

  const auto rows = nngls::discrepancy_diagnostics(data.S, theta, theta, m_list, threads);
  if (max_dist <= 0.0) {
    const double wx = data.S.col(0).maxCoeff() - data.S.col(0).minCoeff();
    const double wy = data.S.col(1).maxCoeff() - data.S.col(1).minCoeff();
    max_dist = 0.5 * std::sqrt(wx * wx + wy * wy);
  }
  const auto vario = nngls::empirical_semivariogram(data.S, residual, bins, max_dist);

  const fs::path dir = prepare_out_dir(out);
  {
    std::ofstream csv(dir / "discrepancy.csv");
    csv << "m,kld,lambda_min,lambda_max\n";
    for (const auto& row : rows) {
      csv << row.m << "," << nngls::format_double(row.kld) << "," << nngls::format_double(row.lambda_min) << ","
          << nngls::format_double(row.lambda_max) << "\n";
    }
  }
  {
    std::ofstream csv(dir / "semivariogram.csv");
    csv << "bin_center,semivariance,count\n";
    for (const auto& bin : vario) {
      csv << nngls::format_double(bin.center) << "," << nngls::format_double(bin.semivariance) << "," << bin.count
          << "\n";
    }
  }
  manifest.outputs = {(dir / "discrepancy.csv").string(), (dir / "semivariogram.csv").string()};
  manifest.write(dir);
  std::cout << "wrote discrepancy.csv (" << rows.size() << " rows) and semivariogram.csv\n";
  return 0;
}

int cmd_benchmark(const std::string& grid_path, const std::string& out, std::int64_t seed_override, int threads) {
  ManifestWriter manifest;
  manifest.command = "benchmark";
  manifest.inputs = {grid_path};

  const json grid = load_json_file(grid_path);
  std::vector<nngls::BenchmarkScenario> scenarios;
  for (const auto& s : grid.at("scenarios")) {
    nngls::BenchmarkScenario scenario;
    scenario.id = s.at("id").get<std::string>();
    scenario.sim = s.get<nngls::SimulationSpec>();
    scenarios.push_back(std::move(scenario));
  }
  const int replicates = grid.value("replicates", 1);
  nngls::TrainConfig config =
      grid.contains("config") ? grid.at("config").get<nngls::TrainConfig>() : nngls::TrainConfig{};
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  if (threads > 0) config.threads = threads;
  const double nu = grid.value("nu", 0.5);
  const bool center = grid.value("center_mise", false);
  std::vector<nngls::BenchmarkMethod> methods;
  if (grid.contains("methods")) {
    for (const auto& name : grid.at("methods")) {
      if (name == "nngls") {
        methods.push_back(nngls::BenchmarkMethod::nngls);
      } else if (name == "nn_ols") {
        methods.push_back(nngls::BenchmarkMethod::nn_ols);
      } else {
        throw std::invalid_argument("unknown method: " + name.get<std::string>());
      }
    }
  } else {
    methods = {nngls::BenchmarkMethod::nngls, nngls::BenchmarkMethod::nn_ols};
  }
  manifest.seed = config.seed;
  manifest.config = {{"replicates", replicates}, {"train", config}, {"nu", nu}, {"center_mise", center}};

  const auto rows = nngls::run_benchmark(scenarios, methods, replicates, config, nu, center);
  const fs::path dir = prepare_out_dir(out);
  nngls::write_benchmark_csv((dir / "report.csv").string(), rows);
  manifest.outputs = {(dir / "report.csv").string()};
  manifest.write(dir);
  std::cout << "wrote report.csv (" << rows.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NN-GLS: neural network estimation for spatial Gaussian process models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nngls::kVersion);

  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: NNGLS_THREADS or all cores)");

  auto* sim = app.add_subcommand("simulate", "draw a dataset from a simulation spec");
  std::string sim_spec, sim_out;
  std::int64_t sim_seed = -1;
  sim->add_option("--spec", sim_spec, "simulation spec JSON")->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "override the spec seed");

  auto* fit = app.add_subcommand("fit", "train NN-GLS on a dataset");
  std::string fit_data, fit_config, fit_out;
  double fit_nu = 0.5;
  int fit_m = -1;
  std::int64_t fit_seed = -1;
  fit->add_option("--data", fit_data, "training CSV (x1..xd,y,s1,s2)")->required();
  fit->add_option("--config", fit_config, "train config JSON");
  fit->add_option("--nu", fit_nu, "Matern smoothness (0.5, 1.5, 2.5)");
  fit->add_option("--m", fit_m, "neighbor budget override");
  fit->add_option("--seed", fit_seed, "seed override");
  fit->add_option("--out", fit_out, "output directory")->required();

  auto* pred = app.add_subcommand("predict", "kriging predictions at new locations");
  std::string pred_model, pred_data, pred_query, pred_out;
  pred->add_option("--model", pred_model, "model JSON from fit")->required();
  pred->add_option("--data", pred_data, "training CSV used for kriging")->required();
  pred->add_option("--query", pred_query, "query CSV (x1..xd,s1,s2)")->required();
  pred->add_option("--out", pred_out, "output directory")->required();

  auto* boot = app.add_subcommand("bootstrap", "spatial-bootstrap confidence band for the mean function");
  std::string boot_data, boot_query, boot_model, boot_config, boot_out;
  int boot_B = 100;
  double boot_level = 0.95, boot_nu = 0.5;
  bool boot_freeze = false;
  std::int64_t boot_seed = -1;
  boot->add_option("--data", boot_data, "training CSV")->required();
  boot->add_option("--query", boot_query, "query CSV with the covariates of interest")->required();
  boot->add_option("--model", boot_model, "optional point-fit model JSON (skips the initial fit)");
  boot->add_option("--config", boot_config, "train config JSON");
  boot->add_option("--B", boot_B, "bootstrap replicates");
  boot->add_option("--level", boot_level, "confidence level");
  boot->add_flag("--freeze-theta", boot_freeze, "keep theta fixed across replicates");
  boot->add_option("--nu", boot_nu, "Matern smoothness");
  boot->add_option("--seed", boot_seed, "seed override");
  boot->add_option("--out", boot_out, "output directory")->required();

  auto* diag = app.add_subcommand("diagnose", "discrepancy and semivariogram diagnostics");
  std::string diag_data, diag_model, diag_mlist = "0,5,10,20", diag_out;
  int diag_bins = 15;
  double diag_maxdist = 0.0;
  diag->add_option("--data", diag_data, "training CSV")->required();
  diag->add_option("--model", diag_model, "model JSON (for theta and residuals)");
  diag->add_option("--m-list", diag_mlist, "comma-separated neighbor sizes");
  diag->add_option("--bins", diag_bins, "semivariogram bins");
  diag->add_option("--max-dist", diag_maxdist, "semivariogram distance cap (default: half the diameter)");
  diag->add_option("--out", diag_out, "output directory")->required();

  auto* bench = app.add_subcommand("benchmark", "run a scenario grid and report metrics");
  std::string bench_grid, bench_out;
  std::int64_t bench_seed = -1;
  bench->add_option("--grid", bench_grid, "scenario grid JSON")->required();
  bench->add_option("--seed", bench_seed, "seed override");
  bench->add_option("--out", bench_out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(sim_spec, sim_out, sim_seed, threads);
    if (fit->parsed()) return cmd_fit(fit_data, fit_config, fit_nu, fit_m, fit_seed, fit_out, threads);
    if (pred->parsed()) return cmd_predict(pred_model, pred_data, pred_query, pred_out, threads);
    if (boot->parsed()) {
      return cmd_bootstrap(boot_data, boot_query, boot_model, boot_config, boot_B, boot_level, boot_freeze, boot_nu,
                           boot_seed, boot_out, threads);
    }
    if (diag->parsed()) {
      return cmd_diagnose(diag_data, diag_model, diag_mlist, diag_bins, diag_maxdist, diag_out, threads);
    }
    if (bench->parsed()) return cmd_benchmark(bench_grid, bench_out, bench_seed, threads);
    return kExitInputError;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericalError;
  }
}
