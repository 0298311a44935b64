#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nngls/inference.hpp"

namespace nngls {

enum class MeanFunction { f1_sine, f2_friedman, f2_rho, f3_15dim };

std::string mean_function_name(MeanFunction f);
MeanFunction mean_function_from_name(const std::string& name);
int mean_function_dim(MeanFunction f);

// f1(x) = 10 sin(pi x)
// f2(x) = (1/6)(10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5)
// f2(x, rho) = rho (10/3) sin(pi x1 x2) + (1 - rho)(1/3)(20 (x3 - 1/2)^2 + 10 x4 + 5 x5)
// f3: the 15-covariate composite
double mean_function_value(MeanFunction f, double rho, const Eigen::RowVectorXd& x);

enum class ErrorModel { gp_plus_nugget, fixed_surface };
enum class GpDraw { automatic, dense_cholesky, nngp_sequential };

struct SimulationSpec {
  MeanFunction f0 = MeanFunction::f1_sine;
  double rho = 0.5;  // interaction weight, f2_rho only
  int n = 1000;
  CovarianceParams theta;  // sigma2 == 0 allowed: pure-nugget error
  double domain_side = 10.0;
  std::uint64_t seed = 0;
  ErrorModel error_model = ErrorModel::gp_plus_nugget;
  int fixed_surface_knots = 100;
  GpDraw draw = GpDraw::automatic;  // dense Cholesky up to n = 5000, NNGP sequential (m = 20) above

  int dim() const { return mean_function_dim(f0); }
  void validate() const;
};

void to_json(nlohmann::json& j, const SimulationSpec& s);
void from_json(const nlohmann::json& j, SimulationSpec& s);

struct SimulatedData {
  SpatialDataset data;
  Eigen::VectorXd f_true;          // f0(X)
  Eigen::VectorXd spatial_effect;  // epsilon = Y - f0(X)
};

// X ~ Unif[0,1]^d, S ~ Unif[0, side]^2, Y = f0(X) + eps with eps a
// Matern GP plus nugget (or a Gaussian-predictive-process surface plus
// nugget in fixed_surface mode).
SimulatedData simulate(const SimulationSpec& spec, int threads = 0);

// mean squared difference; with `center` both curves are first centered by
// their own means
double mise(const Eigen::VectorXd& f_hat, const Eigen::VectorXd& f_true, bool center = false);

// MSE / population variance of the test responses
double rmse_relative(const Eigen::VectorXd& y_hat, const Eigen::VectorXd& y_test);

// mean over points of (u - l) + (2/alpha)[(l - t)^+ + (t - u)^+]
double interval_score(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                      double alpha = 0.05);

struct SemivariogramBin {
  double center = 0.0;
  double semivariance = 0.0;
  long count = 0;
};

// gamma(bin) = sum over pairs with distance in the bin of (r_i - r_j)^2 / (2 count)
std::vector<SemivariogramBin> empirical_semivariogram(const Eigen::MatrixXd& S, const Eigen::VectorXd& residual,
                                                      int n_bins, double max_dist);

enum class BenchmarkMethod { nngls, nn_ols };

std::string benchmark_method_name(BenchmarkMethod m);

struct BenchmarkScenario {
  std::string id;
  SimulationSpec sim;
};

struct MetricsReport {
  double mise = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  double interval_score = 0.0;
  double runtime_seconds = 0.0;
};

struct BenchmarkRow {
  std::string scenario_id;
  std::string method;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  int n_replicates = 0;
};

// Per scenario and method: simulate with a per-replicate derived seed, fit,
// predict on the internal test split, and aggregate MISE / relative RMSE /
// PI coverage / interval score / runtime. nn_ols is the m = 0 working
// covariance baseline.
std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkScenario>& scenarios,
                                        const std::vector<BenchmarkMethod>& methods, int replicates,
                                        const TrainConfig& base_config, double nu, bool center_mise = false);

void write_benchmark_csv(const std::string& path, const std::vector<BenchmarkRow>& rows);

}  // namespace nngls
