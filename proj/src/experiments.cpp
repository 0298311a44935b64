#include "nngls/experiments.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "nngls/guard.hpp"
#include "nngls/parallel.hpp"
#include "nngls/rng.hpp"

namespace nngls {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::string mean_function_name(MeanFunction f) {
  switch (f) {
    case MeanFunction::f1_sine:
      return "f1_sine";
    case MeanFunction::f2_friedman:
      return "f2_friedman";
    case MeanFunction::f2_rho:
      return "f2_rho";
    case MeanFunction::f3_15dim:
      return "f3_15dim";
  }
  return "f1_sine";
}

MeanFunction mean_function_from_name(const std::string& name) {
  if (name == "f1_sine") return MeanFunction::f1_sine;
  if (name == "f2_friedman") return MeanFunction::f2_friedman;
  if (name == "f2_rho") return MeanFunction::f2_rho;
  if (name == "f3_15dim") return MeanFunction::f3_15dim;
  throw std::invalid_argument("unknown mean function: " + name);
}

int mean_function_dim(MeanFunction f) {
  switch (f) {
    case MeanFunction::f1_sine:
      return 1;
    case MeanFunction::f2_friedman:
    case MeanFunction::f2_rho:
      return 5;
    case MeanFunction::f3_15dim:
      return 15;
  }
  return 1;
}

double mean_function_value(MeanFunction f, double rho, const Eigen::RowVectorXd& x) {
  switch (f) {
    case MeanFunction::f1_sine:
      return 10.0 * std::sin(kPi * x(0));
    case MeanFunction::f2_friedman:
      return (10.0 * std::sin(kPi * x(0) * x(1)) + 20.0 * (x(2) - 0.5) * (x(2) - 0.5) + 10.0 * x(3) + 5.0 * x(4)) / 6.0;
    case MeanFunction::f2_rho:
      return rho * (10.0 / 3.0) * std::sin(kPi * x(0) * x(1)) +
             (1.0 - rho) * (20.0 * (x(2) - 0.5) * (x(2) - 0.5) + 10.0 * x(3) + 5.0 * x(4)) / 3.0;
    case MeanFunction::f3_15dim:
      return (10.0 * std::sin(kPi * x(0) * x(1)) + 20.0 * (x(2) - 0.5) * (x(2) - 0.5) + 10.0 * x(3) + 5.0 * x(4) +
              3.0 / ((x(5) + 1.0) * (x(6) + 1.0)) + 4.0 * std::exp(x(7) * x(7)) + 30.0 * x(8) * x(8) + x(9) +
              5.0 * (std::exp(x(10)) * std::sin(kPi * x(11)) + std::exp(x(11)) * std::sin(kPi * x(10))) +
              10.0 * x(12) * x(12) * std::cos(kPi * x(13)) + 20.0 * std::pow(x(14), 4)) /
             6.0;
  }
  return 0.0;
}

void SimulationSpec::validate() const {
  if (n < 1) throw std::invalid_argument("simulation: n must be positive");
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("simulation: rho must lie in [0, 1]");
  if (!(domain_side > 0.0)) throw std::invalid_argument("simulation: domain side must be positive");
  if (fixed_surface_knots < 1) throw std::invalid_argument("simulation: need at least one knot");
  theta.validate(/*allow_zero_sigma2=*/true);
}

void to_json(nlohmann::json& j, const SimulationSpec& s) {
  j = nlohmann::json{{"f0", mean_function_name(s.f0)},
                     {"rho", s.rho},
                     {"n", s.n},
                     {"theta", s.theta},
                     {"domain", s.domain_side},
                     {"seed", s.seed},
                     {"error_model", s.error_model == ErrorModel::gp_plus_nugget ? "gp_plus_nugget" : "fixed_surface"},
                     {"fixed_surface_knots", s.fixed_surface_knots}};
}

void from_json(const nlohmann::json& j, SimulationSpec& s) {
  s = SimulationSpec{};
  s.f0 = mean_function_from_name(j.at("f0").get<std::string>());
  if (j.contains("rho")) j.at("rho").get_to(s.rho);
  j.at("n").get_to(s.n);
  s.theta = j.at("theta").get<CovarianceParams>();
  if (j.contains("domain")) j.at("domain").get_to(s.domain_side);
  if (j.contains("seed")) j.at("seed").get_to(s.seed);
  if (j.contains("error_model")) {
    const auto name = j.at("error_model").get<std::string>();
    if (name == "gp_plus_nugget") {
      s.error_model = ErrorModel::gp_plus_nugget;
    } else if (name == "fixed_surface") {
      s.error_model = ErrorModel::fixed_surface;
    } else {
      throw std::invalid_argument("unknown error model: " + name);
    }
  }
  if (j.contains("fixed_surface_knots")) j.at("fixed_surface_knots").get_to(s.fixed_surface_knots);
  s.validate();
}

namespace {

// zero-mean draw from the nugget-free Matern GP at the given locations
Eigen::VectorXd draw_spatial_gp(const Eigen::MatrixXd& S, const CovarianceParams& theta, GpDraw method, Rng& rng,
                                int threads) {
  const auto n = static_cast<int>(S.rows());
  if (theta.sigma2 == 0.0) return Eigen::VectorXd::Zero(n);
  CovarianceParams spatial = theta;
  spatial.tau2 = 0.0;
  const bool dense = method == GpDraw::dense_cholesky || (method == GpDraw::automatic && n <= 5000);

  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();

  if (dense) {
    const Eigen::MatrixXd C = cov_matrix(S, S, spatial, false);
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("simulate: spatial covariance not positive definite");
    }
    return Eigen::MatrixXd(llt.matrixL()) * z;
  }
  // sequential NNGP draw: eps = (I - B)^{-1} F^{1/2} z with nugget-free factors
  auto dag = std::make_shared<const NeighborDag>(build_dag(S, 20, Ordering::coordinate_sum, nullptr, threads));
  const NngpFactors factors = compute_factors(dag, S, spatial, threads);
  return correlate_back(factors, z);
}

Eigen::VectorXd draw_fixed_surface(const Eigen::MatrixXd& S, const SimulationSpec& spec, Rng& knot_rng, int threads) {
  // Gaussian predictive process: kriged interpolation of a parent GP
  // realized at a small set of knots
  CovarianceParams parent = spec.theta;
  parent.tau2 = 0.0;
  if (parent.sigma2 == 0.0) return Eigen::VectorXd::Zero(S.rows());
  const int k = spec.fixed_surface_knots;
  Eigen::MatrixXd knots(k, 2);
  for (int i = 0; i < k; ++i) {
    knots(i, 0) = knot_rng.uniform(0.0, spec.domain_side);
    knots(i, 1) = knot_rng.uniform(0.0, spec.domain_side);
  }
  const Eigen::MatrixXd Ck = cov_matrix(knots, knots, parent, false);
  Eigen::LLT<Eigen::MatrixXd> llt(Ck);
  if (llt.info() != Eigen::Success) throw std::runtime_error("simulate: knot covariance not positive definite");
  Eigen::VectorXd z(k);
  for (int i = 0; i < k; ++i) z(i) = knot_rng.normal();
  const Eigen::VectorXd w = Eigen::MatrixXd(llt.matrixL()) * z;
  const Eigen::VectorXd weights = llt.solve(w);

  Eigen::VectorXd surface(S.rows());
  parallel_for(static_cast<std::size_t>(S.rows()), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double acc = 0.0;
      for (int a = 0; a < k; ++a) {
        const double dx = S(ii, 0) - knots(a, 0);
        const double dy = S(ii, 1) - knots(a, 1);
        acc += matern(std::sqrt(dx * dx + dy * dy), parent) * weights(a);
      }
      surface(ii) = acc;
    }
  });
  return surface;
}

}  // namespace

SimulatedData simulate(const SimulationSpec& spec, int threads) {
  spec.validate();
  const int nthreads = resolve_threads(threads);
  const int n = spec.n;
  const int d = spec.dim();
  Rng rng(derive_seed(spec.seed, Stream::simulation));

  SimulatedData out;
  out.data.X.resize(n, d);
  out.data.S.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.data.X(i, j) = rng.uniform();
    out.data.S(i, 0) = rng.uniform(0.0, spec.domain_side);
    out.data.S(i, 1) = rng.uniform(0.0, spec.domain_side);
  }

  out.f_true.resize(n);
  for (int i = 0; i < n; ++i) out.f_true(i) = mean_function_value(spec.f0, spec.rho, out.data.X.row(i));

  Eigen::VectorXd eps;
  if (spec.error_model == ErrorModel::gp_plus_nugget) {
    eps = draw_spatial_gp(out.data.S, spec.theta, spec.draw, rng, nthreads);
  } else {
    Rng knot_rng(derive_seed(spec.seed, Stream::knots));
    eps = draw_fixed_surface(out.data.S, spec, knot_rng, nthreads);
  }
  if (spec.theta.tau2 > 0.0) {
    const double tau = std::sqrt(spec.theta.tau2);
    for (int i = 0; i < n; ++i) eps(i) += tau * rng.normal();
  }

  out.spatial_effect = eps;
  out.data.Y = out.f_true + eps;
  out.data.validate();
  return out;
}

double mise(const Eigen::VectorXd& f_hat, const Eigen::VectorXd& f_true, bool center) {
  if (f_hat.size() != f_true.size() || f_hat.size() == 0) throw std::invalid_argument("mise: size mismatch");
  if (!center) return (f_hat - f_true).squaredNorm() / static_cast<double>(f_hat.size());
  const Eigen::VectorXd a = f_hat.array() - f_hat.mean();
  const Eigen::VectorXd b = f_true.array() - f_true.mean();
  return (a - b).squaredNorm() / static_cast<double>(f_hat.size());
}

double rmse_relative(const Eigen::VectorXd& y_hat, const Eigen::VectorXd& y_test) {
  if (y_hat.size() != y_test.size() || y_hat.size() == 0) throw std::invalid_argument("rmse_relative: size mismatch");
  const double mse = (y_hat - y_test).squaredNorm() / static_cast<double>(y_hat.size());
  const double var = (y_test.array() - y_test.mean()).square().sum() / static_cast<double>(y_test.size());
  if (var == 0.0) throw std::invalid_argument("rmse_relative: constant test responses");
  return mse / var;
}

double interval_score(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                      double alpha) {
  if (lower.size() != upper.size() || lower.size() != truth.size() || lower.size() == 0) {
    throw std::invalid_argument("interval_score: size mismatch");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("interval_score: alpha must lie in (0, 1)");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    const double l = lower(i), u = upper(i), t = truth(i);
    double s = u - l;
    if (l > t) s += 2.0 / alpha * (l - t);
    if (t > u) s += 2.0 / alpha * (t - u);
    acc += s;
  }
  return acc / static_cast<double>(lower.size());
}

std::vector<SemivariogramBin> empirical_semivariogram(const Eigen::MatrixXd& S, const Eigen::VectorXd& residual,
                                                      int n_bins, double max_dist) {
  const auto n = static_cast<int>(S.rows());
  if (residual.size() != n) throw std::invalid_argument("empirical_semivariogram: size mismatch");
  if (n_bins < 1 || !(max_dist > 0.0)) throw std::invalid_argument("empirical_semivariogram: bad binning");
  std::vector<SemivariogramBin> bins(static_cast<std::size_t>(n_bins));
  const double width = max_dist / n_bins;
  for (int b = 0; b < n_bins; ++b) bins[static_cast<std::size_t>(b)].center = (b + 0.5) * width;
  std::vector<double> acc(static_cast<std::size_t>(n_bins), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = S(i, 0) - S(j, 0);
      const double dy = S(i, 1) - S(j, 1);
      const double dist = std::sqrt(dx * dx + dy * dy);
      const int b = static_cast<int>(dist / width);
      if (b < 0 || b >= n_bins) continue;
      const double diff = residual(i) - residual(j);
      acc[static_cast<std::size_t>(b)] += diff * diff;
      ++bins[static_cast<std::size_t>(b)].count;
    }
  }
  for (int b = 0; b < n_bins; ++b) {
    auto& bin = bins[static_cast<std::size_t>(b)];
    if (bin.count > 0) bin.semivariance = acc[static_cast<std::size_t>(b)] / (2.0 * static_cast<double>(bin.count));
  }
  return bins;
}

std::string benchmark_method_name(BenchmarkMethod m) { return m == BenchmarkMethod::nngls ? "nngls" : "nn_ols"; }

namespace {

struct Accumulator {
  std::vector<double> values;

  void add(double v) { values.push_back(v); }
  double mean() const {
    return values.empty() ? 0.0 : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
  double sd() const {
    if (values.size() < 2) return 0.0;
    const double mu = mean();
    double acc = 0.0;
    for (double v : values) acc += (v - mu) * (v - mu);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
};

}  // namespace

std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkScenario>& scenarios,
                                        const std::vector<BenchmarkMethod>& methods, int replicates,
                                        const TrainConfig& base_config, double nu, bool center_mise) {
  if (replicates < 1) throw std::invalid_argument("run_benchmark: need at least one replicate");
  base_config.validate();
  std::vector<BenchmarkRow> rows;

  for (const auto& scenario : scenarios) {
    scenario.sim.validate();
    for (const auto method : methods) {
      Accumulator a_mise, a_rmse, a_cov, a_score, a_time;
      for (int r = 0; r < replicates; ++r) {
        SimulationSpec spec = scenario.sim;
        spec.seed = derive_seed(scenario.sim.seed, Stream::replicate, static_cast<std::uint64_t>(r));
        const SimulatedData sim = simulate(spec, base_config.threads);

        TrainConfig config = base_config;
        config.seed = derive_seed(base_config.seed, Stream::replicate, static_cast<std::uint64_t>(r));
        if (method == BenchmarkMethod::nn_ols) config.m = 0;

        const auto t0 = std::chrono::steady_clock::now();
        const FitResult fit = fit_nngls(sim.data, config, nu);

        // observed rows (train + val) for kriging, internal test rows for metrics
        std::vector<int> observed = fit.split.train;
        observed.insert(observed.end(), fit.split.val.begin(), fit.split.val.end());
        std::sort(observed.begin(), observed.end());
        SpatialDataset obs;
        obs.X.resize(static_cast<Eigen::Index>(observed.size()), sim.data.d());
        obs.Y.resize(static_cast<Eigen::Index>(observed.size()));
        obs.S.resize(static_cast<Eigen::Index>(observed.size()), 2);
        for (std::size_t i = 0; i < observed.size(); ++i) {
          obs.X.row(static_cast<Eigen::Index>(i)) = sim.data.X.row(observed[i]);
          obs.Y(static_cast<Eigen::Index>(i)) = sim.data.Y(observed[i]);
          obs.S.row(static_cast<Eigen::Index>(i)) = sim.data.S.row(observed[i]);
        }
        const auto& test = fit.split.test;
        Eigen::MatrixXd Xte(static_cast<Eigen::Index>(test.size()), sim.data.d());
        Eigen::MatrixXd Ste(static_cast<Eigen::Index>(test.size()), 2);
        Eigen::VectorXd Yte(static_cast<Eigen::Index>(test.size()));
        Eigen::VectorXd Fte(static_cast<Eigen::Index>(test.size()));
        for (std::size_t i = 0; i < test.size(); ++i) {
          Xte.row(static_cast<Eigen::Index>(i)) = sim.data.X.row(test[i]);
          Ste.row(static_cast<Eigen::Index>(i)) = sim.data.S.row(test[i]);
          Yte(static_cast<Eigen::Index>(i)) = sim.data.Y(test[i]);
          Fte(static_cast<Eigen::Index>(i)) = sim.f_true(test[i]);
        }
        const PredictionResult pred = predict(fit, obs, Xte, Ste);
        const auto t1 = std::chrono::steady_clock::now();

        const Eigen::VectorXd f_hat = forward(fit.model, Xte);
        a_mise.add(mise(f_hat, Fte, center_mise));
        a_rmse.add(rmse_relative(pred.y_hat, Yte));
        int hits = 0;
        for (Eigen::Index i = 0; i < Yte.size(); ++i) {
          if (Yte(i) >= pred.pi_lower(i) && Yte(i) <= pred.pi_upper(i)) ++hits;
        }
        a_cov.add(Yte.size() > 0 ? static_cast<double>(hits) / static_cast<double>(Yte.size()) : 0.0);
        a_score.add(interval_score(pred.pi_lower, pred.pi_upper, Yte));
        a_time.add(std::chrono::duration<double>(t1 - t0).count());
      }
      const std::string name = benchmark_method_name(method);
      const auto push = [&](const std::string& metric, const Accumulator& acc) {
        rows.push_back(BenchmarkRow{scenario.id, name, metric, acc.mean(), acc.sd(), replicates});
      };
      push("mise", a_mise);
      push("rmse", a_rmse);
      push("coverage", a_cov);
      push("interval_score", a_score);
      push("runtime_seconds", a_time);
    }
  }
  return rows;
}

void write_benchmark_csv(const std::string& path, const std::vector<BenchmarkRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << "scenario_id,method,metric,mean,sd,n_replicates\n";
  for (const auto& row : rows) {
    out << row.scenario_id << "," << row.method << "," << row.metric << "," << format_double(row.mean) << ","
        << format_double(row.sd) << "," << row.n_replicates << "\n";
  }
}

}  // namespace nngls
