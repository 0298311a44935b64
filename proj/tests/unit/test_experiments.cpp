#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "nngls/experiments.hpp"

using namespace nngls;

TEST_CASE("mean functions: pinned values and ranges") {
  Eigen::RowVectorXd x2(5);
  x2 << 1.0, 1.0, 0.5, 0.0, 0.0;
  CHECK(std::abs(mean_function_value(MeanFunction::f2_friedman, 0.5, x2)) < 1e-12);  // sin(pi) = 0

  // f2 stays inside [0, 5] on the unit cube
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    Eigen::RowVectorXd x(5);
    for (int j = 0; j < 5; ++j) x(j) = rng.uniform();
    const double v = mean_function_value(MeanFunction::f2_friedman, 0.5, x);
    CHECK(v >= 0.0);
    CHECK(v <= 5.0);
  }

  // the rho family at rho = 1/2 is exactly the Friedman function
  for (int i = 0; i < 50; ++i) {
    Eigen::RowVectorXd x(5);
    for (int j = 0; j < 5; ++j) x(j) = rng.uniform();
    CHECK(mean_function_value(MeanFunction::f2_rho, 0.5, x) ==
          doctest::Approx(mean_function_value(MeanFunction::f2_friedman, 0.5, x)).epsilon(1e-12));
  }

  CHECK(mean_function_dim(MeanFunction::f1_sine) == 1);
  CHECK(mean_function_dim(MeanFunction::f3_15dim) == 15);
  CHECK(mean_function_value(MeanFunction::f1_sine, 0.5, Eigen::RowVectorXd::Constant(1, 0.5)) ==
        doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("simulate: pure-nugget errors have the nugget variance, n = 5000") {
  SimulationSpec spec;
  spec.f0 = MeanFunction::f1_sine;
  spec.n = 5000;
  spec.theta = CovarianceParams{0.0, 1.0, 0.5, 0.49};
  spec.seed = 5;
  const SimulatedData sim = simulate(spec);
  const double var = (sim.spatial_effect.array() - sim.spatial_effect.mean()).square().sum() / spec.n;
  CHECK(var == doctest::Approx(0.49).epsilon(0.1));
  CHECK((sim.data.Y - sim.f_true - sim.spatial_effect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("simulate: deterministic given the seed; ground truth matches the recomputed mean") {
  SimulationSpec spec;
  spec.f0 = MeanFunction::f2_friedman;
  spec.n = 200;
  spec.theta = CovarianceParams{1.0, 2.0, 0.5, 0.1};
  spec.seed = 9;
  const SimulatedData a = simulate(spec);
  const SimulatedData b = simulate(spec);
  CHECK(a.data.Y == b.data.Y);
  CHECK(a.data.S == b.data.S);
  for (int i = 0; i < spec.n; ++i) {
    CHECK(a.f_true(i) == doctest::Approx(mean_function_value(spec.f0, spec.rho, a.data.X.row(i))).epsilon(1e-14));
  }
}

TEST_CASE("simulate: dense and sequential NNGP draws agree in distribution, n = 500" * doctest::timeout(600)) {
  // 200 draws per method: compare mean, variance, and binned variogram
  const int n = 500;
  const int draws = 200;
  SimulationSpec base;
  base.f0 = MeanFunction::f1_sine;
  base.n = n;
  base.theta = CovarianceParams{1.0, 3.0 / std::sqrt(2.0), 0.5, 0.01};

  auto collect = [&](GpDraw method, std::uint64_t seed_base) {
    double mean_acc = 0.0, var_acc = 0.0;
    Eigen::VectorXd vario = Eigen::VectorXd::Zero(8);
    for (int r = 0; r < draws; ++r) {
      SimulationSpec spec = base;
      spec.draw = method;
      spec.seed = seed_base + static_cast<std::uint64_t>(r);
      const SimulatedData sim = simulate(spec, 2);
      mean_acc += sim.spatial_effect.mean();
      var_acc += (sim.spatial_effect.array() - sim.spatial_effect.mean()).square().sum() / n;
      const auto bins = empirical_semivariogram(sim.data.S, sim.spatial_effect, 8, 4.0);
      for (int b = 0; b < 8; ++b) vario(b) += bins[static_cast<std::size_t>(b)].semivariance;
    }
    mean_acc /= draws;
    var_acc /= draws;
    vario /= draws;
    return std::make_tuple(mean_acc, var_acc, vario);
  };

  const auto [m_dense, v_dense, g_dense] = collect(GpDraw::dense_cholesky, 4000);
  const auto [m_seq, v_seq, g_seq] = collect(GpDraw::nngp_sequential, 8000);

  CHECK(std::abs(m_dense - m_seq) < 0.1);
  CHECK(v_dense == doctest::Approx(v_seq).epsilon(0.1));
  for (int b = 0; b < 8; ++b) CHECK(g_dense(b) == doctest::Approx(g_seq(b)).epsilon(0.15));
}

TEST_CASE("simulate: fixed-surface error model is reproducible and bounded") {
  SimulationSpec spec;
  spec.f0 = MeanFunction::f1_sine;
  spec.n = 400;
  spec.theta = CovarianceParams{1.0, 1.0 / std::sqrt(2.0), 0.5, 0.01};
  spec.error_model = ErrorModel::fixed_surface;
  spec.seed = 31;
  const SimulatedData a = simulate(spec);
  const SimulatedData b = simulate(spec);
  CHECK(a.data.Y == b.data.Y);
  CHECK(a.spatial_effect.allFinite());
}

TEST_CASE("mise: identity, centering, and the hand formula") {
  Eigen::VectorXd f(4), g(4);
  f << 1, 2, 3, 4;
  CHECK(mise(f, f) == 0.0);
  g = f.array() + 2.5;
  CHECK(mise(f, g, true) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mise(f, g, false) == doctest::Approx(2.5 * 2.5).epsilon(1e-15));

  Rng rng(3);
  Eigen::VectorXd a(50), b(50);
  for (int i = 0; i < 50; ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  double acc = 0.0;
  for (int i = 0; i < 50; ++i) acc += (a(i) - b(i)) * (a(i) - b(i));
  CHECK(mise(a, b) == doctest::Approx(acc / 50.0).epsilon(1e-14));
}

TEST_CASE("rmse_relative: perfect, mean-predictor, and hand formula") {
  Rng rng(7);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y(i) = rng.normal() * 2.0 + 1.0;
  CHECK(rmse_relative(y, y) == 0.0);
  const Eigen::VectorXd mu = Eigen::VectorXd::Constant(40, y.mean());
  CHECK(rmse_relative(mu, y) == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::VectorXd yhat(40);
  for (int i = 0; i < 40; ++i) yhat(i) = rng.normal();
  const double mse = (yhat - y).squaredNorm() / 40.0;
  const double var = (y.array() - y.mean()).square().sum() / 40.0;
  CHECK(rmse_relative(yhat, y) == doctest::Approx(mse / var).epsilon(1e-13));
}

TEST_CASE("interval_score: widths and miss penalties") {
  Eigen::VectorXd l(1), u(1), t(1);
  l << 0.0;
  u << 2.0;
  t << 1.0;
  CHECK(interval_score(l, u, t) == doctest::Approx(2.0).epsilon(1e-15));
  t << 2.5;  // miss above by 0.5
  CHECK(interval_score(l, u, t) == doctest::Approx(2.0 + 2.0 / 0.05 * 0.5).epsilon(1e-13));

  // batch equals the scalar loop
  Rng rng(11);
  Eigen::VectorXd lo(30), hi(30), tr(30);
  for (int i = 0; i < 30; ++i) {
    const double a = rng.normal(), b = rng.normal();
    lo(i) = std::min(a, b);
    hi(i) = std::max(a, b);
    tr(i) = rng.normal();
  }
  double acc = 0.0;
  for (int i = 0; i < 30; ++i) {
    double s = hi(i) - lo(i);
    if (lo(i) > tr(i)) s += 40.0 * (lo(i) - tr(i));
    if (tr(i) > hi(i)) s += 40.0 * (tr(i) - hi(i));
    acc += s;
  }
  CHECK(interval_score(lo, hi, tr) == doctest::Approx(acc / 30.0).epsilon(1e-13));
}

TEST_CASE("metrics are permutation-invariant over rows") {
  Rng rng(13);
  Eigen::VectorXd a(25), b(25);
  for (int i = 0; i < 25; ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  Eigen::VectorXd ar(25), br(25);
  for (int i = 0; i < 25; ++i) {
    ar(i) = a(24 - i);
    br(i) = b(24 - i);
  }
  CHECK(mise(a, b) == doctest::Approx(mise(ar, br)).epsilon(1e-15));
  CHECK(rmse_relative(a, b) == doctest::Approx(rmse_relative(ar, br)).epsilon(1e-15));
}

TEST_CASE("empirical_semivariogram: constant residual, iid noise, exponential GP") {
  const Eigen::MatrixXd S = test_helpers::random_points(400, 10.0, 17);
  const Eigen::VectorXd constant = Eigen::VectorXd::Constant(400, 2.0);
  for (const auto& bin : empirical_semivariogram(S, constant, 10, 5.0)) {
    CHECK(bin.semivariance == 0.0);
  }

  // iid noise: flat close to the variance
  Rng rng(19);
  Eigen::VectorXd noise(400);
  for (int i = 0; i < 400; ++i) noise(i) = rng.normal() * 1.5;
  for (const auto& bin : empirical_semivariogram(S, noise, 6, 6.0)) {
    if (bin.count > 400) CHECK(bin.semivariance == doctest::Approx(2.25).epsilon(0.25));
  }

  // exponential GP: gamma(h) = tau2 + sigma2 (1 - exp(-sqrt(2) phi h)), loose bands
  SimulationSpec spec;
  spec.f0 = MeanFunction::f1_sine;
  spec.n = 1500;
  spec.theta = CovarianceParams{1.0, 3.0 / std::sqrt(2.0), 0.5, 0.1};
  spec.seed = 23;
  const SimulatedData sim = simulate(spec);
  const auto bins = empirical_semivariogram(sim.data.S, sim.spatial_effect, 8, 4.0);
  for (const auto& bin : bins) {
    if (bin.count < 1000) continue;
    const double expect = 0.1 + 1.0 - std::exp(-3.0 * bin.center);
    CHECK(bin.semivariance == doctest::Approx(expect).epsilon(0.25));
  }
}

TEST_CASE("run_benchmark: deterministic rows for both methods") {
  BenchmarkScenario scenario;
  scenario.id = "smoke";
  scenario.sim.f0 = MeanFunction::f1_sine;
  scenario.sim.n = 150;
  scenario.sim.theta = CovarianceParams{1.0, 2.0, 0.5, 0.1};
  scenario.sim.seed = 29;

  TrainConfig cfg;
  cfg.seed = 31;
  cfg.max_epochs = 5;
  cfg.hidden_units = 8;
  cfg.threads = 2;

  const auto rows = run_benchmark({scenario}, {BenchmarkMethod::nngls, BenchmarkMethod::nn_ols}, 1, cfg, 0.5);
  REQUIRE(rows.size() == 10);  // 2 methods x 5 metrics
  bool saw_nngls = false, saw_ols = false;
  for (const auto& row : rows) {
    if (row.method == "nngls") saw_nngls = true;
    if (row.method == "nn_ols") saw_ols = true;
    if (row.metric == "runtime_seconds") CHECK(row.mean > 0.0);
    CHECK(row.n_replicates == 1);
  }
  CHECK(saw_nngls);
  CHECK(saw_ols);

  const auto again = run_benchmark({scenario}, {BenchmarkMethod::nngls, BenchmarkMethod::nn_ols}, 1, cfg, 0.5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].metric == "runtime_seconds") continue;
    CHECK(rows[i].mean == again[i].mean);
  }
}
