#include <Eigen/Cholesky>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "nngls/nngp.hpp"

using namespace nngls;

namespace {

std::shared_ptr<const NeighborDag> make_dag(const Eigen::MatrixXd& S, int m) {
  return std::make_shared<const NeighborDag>(build_dag(S, m));
}

const CovarianceParams kExpTheta{1.0, 3.0 / std::sqrt(2.0), 0.5, 0.01};

}  // namespace

TEST_CASE("compute_factors: empty neighbor set gives the unconditional variance") {
  const Eigen::MatrixXd S = test_helpers::random_points(30, 5.0, 3);
  const NngpFactors f = compute_factors(make_dag(S, 5), S, kExpTheta);
  CHECK(f.b_rows[0].size() == 0);
  CHECK(f.f_diag(0) == doctest::Approx(1.01).epsilon(1e-15));
  CHECK(f.v_weights[0](0) == doctest::Approx(1.0 / std::sqrt(1.01)).epsilon(1e-15));
  for (int k = 0; k < f.n(); ++k) {
    CHECK(f.f_diag(k) > 0.0);
    CHECK(f.f_diag(k) <= 1.01 + 1e-12);
    CHECK(f.v_weights[static_cast<std::size_t>(k)](0) == doctest::Approx(1.0 / std::sqrt(f.f_diag(k))).epsilon(1e-13));
  }
}

TEST_CASE("compute_factors: full conditioning reproduces the dense precision, n = 50") {
  const Eigen::MatrixXd S = test_helpers::random_points(50, 5.0, 9);
  const NngpFactors f = compute_factors(make_dag(S, 49), S, kExpTheta);
  const Eigen::MatrixXd Q = test_helpers::dense_precision(f);
  const Eigen::MatrixXd sigma = cov_matrix(S, S, kExpTheta, true);
  const Eigen::MatrixXd Qdense = sigma.llt().solve(Eigen::MatrixXd::Identity(50, 50));
  CHECK((Q - Qdense).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("compute_factors: trace identity tr(Sigma^{T/2} Q Sigma^{1/2}) = n, n = 200, m = 20") {
  const Eigen::MatrixXd S = test_helpers::random_points(200, 10.0, 13);
  const NngpFactors f = compute_factors(make_dag(S, 20), S, kExpTheta, 2);
  const Eigen::MatrixXd Q = test_helpers::dense_precision(f);
  const Eigen::MatrixXd sigma = cov_matrix(S, S, kExpTheta, true);
  const double trace = (Q * sigma).trace();
  CHECK(trace == doctest::Approx(200.0).epsilon(1e-6));
}

TEST_CASE("compute_factors: parallel and sequential runs agree bit for bit") {
  const Eigen::MatrixXd S = test_helpers::random_points(300, 10.0, 17);
  const NngpFactors a = compute_factors(make_dag(S, 15), S, kExpTheta, 1);
  const NngpFactors b = compute_factors(make_dag(S, 15), S, kExpTheta, 3);
  CHECK(a.f_diag == b.f_diag);
  for (int k = 0; k < a.n(); ++k) CHECK(a.v_weights[static_cast<std::size_t>(k)] == b.v_weights[static_cast<std::size_t>(k)]);
}

TEST_CASE("decorrelate: single point and dense-matrix oracle") {
  Eigen::MatrixXd one(1, 2);
  one << 0.2, 0.9;
  const NngpFactors f1 = compute_factors(make_dag(one, 3), one, kExpTheta);
  Eigen::VectorXd x1(1);
  x1 << 2.0;
  CHECK(decorrelate(f1, x1).values(0) == doctest::Approx(2.0 / std::sqrt(1.01)).epsilon(1e-14));

  const Eigen::MatrixXd S = test_helpers::random_points(100, 6.0, 23);
  const NngpFactors f = compute_factors(make_dag(S, 12), S, kExpTheta);
  Rng rng(99);
  Eigen::VectorXd x(100);
  for (int i = 0; i < 100; ++i) x(i) = rng.normal();
  const Eigen::MatrixXd U = test_helpers::dense_decorrelation_matrix(f);
  const Eigen::VectorXd expect = U * x;
  CHECK((decorrelate(f, x).values - expect).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd wrong(99);
  CHECK_THROWS_AS(decorrelate(f, wrong), std::invalid_argument);
}

TEST_CASE("correlate_back: inverse of decorrelate and dense triangular oracle") {
  const Eigen::MatrixXd S = test_helpers::random_points(100, 6.0, 29);
  const NngpFactors f = compute_factors(make_dag(S, 10), S, kExpTheta);
  Rng rng(7);
  Eigen::VectorXd x(100), w(100);
  for (int i = 0; i < 100; ++i) {
    x(i) = rng.normal();
    w(i) = rng.normal();
  }
  // round trips in both directions
  CHECK((correlate_back(f, decorrelate(f, x).values) - x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((decorrelate(f, correlate_back(f, w)).values - w).cwiseAbs().maxCoeff() < 1e-10);

  // dense solve of U x = w
  const Eigen::MatrixXd U = test_helpers::dense_decorrelation_matrix(f);
  const Eigen::VectorXd dense = U.fullPivLu().solve(w);
  CHECK((correlate_back(f, w) - dense).cwiseAbs().maxCoeff() < 1e-9);

  // n = 1: x = sqrt(sigma2 + tau2) w
  Eigen::MatrixXd one(1, 2);
  one << 0.5, 0.5;
  const NngpFactors f1 = compute_factors(make_dag(one, 3), one, kExpTheta);
  Eigen::VectorXd w1(1);
  w1 << 1.5;
  CHECK(correlate_back(f1, w1)(0) == doctest::Approx(1.5 * std::sqrt(1.01)).epsilon(1e-14));
}

TEST_CASE("nngp_neg_loglik: single point closed form and scaling identity") {
  Eigen::MatrixXd one(1, 2);
  one << 0.1, 0.2;
  CovarianceParams p{2.0, 1.0, 0.5, 0.5};
  Eigen::VectorXd r(1);
  r << 1.7;
  const double got = nngp_neg_loglik(compute_factors(make_dag(one, 2), one, p), r);
  CHECK(got == doctest::Approx(1.7 * 1.7 / 2.5 + std::log(2.5)).epsilon(1e-14));

  // jointly scaling (sigma2, tau2) by c and the residual by sqrt(c) adds n log c
  const Eigen::MatrixXd S = test_helpers::random_points(60, 5.0, 31);
  auto dag = make_dag(S, 8);
  Rng rng(5);
  Eigen::VectorXd res(60);
  for (int i = 0; i < 60; ++i) res(i) = rng.normal();
  const double c = 3.7;
  CovarianceParams scaled = kExpTheta;
  scaled.sigma2 *= c;
  scaled.tau2 *= c;
  const double base = nngp_neg_loglik(dag, S, res, kExpTheta);
  const double after = nngp_neg_loglik(dag, S, res * std::sqrt(c), scaled);
  CHECK(after - base == doctest::Approx(60.0 * std::log(c)).epsilon(1e-10));
}

TEST_CASE("nngp_neg_loglik: matches the dense Gaussian -2 log-density at full conditioning, n = 40") {
  const Eigen::MatrixXd S = test_helpers::random_points(40, 4.0, 37);
  Rng rng(13);
  Eigen::VectorXd res(40);
  for (int i = 0; i < 40; ++i) res(i) = rng.normal();
  const double got = nngp_neg_loglik(make_dag(S, 39), S, res, kExpTheta);

  const Eigen::MatrixXd sigma = cov_matrix(S, S, kExpTheta, true);
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double quad = res.dot(llt.solve(res));
  CHECK(got == doctest::Approx(quad + logdet).epsilon(1e-8));
}

TEST_CASE("nngp_neg_loglik: representation invariance") {
  const Eigen::MatrixXd S = test_helpers::random_points(80, 5.0, 41);
  auto dag = make_dag(S, 10);
  Rng rng(3);
  Eigen::VectorXd res(80);
  for (int i = 0; i < 80; ++i) res(i) = rng.normal();
  const NngpFactors f = compute_factors(dag, S, kExpTheta);
  CHECK(nngp_neg_loglik(f, res) == doctest::Approx(nngp_neg_loglik(dag, S, res, kExpTheta)).epsilon(1e-14));
}

TEST_CASE("discrepancy_diagnostics: exactness endpoint and the m = 0 spectrum") {
  const Eigen::MatrixXd S = test_helpers::random_points(60, 5.0, 43);
  const auto rows = discrepancy_diagnostics(S, kExpTheta, kExpTheta, {0, 5, 59});
  REQUIRE(rows.size() == 3);
  // m = n-1: E = I
  CHECK(rows[2].kld == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(rows[2].lambda_min == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(rows[2].lambda_max == doctest::Approx(1.0).epsilon(1e-8));
  // m = 0 with theta_work = theta_true: E has the spectrum of Sigma itself
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_matrix(S, S, kExpTheta, true), Eigen::EigenvaluesOnly);
  CHECK(rows[0].lambda_min == doctest::Approx(eig.eigenvalues().minCoeff()).epsilon(1e-8));
  CHECK(rows[0].lambda_max == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-8));

  Eigen::MatrixXd big(2001, 2);
  CHECK_THROWS_WITH_AS(discrepancy_diagnostics(big, kExpTheta, kExpTheta, {1}), doctest::Contains("subsample"),
                       std::invalid_argument);
}

TEST_CASE("discrepancy_diagnostics: KLD nonincreasing in m on the paper design, n = 1000") {
  const Eigen::MatrixXd S = test_helpers::random_points(1000, 10.0, 47);
  const auto rows = discrepancy_diagnostics(S, kExpTheta, kExpTheta, {0, 1, 5, 20, 30}, 2);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].kld <= rows[i - 1].kld + 1e-9);
  }
  CHECK(rows.back().kld >= -1e-9);
}
