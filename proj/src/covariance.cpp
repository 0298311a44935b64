#include "nngls/covariance.hpp"

#include <cmath>
#include <stdexcept>

#include "nngls/guard.hpp"

namespace nngls {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool supported_nu(double nu) { return nu == 0.5 || nu == 1.5 || nu == 2.5; }

}  // namespace

void CovarianceParams::validate(bool allow_zero_sigma2) const {
  if (!std::isfinite(sigma2) || !std::isfinite(phi) || !std::isfinite(nu) || !std::isfinite(tau2)) {
    throw std::invalid_argument("covariance parameters must be finite");
  }
  if (sigma2 < 0.0 || (!allow_zero_sigma2 && sigma2 == 0.0)) {
    throw std::invalid_argument("sigma2 must be positive");
  }
  if (phi <= 0.0) throw std::invalid_argument("phi must be positive");
  if (tau2 < 0.0) throw std::invalid_argument("tau2 must be nonnegative");
  if (!supported_nu(nu)) {
    throw std::invalid_argument("unsupported smoothness nu; supported values: 0.5, 1.5, 2.5");
  }
}

void to_json(nlohmann::json& j, const CovarianceParams& p) {
  j = nlohmann::json{{"sigma2", p.sigma2}, {"phi", p.phi}, {"nu", p.nu}, {"tau2", p.tau2}};
}

void from_json(const nlohmann::json& j, CovarianceParams& p) {
  j.at("sigma2").get_to(p.sigma2);
  j.at("phi").get_to(p.phi);
  j.at("nu").get_to(p.nu);
  j.at("tau2").get_to(p.tau2);
}

double matern(double dist, const CovarianceParams& p) {
  if (dist < 0.0) throw std::invalid_argument("matern: negative distance");
  if (!supported_nu(p.nu)) {
    throw std::invalid_argument("unsupported smoothness nu; supported values: 0.5, 1.5, 2.5");
  }
  if (dist == 0.0) return p.sigma2;
  const double x = std::sqrt(2.0) * p.phi * dist;
  if (p.nu == 0.5) return p.sigma2 * std::exp(-x);
  if (p.nu == 1.5) return p.sigma2 * (1.0 + x) * std::exp(-x);
  return p.sigma2 * (1.0 + x + x * x / 3.0) * std::exp(-x);
}

double cov_full(double dist, const CovarianceParams& p) {
  return matern(dist, p) + (dist == 0.0 ? p.tau2 : 0.0);
}

Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& S_a, const Eigen::MatrixXd& S_b, const CovarianceParams& p,
                           bool include_nugget_on_diagonal) {
  p.validate(true);
  check_dense_alloc(static_cast<std::size_t>(S_a.rows()), static_cast<std::size_t>(S_b.rows()), "cov_matrix");
  Eigen::MatrixXd out(S_a.rows(), S_b.rows());
  for (Eigen::Index i = 0; i < S_a.rows(); ++i) {
    for (Eigen::Index j = 0; j < S_b.rows(); ++j) {
      const double dx = S_a(i, 0) - S_b(j, 0);
      const double dy = S_a(i, 1) - S_b(j, 1);
      double v = matern(std::sqrt(dx * dx + dy * dy), p);
      if (include_nugget_on_diagonal && S_a(i, 0) == S_b(j, 0) && S_a(i, 1) == S_b(j, 1)) {
        v += p.tau2;
      }
      out(i, j) = v;
    }
  }
  return out;
}

double matern_min_eigen_bound(const CovarianceParams& p, double h) {
  if (h <= 0.0) throw std::invalid_argument("matern_min_eigen_bound: minimum distance h must be positive");
  p.validate();
  const double phi2 = p.phi * p.phi;
  const double num = kPi * kPi * p.sigma2 * std::tgamma(p.nu + 1.0) * std::pow(phi2, p.nu) * std::pow(h, 2.0 * p.nu);
  const double den = std::tgamma(p.nu) * std::pow(phi2 * h * h + 128.0 * kPi * kPi * kPi, p.nu + 1.0);
  return num / den;
}

}  // namespace nngls
