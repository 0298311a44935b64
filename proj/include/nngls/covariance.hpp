#pragma once

#include <Eigen/Dense>

#include "json.hpp"

namespace nngls {

// Matern-plus-nugget parameters theta = (sigma2, phi, nu, tau2). The distance
// scaling follows C(d) = sigma2 * 2^{1-nu} (sqrt(2) phi d)^nu K_nu(sqrt(2) phi d) / Gamma(nu),
// so for nu = 1/2 the decay rate is exp(-sqrt(2) phi d).
struct CovarianceParams {
  double sigma2 = 1.0;
  double phi = 1.0;
  double nu = 0.5;
  double tau2 = 0.0;

  // Throws std::invalid_argument on invalid values. Simulation allows
  // sigma2 == 0 (pure-nugget error); estimation does not.
  void validate(bool allow_zero_sigma2 = false) const;
};

void to_json(nlohmann::json& j, const CovarianceParams& p);
void from_json(const nlohmann::json& j, CovarianceParams& p);

// Matern covariance at distance d, nugget NOT included; C(0) = sigma2.
// Supported smoothness: nu in {0.5, 1.5, 2.5} (closed forms).
double matern(double dist, const CovarianceParams& p);

// matern(d) + tau2 * 1{d == 0}
double cov_full(double dist, const CovarianceParams& p);

// Dense covariance block between two coordinate sets. The nugget is added
// only where the flag is set and the two rows are exactly equal. Symmetric
// positive definite when S_a == S_b and the nugget is included.
Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& S_a, const Eigen::MatrixXd& S_b, const CovarianceParams& p,
                           bool include_nugget_on_diagonal);

// Lower bound on the smallest eigenvalue of the (nugget-free) Matern
// covariance matrix over any design with minimum pairwise distance h:
//   Psi_low = pi^2 sigma2 Gamma(nu+1) (phi^2)^nu h^{2 nu}
//             / (Gamma(nu) (phi^2 h^2 + 128 pi^3)^{nu+1}).
double matern_min_eigen_bound(const CovarianceParams& p, double h);

}  // namespace nngls
