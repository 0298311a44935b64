#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "nngls/covariance.hpp"
#include "nngls/neighbors.hpp"

namespace nngls {

// Sparse precision factors of the nearest-neighbor approximation
//   Q = (I - B)^T F^{-1} (I - B),
// stored row-wise in DAG order. For position k,
//   b_rows[k]    = Sigma(k, N(k)) Sigma(N(k), N(k))^{-1}  (kriging weights,
//                  aligned with dag->neighbors[k]),
//   f_diag[k]    = Sigma_kk - Sigma(k, N(k)) Sigma(N(k), N(k))^{-1} Sigma(N(k), k),
//   v_weights[k] = (1, -b_rows[k]) / sqrt(f_diag[k]).
// Covariance blocks use the nugget on their diagonals. Factors are immutable
// after construction and safe to share across threads.
struct NngpFactors {
  std::shared_ptr<const NeighborDag> dag;
  CovarianceParams theta;
  std::vector<Eigen::VectorXd> b_rows;
  Eigen::VectorXd f_diag;
  std::vector<Eigen::VectorXd> v_weights;

  int n() const { return dag ? dag->n() : 0; }
};

// One dense Cholesky of an at-most m x m block per row, O(n m^3) total.
// Rows are processed in parallel. A numerically non-positive-definite
// neighbor block raises std::runtime_error naming the row (near-duplicate
// points or an invalid theta).
NngpFactors compute_factors(std::shared_ptr<const NeighborDag> dag, const Eigen::MatrixXd& S,
                            const CovarianceParams& theta, int threads = 1);

// Vector aligned to DAG order: entry k depends on the source entries at
// N*[order[k]] only.
struct DecorrelatedVector {
  Eigen::VectorXd values;
};

// x*_k = v_k . x_{N*[k]}, the graph convolution F^{-1/2} (I - B) x.
// x is indexed by dataset row; the result is aligned to DAG order.
DecorrelatedVector decorrelate(const NngpFactors& factors, const Eigen::VectorXd& x);

// Inverse transform: solves (I - B) x = F^{1/2} w by forward substitution in
// DAG order (inherently sequential), O(n m). w is aligned to DAG order; the
// result is indexed by dataset row. decorrelate(correlate_back(w)) == w up
// to round-off.
Eigen::VectorXd correlate_back(const NngpFactors& factors, const Eigen::VectorXd& w);

// sum_k [ r*_k(theta)^2 + log f_diag[k](theta) ] for the decorrelated
// residual r*; equals -2 log NNGP density minus the constant n log(2 pi).
double nngp_neg_loglik(const NngpFactors& factors, const Eigen::VectorXd& residual);
double nngp_neg_loglik(const std::shared_ptr<const NeighborDag>& dag, const Eigen::MatrixXd& S,
                       const Eigen::VectorXd& residual, const CovarianceParams& theta, int threads = 1);

// Desk-scale diagnostic of the discrepancy matrix E(m) = Sigma^{T/2} Q(m) Sigma^{1/2}.
// The reported kld is tr(E) - log det E - n, offset so that an exact working
// precision (E = I) reports 0; it decreases monotonically in m. m = 0 means
// Q = I (the OLS baseline). Dense eigendecomposition; guarded to n <= 2000.
struct DiscrepancyRow {
  int m = 0;
  double kld = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

std::vector<DiscrepancyRow> discrepancy_diagnostics(const Eigen::MatrixXd& S, const CovarianceParams& theta_true,
                                                    const CovarianceParams& theta_work, const std::vector<int>& m_list,
                                                    int threads = 1);

}  // namespace nngls
