#include "nngls/nngp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "nngls/guard.hpp"
#include "nngls/parallel.hpp"

namespace nngls {

NngpFactors compute_factors(std::shared_ptr<const NeighborDag> dag, const Eigen::MatrixXd& S,
                            const CovarianceParams& theta, int threads) {
  if (!dag) throw std::invalid_argument("compute_factors: null DAG");
  theta.validate();
  const int n = dag->n();
  if (S.rows() != n) throw std::invalid_argument("compute_factors: DAG and coordinates disagree on n");

  NngpFactors f;
  f.dag = std::move(dag);
  f.theta = theta;
  f.b_rows.resize(static_cast<std::size_t>(n));
  f.f_diag.resize(n);
  f.v_weights.resize(static_cast<std::size_t>(n));

  const double diag_cov = theta.sigma2 + theta.tau2;
  const NeighborDag& d = *f.dag;

  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
    Eigen::MatrixXd block;
    Eigen::VectorXd cross;
    for (std::size_t k = lo; k < hi; ++k) {
      const auto& nbrs = d.neighbors[k];
      const int q = static_cast<int>(nbrs.size());
      const int self = d.order[k];
      if (q == 0) {
        f.b_rows[k] = Eigen::VectorXd();
        f.f_diag(static_cast<Eigen::Index>(k)) = diag_cov;
        f.v_weights[k] = Eigen::VectorXd::Constant(1, 1.0 / std::sqrt(diag_cov));
        continue;
      }
      block.resize(q, q);
      cross.resize(q);
      for (int a = 0; a < q; ++a) {
        block(a, a) = diag_cov;
        for (int b = a + 1; b < q; ++b) {
          const double dx = S(nbrs[a], 0) - S(nbrs[b], 0);
          const double dy = S(nbrs[a], 1) - S(nbrs[b], 1);
          const double v = matern(std::sqrt(dx * dx + dy * dy), theta);
          block(a, b) = v;
          block(b, a) = v;
        }
        const double dx = S(self, 0) - S(nbrs[a], 0);
        const double dy = S(self, 1) - S(nbrs[a], 1);
        cross(a) = matern(std::sqrt(dx * dx + dy * dy), theta);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(block);
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("compute_factors: neighbor covariance block not positive definite at DAG position " +
                                 std::to_string(k) + " (near-duplicate points or invalid theta)");
      }
      Eigen::VectorXd brow = llt.solve(cross);
      const double fii = diag_cov - cross.dot(brow);
      if (!(fii > 0.0) || !std::isfinite(fii)) {
        throw std::runtime_error("compute_factors: nonpositive conditional variance at DAG position " +
                                 std::to_string(k));
      }
      const double inv_sqrt = 1.0 / std::sqrt(fii);
      Eigen::VectorXd v(q + 1);
      v(0) = inv_sqrt;
      v.tail(q) = -inv_sqrt * brow;
      f.b_rows[k] = std::move(brow);
      f.f_diag(static_cast<Eigen::Index>(k)) = fii;
      f.v_weights[k] = std::move(v);
    }
  });
  return f;
}

DecorrelatedVector decorrelate(const NngpFactors& factors, const Eigen::VectorXd& x) {
  const int n = factors.n();
  if (x.size() != n) throw std::invalid_argument("decorrelate: length mismatch");
  const NeighborDag& dag = *factors.dag;
  DecorrelatedVector out;
  out.values.resize(n);
  for (int k = 0; k < n; ++k) {
    const auto& nbrs = dag.neighbors[static_cast<std::size_t>(k)];
    const auto& v = factors.v_weights[static_cast<std::size_t>(k)];
    double acc = v(0) * x(dag.order[static_cast<std::size_t>(k)]);
    for (std::size_t a = 0; a < nbrs.size(); ++a) {
      acc += v(static_cast<Eigen::Index>(a) + 1) * x(nbrs[a]);
    }
    out.values(k) = acc;
  }
  return out;
}

Eigen::VectorXd correlate_back(const NngpFactors& factors, const Eigen::VectorXd& w) {
  const int n = factors.n();
  if (w.size() != n) throw std::invalid_argument("correlate_back: length mismatch");
  const NeighborDag& dag = *factors.dag;
  Eigen::VectorXd x(n);
  for (int k = 0; k < n; ++k) {
    const auto& nbrs = dag.neighbors[static_cast<std::size_t>(k)];
    const auto& brow = factors.b_rows[static_cast<std::size_t>(k)];
    double acc = std::sqrt(factors.f_diag(k)) * w(k);
    for (std::size_t a = 0; a < nbrs.size(); ++a) {
      acc += brow(static_cast<Eigen::Index>(a)) * x(nbrs[a]);
    }
    x(dag.order[static_cast<std::size_t>(k)]) = acc;
  }
  return x;
}

double nngp_neg_loglik(const NngpFactors& factors, const Eigen::VectorXd& residual) {
  const DecorrelatedVector r = decorrelate(factors, residual);
  return r.values.squaredNorm() + factors.f_diag.array().log().sum();
}

double nngp_neg_loglik(const std::shared_ptr<const NeighborDag>& dag, const Eigen::MatrixXd& S,
                       const Eigen::VectorXd& residual, const CovarianceParams& theta, int threads) {
  return nngp_neg_loglik(compute_factors(dag, S, theta, threads), residual);
}

std::vector<DiscrepancyRow> discrepancy_diagnostics(const Eigen::MatrixXd& S, const CovarianceParams& theta_true,
                                                    const CovarianceParams& theta_work, const std::vector<int>& m_list,
                                                    int threads) {
  const auto n = static_cast<int>(S.rows());
  if (n > 2000) {
    throw std::invalid_argument("discrepancy_diagnostics: n > 2000; subsample the locations for this diagnostic");
  }
  theta_true.validate();
  theta_work.validate();
  check_dense_alloc(static_cast<std::size_t>(n), static_cast<std::size_t>(n), "discrepancy_diagnostics");

  const Eigen::MatrixXd sigma = cov_matrix(S, S, theta_true, true);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("discrepancy_diagnostics: true covariance is not positive definite");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet_sigma = 2.0 * L.diagonal().array().log().sum();

  std::vector<DiscrepancyRow> rows;
  rows.reserve(m_list.size());
  for (const int m : m_list) {
    if (m < 0) throw std::invalid_argument("discrepancy_diagnostics: m must be nonnegative");
    DiscrepancyRow row;
    row.m = m;
    Eigen::MatrixXd E;
    double logdet_Q = 0.0;
    if (m == 0) {
      // OLS baseline: Q = I, E = L^T L (same spectrum as Sigma)
      E.noalias() = L.transpose() * L;
    } else {
      auto dag = std::make_shared<const NeighborDag>(build_dag(S, m, Ordering::coordinate_sum, nullptr, threads));
      const NngpFactors factors = compute_factors(dag, S, theta_work, threads);
      logdet_Q = -factors.f_diag.array().log().sum();
      // U = F^{-1/2} (I - B) L, column by column; E = U^T U
      Eigen::MatrixXd U(n, n);
      parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t c = lo; c < hi; ++c) {
          U.col(static_cast<Eigen::Index>(c)) = decorrelate(factors, L.col(static_cast<Eigen::Index>(c))).values;
        }
      });
      E.noalias() = U.transpose() * U;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(E, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
      throw std::runtime_error("discrepancy_diagnostics: eigendecomposition failed");
    }
    row.lambda_min = eig.eigenvalues().minCoeff();
    row.lambda_max = eig.eigenvalues().maxCoeff();
    // log|E| = log|Sigma| + log|Q|; for Q = I the Q term vanishes
    const double logdet_E = logdet_sigma + logdet_Q;
    row.kld = E.trace() - logdet_E - static_cast<double>(n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nngls
