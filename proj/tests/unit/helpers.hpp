#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "nngls/network.hpp"
#include "nngls/nngp.hpp"
#include "nngls/rng.hpp"

namespace test_helpers {

// Exhaustive-scan k nearest neighbors among candidate indices, ties toward
// the smaller index. Independent oracle for the k-d tree paths.
inline std::vector<int> brute_force_knn(const Eigen::MatrixXd& S, double x, double y,
                                        const std::vector<int>& candidates, int k) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidates.size());
  for (int c : candidates) {
    const double dx = S(c, 0) - x;
    const double dy = S(c, 1) - y;
    scored.emplace_back(dx * dx + dy * dy, c);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> out;
  for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
  return out;
}

inline Eigen::MatrixXd random_points(int n, double side, std::uint64_t seed) {
  nngls::Rng rng(seed);
  Eigen::MatrixXd S(n, 2);
  for (int i = 0; i < n; ++i) {
    S(i, 0) = rng.uniform(0.0, side);
    S(i, 1) = rng.uniform(0.0, side);
  }
  return S;
}

// Dense U with U x == decorrelate(x).values; Q = U^T U in dataset row space.
inline Eigen::MatrixXd dense_decorrelation_matrix(const nngls::NngpFactors& f) {
  const int n = f.n();
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const auto& v = f.v_weights[static_cast<std::size_t>(k)];
    const auto& nbrs = f.dag->neighbors[static_cast<std::size_t>(k)];
    U(k, f.dag->order[static_cast<std::size_t>(k)]) = v(0);
    for (std::size_t a = 0; a < nbrs.size(); ++a) U(k, nbrs[a]) = v(static_cast<Eigen::Index>(a) + 1);
  }
  return U;
}

inline Eigen::MatrixXd dense_precision(const nngls::NngpFactors& f) {
  const Eigen::MatrixXd U = dense_decorrelation_matrix(f);
  return U.transpose() * U;
}

// flattened parameter vector round trips for finite differences
inline Eigen::VectorXd pack_model(const nngls::MlpModel& m) {
  const int d = m.d(), d1 = m.hidden_units();
  Eigen::VectorXd out(d * d1 + 2 * d1 + 1);
  int at = 0;
  for (int j = 0; j < d; ++j)
    for (int r = 0; r < d1; ++r) out(at++) = m.W(j, r);
  for (int r = 0; r < d1; ++r) out(at++) = m.w0(r);
  for (int r = 0; r < d1; ++r) out(at++) = m.beta(r);
  out(at) = m.alpha0;
  return out;
}

inline nngls::MlpModel unpack_model(const Eigen::VectorXd& x, int d, int d1) {
  nngls::MlpModel m;
  m.W.resize(d, d1);
  m.w0.resize(d1);
  m.beta.resize(d1);
  int at = 0;
  for (int j = 0; j < d; ++j)
    for (int r = 0; r < d1; ++r) m.W(j, r) = x(at++);
  for (int r = 0; r < d1; ++r) m.w0(r) = x(at++);
  for (int r = 0; r < d1; ++r) m.beta(r) = x(at++);
  m.alpha0 = x(at);
  return m;
}

inline Eigen::VectorXd pack_gradient(const nngls::GradientBundle& g) {
  const int d = static_cast<int>(g.dW.rows()), d1 = static_cast<int>(g.dW.cols());
  Eigen::VectorXd out(d * d1 + 2 * d1 + 1);
  int at = 0;
  for (int j = 0; j < d; ++j)
    for (int r = 0; r < d1; ++r) out(at++) = g.dW(j, r);
  for (int r = 0; r < d1; ++r) out(at++) = g.dw0(r);
  for (int r = 0; r < d1; ++r) out(at++) = g.dbeta(r);
  out(at) = g.dalpha0;
  return out;
}

}  // namespace test_helpers
