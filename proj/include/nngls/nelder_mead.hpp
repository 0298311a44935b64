#pragma once

#include <Eigen/Dense>
#include <functional>

namespace nngls {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Deterministic downhill-simplex minimizer (reflection 1, expansion 2,
// contraction 0.5, shrink 0.5). The initial simplex offsets x0 by step(i)
// along each axis. Stops when the relative spread of simplex values falls
// below ftol_rel or the evaluation budget is exhausted; returns the best
// vertex seen (which is never worse than x0).
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& step, int max_evals, double ftol_rel);

}  // namespace nngls
