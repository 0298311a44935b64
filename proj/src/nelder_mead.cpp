#include "nngls/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nngls {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& step, int max_evals, double ftol_rel) {
  const auto dim = static_cast<int>(x0.size());
  NelderMeadResult result;
  result.x = x0;

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(dim) + 1, x0);
  std::vector<double> vals(static_cast<std::size_t>(dim) + 1);
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = fn(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  vals[0] = eval(pts[0]);
  for (int i = 0; i < dim; ++i) {
    pts[static_cast<std::size_t>(i) + 1](i) += step(i);
    vals[static_cast<std::size_t>(i) + 1] = eval(pts[static_cast<std::size_t>(i) + 1]);
  }

  std::vector<int> ord(pts.size());
  std::iota(ord.begin(), ord.end(), 0);
  auto sort_simplex = [&] {
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int a, int b) { return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)]; });
  };

  while (evals < max_evals) {
    sort_simplex();
    const int best = ord.front();
    const int worst = ord.back();
    const int second_worst = ord[ord.size() - 2];
    const double fbest = vals[static_cast<std::size_t>(best)];
    const double fworst = vals[static_cast<std::size_t>(worst)];
    if (std::isfinite(fworst) &&
        2.0 * std::abs(fworst - fbest) <= ftol_rel * (std::abs(fworst) + std::abs(fbest) + 1e-300)) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < ord.size(); ++i) {
      if (ord[i] != worst) centroid += pts[static_cast<std::size_t>(ord[i])];
    }
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[static_cast<std::size_t>(worst)]);
    const double fr = eval(reflected);
    if (fr < fbest) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[static_cast<std::size_t>(worst)]);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[static_cast<std::size_t>(worst)] = expanded;
        vals[static_cast<std::size_t>(worst)] = fe;
      } else {
        pts[static_cast<std::size_t>(worst)] = reflected;
        vals[static_cast<std::size_t>(worst)] = fr;
      }
    } else if (fr < vals[static_cast<std::size_t>(second_worst)]) {
      pts[static_cast<std::size_t>(worst)] = reflected;
      vals[static_cast<std::size_t>(worst)] = fr;
    } else {
      const bool outside = fr < fworst;
      const Eigen::VectorXd base = outside ? reflected : pts[static_cast<std::size_t>(worst)];
      const Eigen::VectorXd contracted = centroid + 0.5 * (base - centroid);
      const double fc = eval(contracted);
      if (fc < std::min(fr, fworst)) {
        pts[static_cast<std::size_t>(worst)] = contracted;
        vals[static_cast<std::size_t>(worst)] = fc;
      } else {
        // shrink toward the best vertex
        for (std::size_t i = 0; i < ord.size(); ++i) {
          if (ord[i] == best) continue;
          auto& p = pts[static_cast<std::size_t>(ord[i])];
          p = pts[static_cast<std::size_t>(best)] + 0.5 * (p - pts[static_cast<std::size_t>(best)]);
          vals[static_cast<std::size_t>(ord[i])] = eval(p);
          if (evals >= max_evals) break;
        }
      }
    }
  }

  sort_simplex();
  result.x = pts[static_cast<std::size_t>(ord.front())];
  result.value = vals[static_cast<std::size_t>(ord.front())];
  result.evaluations = evals;
  return result;
}

}  // namespace nngls
