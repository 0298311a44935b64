#include "nngls/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nngls/parallel.hpp"
#include "nngls/rng.hpp"

namespace nngls {

namespace {

constexpr double kZ975 = 1.959964;

double normal_quantile_z(double level) {
  if (level != 0.95) {
    throw std::invalid_argument("only the 95% level is supported (hard-coded normal quantiles)");
  }
  return kZ975;
}

// linearly interpolated empirical quantile of a sorted sample
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, n - 1);
  const double w = h - std::floor(h);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

}  // namespace

PredictionResult predict(const FitResult& fit, const SpatialDataset& data, const Eigen::MatrixXd& X0,
                         const Eigen::MatrixXd& S0, double level, int threads) {
  data.validate();
  if (X0.cols() != data.d()) throw std::invalid_argument("predict: covariate dimension mismatch");
  if (S0.rows() != X0.rows() || (X0.rows() > 0 && S0.cols() != 2)) {
    throw std::invalid_argument("predict: query coordinate shape mismatch");
  }
  const CovarianceParams& theta = fit.theta;
  theta.validate();
  const int nthreads = resolve_threads(threads > 0 ? threads : fit.config.threads);
  const auto nq = static_cast<int>(X0.rows());

  PredictionResult out;
  out.y_hat.resize(nq);
  out.sigma0.resize(nq);
  out.pi_lower.resize(nq);
  out.pi_upper.resize(nq);
  if (nq == 0) return out;

  const Eigen::VectorXd f_data = forward(fit.model, data.X);
  const Eigen::VectorXd f_query = forward(fit.model, X0);
  const double z = normal_quantile_z(level);
  const double diag_cov = theta.sigma2 + theta.tau2;

  std::vector<double> divergence(static_cast<std::size_t>(nthreads), 0.0);
  if (fit.config.m == 0) {
    // no spatial borrowing: predictions fall back to the network output
    for (int q = 0; q < nq; ++q) {
      out.y_hat(q) = f_query(q);
      out.sigma0(q) = std::sqrt(diag_cov);
    }
  } else {
    const PredictionNeighbors nbrs = find_prediction_neighbors(data.S, S0, fit.config.m, nthreads);
    std::atomic<int> worker{0};
    parallel_for(static_cast<std::size_t>(nq), nthreads, [&](std::size_t lo, std::size_t hi) {
      const int w = worker.fetch_add(1);
      Eigen::MatrixXd block;
      Eigen::VectorXd cross;
      for (std::size_t q = lo; q < hi; ++q) {
        const auto qi = static_cast<Eigen::Index>(q);
        const auto& nb = nbrs.neighbors[q];
        const int k = static_cast<int>(nb.size());
        block.resize(k, k);
        cross.resize(k);
        for (int a = 0; a < k; ++a) {
          block(a, a) = diag_cov;
          for (int b = a + 1; b < k; ++b) {
            const double dx = data.S(nb[a], 0) - data.S(nb[b], 0);
            const double dy = data.S(nb[a], 1) - data.S(nb[b], 1);
            const double v = matern(std::sqrt(dx * dx + dy * dy), theta);
            block(a, b) = v;
            block(b, a) = v;
          }
          const double dx = S0(qi, 0) - data.S(nb[a], 0);
          const double dy = S0(qi, 1) - data.S(nb[a], 1);
          cross(a) = matern(std::sqrt(dx * dx + dy * dy), theta);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(block);
        if (llt.info() != Eigen::Success) {
          throw std::runtime_error("predict: kriging block not positive definite at query " + std::to_string(q));
        }
        const Eigen::VectorXd b0 = llt.solve(cross);
        const double f00 = diag_cov - cross.dot(b0);
        if (!(f00 > 0.0)) {
          throw std::runtime_error("predict: nonpositive kriging variance at query " + std::to_string(q));
        }

        // direct kriging route on the residuals
        double adj = 0.0;
        for (int a = 0; a < k; ++a) adj += b0(a) * (data.Y(nb[a]) - f_data(nb[a]));
        const double yhat_direct = f_query(qi) + adj;

        // convolution route: O*_0 = v_0 . O_{N*[0]}, then deconvolve
        const double inv_sqrt_f = 1.0 / std::sqrt(f00);
        double ostar = inv_sqrt_f * f_query(qi);
        double by = 0.0;
        for (int a = 0; a < k; ++a) {
          ostar -= inv_sqrt_f * b0(a) * f_data(nb[a]);
          by += b0(a) * data.Y(nb[a]);
        }
        const double yhat_conv = std::sqrt(f00) * ostar + by;

        divergence[static_cast<std::size_t>(w)] =
            std::max(divergence[static_cast<std::size_t>(w)], std::abs(yhat_conv - yhat_direct));
        out.y_hat(qi) = yhat_conv;
        out.sigma0(qi) = std::sqrt(f00);
      }
    });
  }
  out.route_divergence = *std::max_element(divergence.begin(), divergence.end());
  if (!(out.route_divergence < 1e-6)) {
    throw std::runtime_error("predict: kriging route mismatch beyond tolerance");
  }
  out.pi_lower = out.y_hat - z * out.sigma0;
  out.pi_upper = out.y_hat + z * out.sigma0;
  return out;
}

BootstrapBand bootstrap_ci(const SpatialDataset& data, const TrainConfig& config, const FitResult& fit,
                           const BootstrapConfig& boot, const Eigen::MatrixXd& X_new) {
  data.validate();
  config.validate();
  if (boot.B < 2) throw std::invalid_argument("bootstrap_ci: B must be at least 2");
  if (!(boot.level > 0.0 && boot.level < 1.0)) throw std::invalid_argument("bootstrap_ci: bad level");
  if (X_new.cols() != data.d()) throw std::invalid_argument("bootstrap_ci: covariate dimension mismatch");

  const int threads = resolve_threads(config.threads);
  const int budget = boot.max_epochs > 0 ? boot.max_epochs : std::max(1, config.max_epochs / 2);

  // residual decorrelation at the point estimate, over the full dataset
  const Eigen::VectorXd f_hat = forward(fit.model, data.X);
  const Eigen::VectorXd residual = data.Y - f_hat;
  auto dag = std::make_shared<const NeighborDag>(build_dag(data.S, config.m, config.ordering, nullptr, threads));
  const NngpFactors factors = compute_factors(dag, data.S, fit.theta, threads);
  const Eigen::VectorXd omega = decorrelate(factors, residual).values;
  const auto n = static_cast<int>(omega.size());

  const auto nq = static_cast<Eigen::Index>(X_new.rows());
  Eigen::MatrixXd samples(boot.B, nq);
  std::vector<char> ok(static_cast<std::size_t>(boot.B), 0);

  TrainConfig replicate_config = config;
  replicate_config.threads = 1;  // replicates are the parallel axis

  parallel_for(static_cast<std::size_t>(boot.B), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      try {
        Rng rng(derive_seed(config.seed, Stream::bootstrap, b));
        Eigen::VectorXd omega_b(n);
        if (boot.force_identity_permutation) {
          omega_b = omega;
        } else if (boot.with_replacement) {
          for (int i = 0; i < n; ++i) omega_b(i) = omega(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
        } else {
          std::vector<int> perm(static_cast<std::size_t>(n));
          std::iota(perm.begin(), perm.end(), 0);
          rng.shuffle(perm);
          for (int i = 0; i < n; ++i) omega_b(i) = omega(perm[static_cast<std::size_t>(i)]);
        }
        SpatialDataset data_b;
        data_b.X = data.X;
        data_b.S = data.S;
        data_b.Y = f_hat + correlate_back(factors, omega_b);

        TrainConfig cfg_b = replicate_config;
        cfg_b.seed = derive_seed(config.seed, Stream::replicate, b);
        FitResult refit;
        if (boot.reuse_point_fit) {
          refit = refit_nngls(data_b, cfg_b, fit.theta.nu, fit.model, fit.theta, boot.freeze_theta, budget);
        } else {
          cfg_b.max_epochs = budget;
          refit = fit_nngls(data_b, cfg_b, fit.theta.nu);
        }
        samples.row(static_cast<Eigen::Index>(b)) = forward(refit.model, X_new).transpose();
        ok[b] = 1;
      } catch (const std::exception&) {
        ok[b] = 0;
      }
    }
  });

  const int failed = boot.B - static_cast<int>(std::count(ok.begin(), ok.end(), char(1)));
  if (failed * 10 > boot.B) {
    throw std::runtime_error("bootstrap_ci: " + std::to_string(failed) + " of " + std::to_string(boot.B) +
                             " replicate fits failed");
  }

  BootstrapBand band;
  band.B = boot.B - failed;
  band.level = boot.level;
  band.failed_replicates = failed;
  band.lower.resize(nq);
  band.upper.resize(nq);
  const double alpha = 1.0 - boot.level;
  std::vector<double> column;
  column.reserve(static_cast<std::size_t>(band.B));
  for (Eigen::Index q = 0; q < nq; ++q) {
    column.clear();
    for (int b = 0; b < boot.B; ++b) {
      if (ok[static_cast<std::size_t>(b)]) column.push_back(samples(b, q));
    }
    std::sort(column.begin(), column.end());
    band.lower(q) = sorted_quantile(column, alpha / 2.0);
    band.upper(q) = sorted_quantile(column, 1.0 - alpha / 2.0);
  }
  return band;
}

Eigen::VectorXd partial_dependence(const Predictor& predictor, const Eigen::MatrixXd& X, int feature_index,
                                   const Eigen::VectorXd& grid) {
  if (feature_index < 0 || feature_index >= X.cols()) {
    throw std::invalid_argument("partial_dependence: feature index out of range");
  }
  if (X.rows() < 1) throw std::invalid_argument("partial_dependence: empty data");
  Eigen::VectorXd curve(grid.size());
  Eigen::MatrixXd work = X;
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    if (!std::isfinite(grid(g))) throw std::invalid_argument("partial_dependence: non-finite grid value");
    work.col(feature_index).setConstant(grid(g));
    curve(g) = predictor(work).mean();
  }
  return curve;
}

Eigen::VectorXd partial_dependence(const MlpModel& model, const Eigen::MatrixXd& X, int feature_index,
                                   const Eigen::VectorXd& grid) {
  return partial_dependence([&model](const Eigen::MatrixXd& M) { return forward(model, M); }, X, feature_index, grid);
}

}  // namespace nngls
