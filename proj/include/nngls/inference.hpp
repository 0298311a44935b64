#pragma once

#include <functional>

#include "nngls/trainer.hpp"

namespace nngls {

struct PredictionResult {
  Eigen::VectorXd y_hat;     // nearest-neighbor kriging predictions
  Eigen::VectorXd sigma0;    // kriging standard deviations
  Eigen::VectorXd pi_lower;  // y_hat + z_{(1-level)/2} * sigma0
  Eigen::VectorXd pi_upper;
  double route_divergence = 0.0;  // max |convolution route - direct kriging route|
};

// Kriging at new locations: for each query, with N(0) the m nearest rows of
// `data`,
//   y_hat   = f(x0) + Sigma(s0, N(0)) Sigma(N(0), N(0))^{-1} (Y - f)_{N(0)},
//   sigma0^2 = F00 = (sigma2 + tau2) - Sigma(0, N) Sigma(N, N)^{-1} Sigma(N, 0),
// with the nugget on all diagonals. The same number is also produced through
// the graph convolution/deconvolution route (sqrt(F00) O*_0 + B_0 . Y_N);
// both routes are evaluated and their agreement asserted. Prediction
// intervals are centered at y_hat with the hard-coded normal quantiles
// +-1.959964 at the default 95% level.
PredictionResult predict(const FitResult& fit, const SpatialDataset& data, const Eigen::MatrixXd& X0,
                         const Eigen::MatrixXd& S0, double level = 0.95, int threads = 0);

struct BootstrapConfig {
  int B = 100;
  double level = 0.95;
  bool freeze_theta = false;      // keep theta at the point estimate in replicates
  bool with_replacement = false;  // default resamples without replacement (a permutation)
  int max_epochs = -1;            // per-replicate budget; -1 means config.max_epochs / 2
  bool reuse_point_fit = true;    // warm-start replicate networks from the point fit
  bool force_identity_permutation = false;  // test hook
};

struct BootstrapBand {
  Eigen::VectorXd lower, upper;
  int B = 0;
  double level = 0.95;
  int failed_replicates = 0;
};

// Spatial bootstrap for the mean function: decorrelate the residuals with
// the factors at theta-hat, resample, correlate back, refit on each
// (Y*_b, X), and report empirical quantiles of f_b(X_new) per query row.
// Replicates run in parallel; a failed replicate is excluded, more than 10%
// failures is an error.
BootstrapBand bootstrap_ci(const SpatialDataset& data, const TrainConfig& config, const FitResult& fit,
                           const BootstrapConfig& boot, const Eigen::MatrixXd& X_new);

// Partial dependence of a predictor on feature j over a grid:
//   pd(t) = (1/n) sum_i predictor(x_i with coordinate j set to t).
using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

Eigen::VectorXd partial_dependence(const Predictor& predictor, const Eigen::MatrixXd& X, int feature_index,
                                   const Eigen::VectorXd& grid);

Eigen::VectorXd partial_dependence(const MlpModel& model, const Eigen::MatrixXd& X, int feature_index,
                                   const Eigen::VectorXd& grid);

}  // namespace nngls
