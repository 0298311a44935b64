#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>

#include "json.hpp"
#include "nngls/nngp.hpp"

namespace nngls {

// One-hidden-layer perceptron with sigmoid activation:
//   f(x) = alpha0 + beta . sigmoid(W^T x + w0)
struct MlpModel {
  Eigen::MatrixXd W;     // d x d1
  Eigen::VectorXd w0;    // d1
  Eigen::VectorXd beta;  // d1
  double alpha0 = 0.0;

  int d() const { return static_cast<int>(W.rows()); }
  int hidden_units() const { return static_cast<int>(W.cols()); }

  // Seeded uniform initialization on +-sqrt(6 / (fan_in + fan_out)) per
  // block; the bias blocks reuse the bound of their adjacent weight block.
  static MlpModel init(int d, int d1, std::uint64_t seed);
};

Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& X);

// Decorrelated GLS loss restricted to a subset of DAG positions:
//   sum_{k in subset} (Y*_k - O*_k)^2,  O*_k = v_k . O_{N*[k]}.
// Only the rows appearing in some N*[k] of the subset are pushed through the
// network, so a mini-batch costs O(|subset| (m+1) d d1) regardless of n.
// X and Y are the full arrays the DAG was built over (dataset row order).
double gls_loss(const MlpModel& model, const NngpFactors& factors, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                std::span<const int> subset);

struct GradientBundle {
  Eigen::MatrixXd dW;
  Eigen::VectorXd dw0;
  Eigen::VectorXd dbeta;
  double dalpha0 = 0.0;
};

// Exact gradient of gls_loss with respect to (W, w0, beta, alpha0). With
// delta_j = -2 (Y_j - O_j) the decorrelated residual gives
// delta*_k = v_k . delta_{N*[k]}, and the chain rule scatters s = sum_k
// delta*_k v_k back onto the member rows; bias gradients follow the
// constant-unit convention. Optionally reports the subset loss.
GradientBundle backward(const MlpModel& model, const NngpFactors& factors, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& Y, std::span<const int> subset, double* loss_out = nullptr);

struct AdamState {
  Eigen::MatrixXd mW, vW;
  Eigen::VectorXd mw0, vw0, mbeta, vbeta;
  double malpha0 = 0.0, valpha0 = 0.0;
  long t = 0;

  static AdamState zeros(int d, int d1);
};

// Standard Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) applied to
// all four blocks; increments state.t.
void adam_step(MlpModel& model, const GradientBundle& grads, AdamState& state, double lr);

void sgd_step(MlpModel& model, const GradientBundle& grads, double lr);

// Model JSON: weights plus theta, DAG configuration, and the init seed.
nlohmann::json model_to_json(const MlpModel& model, const CovarianceParams& theta, int dag_m, Ordering dag_ordering,
                             std::uint64_t init_seed);

struct PersistedModel {
  MlpModel model;
  CovarianceParams theta;
  int dag_m = 20;
  Ordering dag_ordering = Ordering::coordinate_sum;
  std::uint64_t init_seed = 0;
};

PersistedModel model_from_json(const nlohmann::json& j);

}  // namespace nngls
