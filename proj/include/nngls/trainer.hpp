#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nngls/dataset.hpp"
#include "nngls/network.hpp"

namespace nngls {

enum class OptimizerKind { adam, sgd };
enum class SplitMode { random, block };

struct TrainConfig {
  int hidden_units = 50;
  int batch_size = 50;              // warm start (OLS) phase
  int gls_batch_size = 200;         // GLS phase; 0 means batch_size
  double learning_rate = 0.1;       // warm start (OLS) phase
  double gls_learning_rate = 0.02;  // GLS phase; 0 means learning_rate
  OptimizerKind optimizer = OptimizerKind::adam;
  int max_epochs = 100;
  int patience = 20;
  int theta_update_interval = 5;  // epochs between theta re-estimation
  std::uint64_t seed = 0;
  int m = 20;
  double train_fraction = 0.4;
  double val_fraction = 0.1;
  double test_fraction = 0.5;
  SplitMode split_mode = SplitMode::random;
  int block_k = 4;  // block-random split grid size
  Ordering ordering = Ordering::coordinate_sum;
  bool reshuffle_batches = false;  // default keeps one fixed partition
  // Early-stopping metric on the validation rows: kriged decorrelates the
  // validation residuals against their training neighbors before scoring
  // (sharper, tracks predictive fit); marginal scores raw residuals at the
  // marginal variance (more robust to a collapsing nugget estimate).
  enum class Validation { kriged, marginal };
  Validation validation = Validation::kriged;
  // What fit_nngls returns: the best-validation snapshot (re-scored under the
  // current theta at every comparison) or the final state of the loop.
  enum class Snapshot { best_validation, final };
  Snapshot snapshot = Snapshot::best_validation;
  int nelder_mead_max_evals = 500;
  int threads = 0;  // 0: NNGLS_THREADS env or hardware concurrency

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct SplitIndices {
  std::vector<int> train, val, test;
};

// Disjoint cover of 0..n-1. Random mode shuffles, sizes by floor with the
// remainder going to the largest fractional parts. Block mode tiles the
// bounding box k x k, picks k test blocks with one per row and column
// (resampling on an empty pick, error after 100 attempts) and splits the
// remainder train/val by the renormalized fractions.
SplitIndices split_data(int n, double train_fraction, double val_fraction, double test_fraction, std::uint64_t seed,
                        SplitMode mode = SplitMode::random, int block_k = 0, const Eigen::MatrixXd* S = nullptr);

// Non-spatial warm start: the MLP trained with the OLS loss (the m = 0
// decorrelation path) and early stopping on validation OLS loss.
MlpModel fit_ols_warm_start(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const TrainConfig& config);

struct ThetaBounds {
  double sigma2_min, sigma2_max;
  double tau2_min, tau2_max;
  double phi_min, phi_max;

  // sigma2, tau2 in [1e-6, 1e3] * var; phi in [0.1, 100] / diameter
  static ThetaBounds defaults(double response_variance, double domain_diameter);
};

struct ThetaEstimate {
  CovarianceParams params;
  bool improved = false;  // false: optimizer failed to beat the init
  double init_value = 0.0;
  double final_value = 0.0;
  int evaluations = 0;
};

// Maximizes the NNGP log-likelihood of the residual over
// (log sigma2, log phi, log tau2) with nu fixed, via Nelder-Mead with box
// backstops; at most max_evals objective evaluations; deterministic.
ThetaEstimate estimate_theta(const std::shared_ptr<const NeighborDag>& dag, const Eigen::MatrixXd& S,
                             const Eigen::VectorXd& residual, const CovarianceParams& theta_init,
                             const ThetaBounds& bounds, int max_evals = 500, int threads = 1);

struct EpochRecord {
  int epoch = 0;  // 0 is the warm-start baseline
  double train_loss = 0.0;
  double val_loss = 0.0;
  CovarianceParams theta;
};

struct FitResult {
  MlpModel model;
  CovarianceParams theta;
  std::vector<EpochRecord> history;
  SplitIndices split;
  TrainConfig config;
  std::uint64_t init_seed = 0;

  nlohmann::json model_json() const;
  void write_history_csv(const std::string& path) const;
};

// The full pipeline: DAG over the training locations, OLS warm start,
// initial theta fit, mini-batch GLS training with Adam, theta re-estimation
// every theta_update_interval epochs, early stopping on the decorrelated
// validation loss (neighbor sets drawn from training locations only), best
// validation snapshot returned.
FitResult fit_nngls(const SpatialDataset& dataset, const TrainConfig& config, double nu = 0.5);

// Reduced pipeline for bootstrap replicates: starts from an existing model
// and theta, optionally freezing theta, with its own epoch budget.
FitResult refit_nngls(const SpatialDataset& dataset, const TrainConfig& config, double nu, const MlpModel& init_model,
                      const CovarianceParams& init_theta, bool freeze_theta, int max_epochs);

}  // namespace nngls
