#include "nngls/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "nngls/nelder_mead.hpp"
#include "nngls/parallel.hpp"
#include "nngls/rng.hpp"

namespace nngls {

void TrainConfig::validate() const {
  if (hidden_units < 1) throw std::invalid_argument("hidden_units must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (gls_batch_size < 0) throw std::invalid_argument("gls_batch_size must be nonnegative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (gls_learning_rate < 0.0) throw std::invalid_argument("gls_learning_rate must be nonnegative");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be nonnegative");
  if (patience < 1) throw std::invalid_argument("patience must be positive");
  if (theta_update_interval < 1) throw std::invalid_argument("theta_update_interval must be positive");
  if (m < 0) throw std::invalid_argument("m must be nonnegative");
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0 ||
      std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to 1");
  }
  if (train_fraction == 0.0) throw std::invalid_argument("train fraction must be positive");
  if (nelder_mead_max_evals < 1) throw std::invalid_argument("nelder_mead_max_evals must be positive");
  if (split_mode == SplitMode::block && block_k < 2) throw std::invalid_argument("block_k must be at least 2");
}

namespace {

std::string optimizer_name(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer: " + s);
}

std::string split_mode_name(SplitMode m) { return m == SplitMode::random ? "random" : "block"; }

SplitMode split_mode_from_name(const std::string& s) {
  if (s == "random") return SplitMode::random;
  if (s == "block") return SplitMode::block;
  throw std::invalid_argument("unknown split mode: " + s);
}

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"hidden_units", c.hidden_units},
                     {"batch_size", c.batch_size},
                     {"gls_batch_size", c.gls_batch_size},
                     {"learning_rate", c.learning_rate},
                     {"gls_learning_rate", c.gls_learning_rate},
                     {"optimizer", optimizer_name(c.optimizer)},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"theta_update_interval", c.theta_update_interval},
                     {"seed", c.seed},
                     {"m", c.m},
                     {"split", {c.train_fraction, c.val_fraction, c.test_fraction}},
                     {"split_mode", split_mode_name(c.split_mode)},
                     {"block_k", c.block_k},
                     {"ordering", ordering_name(c.ordering)},
                     {"reshuffle_batches", c.reshuffle_batches},
                     {"validation", c.validation == TrainConfig::Validation::kriged ? "kriged" : "marginal"},
                     {"snapshot", c.snapshot == TrainConfig::Snapshot::best_validation ? "best_validation" : "final"},
                     {"nelder_mead_max_evals", c.nelder_mead_max_evals},
                     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("hidden_units")) j.at("hidden_units").get_to(c.hidden_units);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("gls_batch_size")) j.at("gls_batch_size").get_to(c.gls_batch_size);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("gls_learning_rate")) j.at("gls_learning_rate").get_to(c.gls_learning_rate);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  if (j.contains("max_epochs")) j.at("max_epochs").get_to(c.max_epochs);
  if (j.contains("patience")) j.at("patience").get_to(c.patience);
  if (j.contains("theta_update_interval")) j.at("theta_update_interval").get_to(c.theta_update_interval);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("m")) j.at("m").get_to(c.m);
  if (j.contains("split")) {
    const auto f = j.at("split").get<std::vector<double>>();
    if (f.size() != 3) throw std::invalid_argument("split must have 3 fractions");
    c.train_fraction = f[0];
    c.val_fraction = f[1];
    c.test_fraction = f[2];
  }
  if (j.contains("split_mode")) c.split_mode = split_mode_from_name(j.at("split_mode").get<std::string>());
  if (j.contains("block_k")) j.at("block_k").get_to(c.block_k);
  if (j.contains("ordering")) c.ordering = ordering_from_name(j.at("ordering").get<std::string>());
  if (j.contains("reshuffle_batches")) j.at("reshuffle_batches").get_to(c.reshuffle_batches);
  if (j.contains("validation")) {
    const auto name = j.at("validation").get<std::string>();
    if (name == "kriged") {
      c.validation = TrainConfig::Validation::kriged;
    } else if (name == "marginal") {
      c.validation = TrainConfig::Validation::marginal;
    } else {
      throw std::invalid_argument("unknown validation mode: " + name);
    }
  }
  if (j.contains("snapshot")) {
    const auto name = j.at("snapshot").get<std::string>();
    if (name == "best_validation") {
      c.snapshot = TrainConfig::Snapshot::best_validation;
    } else if (name == "final") {
      c.snapshot = TrainConfig::Snapshot::final;
    } else {
      throw std::invalid_argument("unknown snapshot mode: " + name);
    }
  }
  if (j.contains("nelder_mead_max_evals")) j.at("nelder_mead_max_evals").get_to(c.nelder_mead_max_evals);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
  c.validate();
}

namespace {

// floor counts, remainder to the largest fractional parts (train, val, test on ties)
std::array<int, 3> split_sizes(int n, double ft, double fv, double fe) {
  const double want[3] = {ft * n, fv * n, fe * n};
  std::array<int, 3> size{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    size[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(want[i]));
    assigned += size[static_cast<std::size_t>(i)];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return want[a] - std::floor(want[a]) > want[b] - std::floor(want[b]);
  });
  for (int r = 0; r < n - assigned; ++r) ++size[static_cast<std::size_t>(order[static_cast<std::size_t>(r % 3)])];
  return size;
}

SplitIndices random_split(std::vector<int> pool, double ft, double fv, double fe, Rng& rng) {
  const auto sz = split_sizes(static_cast<int>(pool.size()), ft, fv, fe);
  rng.shuffle(pool);
  SplitIndices out;
  out.train.assign(pool.begin(), pool.begin() + sz[0]);
  out.val.assign(pool.begin() + sz[0], pool.begin() + sz[0] + sz[1]);
  out.test.assign(pool.begin() + sz[0] + sz[1], pool.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace

SplitIndices split_data(int n, double train_fraction, double val_fraction, double test_fraction, std::uint64_t seed,
                        SplitMode mode, int block_k, const Eigen::MatrixXd* S) {
  if (n < 1) throw std::invalid_argument("split_data: n must be positive");
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0 ||
      std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("split_data: fractions must be nonnegative and sum to 1");
  }
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);

  if (mode == SplitMode::random) {
    Rng rng(derive_seed(seed, Stream::split));
    return random_split(std::move(all), train_fraction, val_fraction, test_fraction, rng);
  }

  if (S == nullptr || S->rows() != n) throw std::invalid_argument("split_data: block mode requires coordinates");
  const int k = block_k;
  if (k < 2) throw std::invalid_argument("split_data: block mode requires k >= 2");

  const double x0 = S->col(0).minCoeff(), x1 = S->col(0).maxCoeff();
  const double y0 = S->col(1).minCoeff(), y1 = S->col(1).maxCoeff();
  const double wx = std::max(x1 - x0, 1e-300), wy = std::max(y1 - y0, 1e-300);
  auto block_of = [&](int i, int axis) {
    const double t = axis == 0 ? (S->coeff(i, 0) - x0) / wx : (S->coeff(i, 1) - y0) / wy;
    return std::min(k - 1, static_cast<int>(t * k));
  };

  Rng rng(derive_seed(seed, Stream::split));
  for (int attempt = 0; attempt < 100; ++attempt) {
    // one test block per grid row and column: a column permutation
    std::vector<int> sigma(static_cast<std::size_t>(k));
    std::iota(sigma.begin(), sigma.end(), 0);
    rng.shuffle(sigma);

    std::vector<char> in_test(static_cast<std::size_t>(n), 0);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int bx = block_of(i, 0);
      const int by = block_of(i, 1);
      if (sigma[static_cast<std::size_t>(bx)] == by) {
        in_test[static_cast<std::size_t>(i)] = 1;
        ++counts[static_cast<std::size_t>(bx)];
      }
    }
    if (std::any_of(counts.begin(), counts.end(), [](int c) { return c == 0; })) continue;

    std::vector<int> rest;
    SplitIndices out;
    for (int i = 0; i < n; ++i) {
      if (in_test[static_cast<std::size_t>(i)]) {
        out.test.push_back(i);
      } else {
        rest.push_back(i);
      }
    }
    const double denom = train_fraction + val_fraction;
    const double ft = denom > 0 ? train_fraction / denom : 1.0;
    SplitIndices tv = random_split(std::move(rest), ft, 1.0 - ft, 0.0, rng);
    out.train = std::move(tv.train);
    out.val = std::move(tv.val);
    return out;
  }
  throw std::runtime_error("split_data: no block assignment with nonempty test blocks found in 100 attempts");
}

ThetaBounds ThetaBounds::defaults(double response_variance, double domain_diameter) {
  const double v = std::max(response_variance, 1e-12);
  const double diam = std::max(domain_diameter, 1e-12);
  return ThetaBounds{1e-6 * v, 1e3 * v, 1e-6 * v, 1e3 * v, 0.1 / diam, 100.0 / diam};
}

ThetaEstimate estimate_theta(const std::shared_ptr<const NeighborDag>& dag, const Eigen::MatrixXd& S,
                             const Eigen::VectorXd& residual, const CovarianceParams& theta_init,
                             const ThetaBounds& bounds, int max_evals, int threads) {
  if (residual.size() < 2) throw std::invalid_argument("estimate_theta: insufficient data");
  if (!dag || dag->n() != residual.size()) throw std::invalid_argument("estimate_theta: DAG and residual disagree");

  auto clamp = [](double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); };
  CovarianceParams init = theta_init;
  init.sigma2 = clamp(init.sigma2, bounds.sigma2_min, bounds.sigma2_max);
  init.tau2 = clamp(init.tau2, bounds.tau2_min, bounds.tau2_max);
  init.phi = clamp(init.phi, bounds.phi_min, bounds.phi_max);
  init.validate();

  auto objective = [&](const Eigen::VectorXd& x) {
    CovarianceParams p;
    p.sigma2 = std::exp(x(0));
    p.phi = std::exp(x(1));
    p.tau2 = std::exp(x(2));
    p.nu = init.nu;
    if (p.sigma2 < bounds.sigma2_min || p.sigma2 > bounds.sigma2_max || p.tau2 < bounds.tau2_min ||
        p.tau2 > bounds.tau2_max || p.phi < bounds.phi_min || p.phi > bounds.phi_max) {
      return std::numeric_limits<double>::infinity();
    }
    return nngp_neg_loglik(dag, S, residual, p, threads);
  };

  Eigen::VectorXd x0(3);
  x0 << std::log(init.sigma2), std::log(init.phi), std::log(init.tau2);
  const Eigen::VectorXd step = Eigen::VectorXd::Constant(3, 0.7);
  const NelderMeadResult nm = nelder_mead(objective, x0, step, max_evals, 1e-7);

  ThetaEstimate est;
  est.init_value = nngp_neg_loglik(dag, S, residual, init, threads);
  est.evaluations = nm.evaluations;
  est.improved = nm.value < est.init_value;
  est.params = init;
  est.final_value = est.init_value;
  if (est.improved) {
    est.params.sigma2 = std::exp(nm.x(0));
    est.params.phi = std::exp(nm.x(1));
    est.params.tau2 = std::exp(nm.x(2));
    est.final_value = nm.value;
  }
  return est;
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& M, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

double variance_of(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  const double mu = v.mean();
  return (v.array() - mu).square().sum() / static_cast<double>(v.size());
}

double bounding_box_diameter(const Eigen::MatrixXd& S) {
  const double wx = S.col(0).maxCoeff() - S.col(0).minCoeff();
  const double wy = S.col(1).maxCoeff() - S.col(1).minCoeff();
  return std::sqrt(wx * wx + wy * wy);
}

// identity working covariance (F = 1, B = 0): the OLS path
NngpFactors identity_factors(const std::shared_ptr<const NeighborDag>& dag0) {
  NngpFactors f;
  f.dag = dag0;
  f.theta = CovarianceParams{1.0, 1.0, 0.5, 0.0};
  const int n = dag0->n();
  f.b_rows.assign(static_cast<std::size_t>(n), Eigen::VectorXd());
  f.f_diag = Eigen::VectorXd::Ones(n);
  f.v_weights.assign(static_cast<std::size_t>(n), Eigen::VectorXd::Ones(1));
  return f;
}

// Kriging weights of validation points against their training neighbors;
// they depend on theta only and are refreshed after every theta update.
// Carries its own neighbor lists so the identity (OLS) case is just empty
// lists with unit variances.
struct ValWeights {
  std::vector<std::vector<int>> nbrs;
  std::vector<Eigen::VectorXd> b0;
  Eigen::VectorXd f00;

  static ValWeights identity(std::size_t n_val) {
    ValWeights vw;
    vw.nbrs.assign(n_val, {});
    vw.b0.assign(n_val, Eigen::VectorXd());
    vw.f00 = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_val));
    return vw;
  }
};

ValWeights compute_val_weights(const Eigen::MatrixXd& Str, const Eigen::MatrixXd& Sval,
                               const PredictionNeighbors& nbrs, const CovarianceParams& theta) {
  ValWeights vw;
  const auto nv = static_cast<Eigen::Index>(nbrs.neighbors.size());
  vw.nbrs = nbrs.neighbors;
  vw.b0.resize(static_cast<std::size_t>(nv));
  vw.f00.resize(nv);
  const double diag_cov = theta.sigma2 + theta.tau2;
  for (Eigen::Index q = 0; q < nv; ++q) {
    const auto& nb = nbrs.neighbors[static_cast<std::size_t>(q)];
    const int k = static_cast<int>(nb.size());
    if (k == 0) {
      vw.b0[static_cast<std::size_t>(q)] = Eigen::VectorXd();
      vw.f00(q) = diag_cov;
      continue;
    }
    Eigen::MatrixXd block(k, k);
    Eigen::VectorXd cross(k);
    for (int a = 0; a < k; ++a) {
      block(a, a) = diag_cov;
      for (int b = a + 1; b < k; ++b) {
        const double dx = Str(nb[a], 0) - Str(nb[b], 0);
        const double dy = Str(nb[a], 1) - Str(nb[b], 1);
        const double v = matern(std::sqrt(dx * dx + dy * dy), theta);
        block(a, b) = v;
        block(b, a) = v;
      }
      const double dx = Sval(q, 0) - Str(nb[a], 0);
      const double dy = Sval(q, 1) - Str(nb[a], 1);
      cross(a) = matern(std::sqrt(dx * dx + dy * dy), theta);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("validation kriging block not positive definite");
    }
    vw.b0[static_cast<std::size_t>(q)] = llt.solve(cross);
    vw.f00(q) = diag_cov - cross.dot(vw.b0[static_cast<std::size_t>(q)]);
  }
  return vw;
}

// Decorrelated loss on the validation points, neighbor sets from training
// locations only, plus the log-variance normalizer so that snapshots taken
// under different theta are comparable (without it, inflating sigma2 + tau2
// shrinks the quadratic form and wins every comparison). The identity
// weights reduce this to the OLS loss.
double validation_loss(const MlpModel& model, const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& Ytr,
                       const Eigen::MatrixXd& Xval, const Eigen::VectorXd& Yval, const ValWeights& vw) {
  const Eigen::VectorXd rtr = Ytr - forward(model, Xtr);
  const Eigen::VectorXd rval = Yval - forward(model, Xval);
  double loss = 0.0;
  for (Eigen::Index q = 0; q < rval.size(); ++q) {
    const auto& nb = vw.nbrs[static_cast<std::size_t>(q)];
    const auto& b0 = vw.b0[static_cast<std::size_t>(q)];
    double adj = rval(q);
    for (std::size_t a = 0; a < nb.size(); ++a) adj -= b0(static_cast<Eigen::Index>(a)) * rtr(nb[a]);
    loss += adj * adj / vw.f00(q) + std::log(vw.f00(q));
  }
  return loss;
}

// Training happens on standardized covariates and responses (moments from
// the training split); the affine map folds back into the returned weights
// exactly, so callers only ever see original-scale models and theta.
struct Standardizer {
  Eigen::VectorXd x_mean, x_scale;
  double y_mean = 0.0, y_scale = 1.0;

  static Standardizer fit(const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& Ytr) {
    Standardizer st;
    st.x_mean = Xtr.colwise().mean();
    st.x_scale.resize(Xtr.cols());
    for (Eigen::Index j = 0; j < Xtr.cols(); ++j) {
      const double sd = std::sqrt((Xtr.col(j).array() - st.x_mean(j)).square().sum() / Xtr.rows());
      st.x_scale(j) = sd > 1e-12 ? sd : 1.0;
    }
    st.y_mean = Ytr.mean();
    const double sd = std::sqrt((Ytr.array() - st.y_mean).square().sum() / Ytr.rows());
    st.y_scale = sd > 1e-12 ? sd : 1.0;
    return st;
  }

  Eigen::MatrixXd transform_x(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array();
  }
  Eigen::VectorXd transform_y(const Eigen::VectorXd& Y) const { return (Y.array() - y_mean) / y_scale; }

  // exact affine folding between the standardized-space and original-space
  // weight representations
  MlpModel fold_to_original(const MlpModel& m) const {
    MlpModel out = m;
    for (Eigen::Index j = 0; j < out.W.rows(); ++j) out.W.row(j) = m.W.row(j) / x_scale(j);
    out.w0 = m.w0 - out.W.transpose() * x_mean;
    out.beta = y_scale * m.beta;
    out.alpha0 = y_mean + y_scale * m.alpha0;
    return out;
  }
  MlpModel fold_to_standardized(const MlpModel& m) const {
    MlpModel out = m;
    for (Eigen::Index j = 0; j < out.W.rows(); ++j) out.W.row(j) = m.W.row(j) * x_scale(j);
    out.w0 = m.w0 + m.W.transpose() * x_mean;
    out.beta = m.beta / y_scale;
    out.alpha0 = (m.alpha0 - y_mean) / y_scale;
    return out;
  }
  CovarianceParams theta_to_original(CovarianceParams t) const {
    t.sigma2 *= y_scale * y_scale;
    t.tau2 *= y_scale * y_scale;
    return t;
  }
  CovarianceParams theta_to_standardized(CovarianceParams t) const {
    t.sigma2 /= y_scale * y_scale;
    t.tau2 /= y_scale * y_scale;
    return t;
  }
};

struct LoopSetup {
  Eigen::MatrixXd Xtr, Str, Xval, Sval;
  Eigen::VectorXd Ytr, Yval;
  std::shared_ptr<const NeighborDag> dag;
  PredictionNeighbors val_nbrs;  // empty lists when m = 0, no val rows, or marginal validation
  Standardizer std;

  bool has_val() const { return Yval.size() > 0; }
};

LoopSetup make_setup(const SpatialDataset& data, const SplitIndices& split, const TrainConfig& config, int threads) {
  LoopSetup s;
  s.Xtr = gather_rows(data.X, split.train);
  s.Ytr = gather(data.Y, split.train);
  s.std = Standardizer::fit(s.Xtr, s.Ytr);
  s.Xtr = s.std.transform_x(s.Xtr);
  s.Ytr = s.std.transform_y(s.Ytr);
  s.Str = gather_rows(data.S, split.train);
  s.Xval = s.std.transform_x(gather_rows(data.X, split.val));
  s.Yval = s.std.transform_y(gather(data.Y, split.val));
  s.Sval = gather_rows(data.S, split.val);
  s.dag = std::make_shared<const NeighborDag>(build_dag(s.Str, config.m, config.ordering, nullptr, threads));
  if (!split.val.empty() && config.m > 0 && config.validation == TrainConfig::Validation::kriged) {
    s.val_nbrs = find_prediction_neighbors(s.Str, s.Sval, config.m, threads);
  } else {
    s.val_nbrs.neighbors.assign(split.val.size(), std::vector<int>{});
  }
  return s;
}

struct LoopResult {
  MlpModel model;
  CovarianceParams theta;
  std::vector<EpochRecord> history;
};

// Mini-batch training loop shared by the warm start (identity factors, theta
// frozen) and the GLS phase. Returns the best-validation snapshot; the
// initial state is a candidate.
LoopResult train_gls_loop(const LoopSetup& s, const TrainConfig& config, MlpModel model, CovarianceParams theta,
                          bool identity_working_cov, bool update_theta, int max_epochs, std::uint64_t batch_stream,
                          double lr, int batch_size, int threads) {
  const auto ntr = static_cast<int>(s.Ytr.size());
  NngpFactors factors;
  ValWeights vw;
  if (identity_working_cov) {
    // OLS path: own m = 0 DAG so the subset convolution is a no-op
    auto dag0 = std::make_shared<const NeighborDag>(build_dag(s.Str, 0, config.ordering));
    factors = identity_factors(dag0);
    vw = ValWeights::identity(static_cast<std::size_t>(s.Yval.size()));
  } else {
    factors = compute_factors(s.dag, s.Str, theta, threads);
    if (s.has_val()) vw = compute_val_weights(s.Str, s.Sval, s.val_nbrs, theta);
  }
  AdamState adam = AdamState::zeros(model.d(), model.hidden_units());

  std::vector<int> positions(static_cast<std::size_t>(ntr));
  std::iota(positions.begin(), positions.end(), 0);
  {
    Rng r(derive_seed(config.seed, Stream::batches, batch_stream));
    r.shuffle(positions);
  }
  std::vector<int> all_positions(static_cast<std::size_t>(ntr));
  std::iota(all_positions.begin(), all_positions.end(), 0);

  const ThetaBounds bounds = ThetaBounds::defaults(variance_of(s.Ytr), bounding_box_diameter(s.Str));

  LoopResult out;
  out.model = model;
  out.theta = theta;

  auto record = [&](int epoch, const MlpModel& mdl) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = gls_loss(mdl, factors, s.Xtr, s.Ytr, all_positions);
    rec.val_loss = s.has_val() ? validation_loss(mdl, s.Xtr, s.Ytr, s.Xval, s.Yval, vw) : rec.train_loss;
    rec.theta = theta;
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw std::runtime_error("training aborted: non-finite loss at epoch " + std::to_string(epoch));
    }
    out.history.push_back(rec);
    return rec;
  };

  // The incumbent best snapshot is re-scored under the current theta before
  // every comparison. Theta refits shift the validation scale (through the
  // conditional variances), so comparing values cached under older theta
  // would rank eras rather than models.
  auto score = [&](const MlpModel& mdl) {
    return s.has_val() ? validation_loss(mdl, s.Xtr, s.Ytr, s.Xval, s.Yval, vw)
                       : gls_loss(mdl, factors, s.Xtr, s.Ytr, all_positions);
  };

  record(0, model);
  int since_improve = 0;

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    if (config.reshuffle_batches) {
      Rng r(derive_seed(config.seed, Stream::batches, batch_stream + static_cast<std::uint64_t>(epoch)));
      r.shuffle(positions);
    }
    for (int start = 0; start < ntr; start += batch_size) {
      const int len = std::min(batch_size, ntr - start);
      const std::span<const int> batch(positions.data() + static_cast<std::size_t>(start),
                                       static_cast<std::size_t>(len));
      const GradientBundle g = backward(model, factors, s.Xtr, s.Ytr, batch);
      if (config.optimizer == OptimizerKind::adam) {
        adam_step(model, g, adam, lr);
      } else {
        sgd_step(model, g, lr);
      }
    }
    if (update_theta && !identity_working_cov && epoch % config.theta_update_interval == 0) {
      const Eigen::VectorXd residual = s.Ytr - forward(model, s.Xtr);
      const ThetaEstimate est = estimate_theta(s.dag, s.Str, residual, theta, bounds, config.nelder_mead_max_evals,
                                               threads);
      theta = est.params;
      factors = compute_factors(s.dag, s.Str, theta, threads);
      if (s.has_val()) vw = compute_val_weights(s.Str, s.Sval, s.val_nbrs, theta);
    }
    const EpochRecord rec = record(epoch, model);
    if (rec.val_loss < score(out.model)) {
      out.model = model;
      out.theta = theta;
      since_improve = 0;
    } else {
      ++since_improve;
    }
    if (since_improve >= config.patience) break;
  }
  if (config.snapshot == TrainConfig::Snapshot::final) {
    out.model = std::move(model);
    out.theta = theta;
  }
  return out;
}

// heuristic theta init for the first likelihood fit: split the residual
// variance evenly, decay reaching 0.05 at a fifth of the domain diameter
CovarianceParams initial_theta_guess(const Eigen::VectorXd& residual, const Eigen::MatrixXd& S, double nu) {
  const double v = std::max(variance_of(residual), 1e-8);
  CovarianceParams t;
  t.sigma2 = 0.5 * v;
  t.tau2 = 0.5 * v;
  t.nu = nu;
  const double diam = std::max(bounding_box_diameter(S), 1e-12);
  t.phi = -std::log(0.05) / (std::sqrt(2.0) * diam / 5.0);
  return t;
}

}  // namespace

MlpModel fit_ols_warm_start(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const TrainConfig& config) {
  config.validate();
  if (X.rows() != Y.size() || X.rows() < 1) throw std::invalid_argument("fit_ols_warm_start: bad data shapes");
  const int threads = resolve_threads(config.threads);
  SpatialDataset fake;  // the OLS path never looks at coordinates; synthesize a grid
  fake.X = X;
  fake.Y = Y;
  fake.S.resize(X.rows(), 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    fake.S(i, 0) = static_cast<double>(i);
    fake.S(i, 1) = 0.0;
  }
  const SplitIndices split = split_data(static_cast<int>(X.rows()), config.train_fraction, config.val_fraction,
                                        config.test_fraction, config.seed);
  TrainConfig ols = config;
  ols.m = 0;
  const LoopSetup setup = make_setup(fake, split, ols, threads);
  MlpModel model = MlpModel::init(static_cast<int>(X.cols()), config.hidden_units,
                                  derive_seed(config.seed, Stream::weights));
  LoopResult r = train_gls_loop(setup, ols, std::move(model), CovarianceParams{1.0, 1.0, 0.5, 0.0},
                                /*identity_working_cov=*/true, /*update_theta=*/false, config.max_epochs,
                                /*batch_stream=*/0, config.learning_rate, config.batch_size, threads);
  return setup.std.fold_to_original(r.model);
}

nlohmann::json FitResult::model_json() const {
  return model_to_json(model, theta, config.m, config.ordering, init_seed);
}

void FitResult::write_history_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << "epoch,train_loss,val_loss,sigma2,phi,tau2\n";
  for (const auto& rec : history) {
    out << rec.epoch << "," << format_double(rec.train_loss) << "," << format_double(rec.val_loss) << ","
        << format_double(rec.theta.sigma2) << "," << format_double(rec.theta.phi) << ","
        << format_double(rec.theta.tau2) << "\n";
  }
}

FitResult fit_nngls(const SpatialDataset& dataset, const TrainConfig& config, double nu) {
  dataset.validate();
  config.validate();
  const int threads = resolve_threads(config.threads);
  const int n = static_cast<int>(dataset.n());

  FitResult fit;
  fit.config = config;
  fit.init_seed = derive_seed(config.seed, Stream::weights);
  fit.split = split_data(n, config.train_fraction, config.val_fraction, config.test_fraction, config.seed,
                         config.split_mode, config.block_k, &dataset.S);
  const LoopSetup setup = make_setup(dataset, fit.split, config, threads);

  // warm start: identity working covariance (OLS), theta frozen
  MlpModel model = MlpModel::init(static_cast<int>(dataset.d()), config.hidden_units, fit.init_seed);
  LoopResult warm = train_gls_loop(setup, config, std::move(model), CovarianceParams{1.0, 1.0, nu, 0.0},
                                   /*identity_working_cov=*/true, /*update_theta=*/false, config.max_epochs,
                                   /*batch_stream=*/0, config.learning_rate, config.batch_size, threads);

  // initial spatial parameters from the warm-start residual
  const Eigen::VectorXd residual = setup.Ytr - forward(warm.model, setup.Xtr);
  const ThetaBounds bounds = ThetaBounds::defaults(variance_of(setup.Ytr), bounding_box_diameter(setup.Str));
  const ThetaEstimate init_est = estimate_theta(setup.dag, setup.Str, residual,
                                                initial_theta_guess(residual, setup.Str, nu), bounds,
                                                config.nelder_mead_max_evals, threads);

  const double gls_lr = config.gls_learning_rate > 0.0 ? config.gls_learning_rate : config.learning_rate;
  const int gls_batch = config.gls_batch_size > 0 ? config.gls_batch_size : config.batch_size;
  LoopResult gls = train_gls_loop(setup, config, warm.model, init_est.params, /*identity_working_cov=*/false,
                                  /*update_theta=*/true, config.max_epochs, /*batch_stream=*/1, gls_lr, gls_batch,
                                  threads);
  fit.model = setup.std.fold_to_original(gls.model);
  fit.theta = setup.std.theta_to_original(gls.theta);
  fit.history = std::move(gls.history);
  for (auto& rec : fit.history) rec.theta = setup.std.theta_to_original(rec.theta);
  return fit;
}

FitResult refit_nngls(const SpatialDataset& dataset, const TrainConfig& config, double nu, const MlpModel& init_model,
                      const CovarianceParams& init_theta, bool freeze_theta, int max_epochs) {
  dataset.validate();
  config.validate();
  const int threads = resolve_threads(config.threads);
  const int n = static_cast<int>(dataset.n());

  FitResult fit;
  fit.config = config;
  fit.init_seed = derive_seed(config.seed, Stream::weights);
  fit.split = split_data(n, config.train_fraction, config.val_fraction, config.test_fraction, config.seed,
                         config.split_mode, config.block_k, &dataset.S);
  const LoopSetup setup = make_setup(dataset, fit.split, config, threads);

  const MlpModel model0 = setup.std.fold_to_standardized(init_model);
  CovarianceParams theta = setup.std.theta_to_standardized(init_theta);
  theta.nu = nu;
  if (!freeze_theta) {
    const Eigen::VectorXd residual = setup.Ytr - forward(model0, setup.Xtr);
    const ThetaBounds bounds = ThetaBounds::defaults(variance_of(setup.Ytr), bounding_box_diameter(setup.Str));
    theta = estimate_theta(setup.dag, setup.Str, residual, theta, bounds, config.nelder_mead_max_evals, threads)
                .params;
  }
  const double gls_lr = config.gls_learning_rate > 0.0 ? config.gls_learning_rate : config.learning_rate;
  const int gls_batch = config.gls_batch_size > 0 ? config.gls_batch_size : config.batch_size;
  LoopResult gls = train_gls_loop(setup, config, model0, theta, /*identity_working_cov=*/false,
                                  /*update_theta=*/!freeze_theta, max_epochs, /*batch_stream=*/1, gls_lr, gls_batch,
                                  threads);
  fit.model = setup.std.fold_to_original(gls.model);
  fit.theta = setup.std.theta_to_original(gls.theta);
  fit.history = std::move(gls.history);
  for (auto& rec : fit.history) rec.theta = setup.std.theta_to_original(rec.theta);
  return fit;
}

}  // namespace nngls
