#include "nngls/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nngls/rng.hpp"

namespace nngls {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Gathers the union of N*[k] over the subset as dataset rows and runs the
// forward pass on those rows only.
struct ActiveForward {
  std::vector<int> rows;       // active dataset rows, ascending
  std::vector<int> local_of;   // dataset row -> local index (-1 if inactive)
  Eigen::MatrixXd Xa;          // |rows| x d
  Eigen::MatrixXd A;           // |rows| x d1, sigmoid activations
  Eigen::VectorXd O;           // |rows|
};

ActiveForward forward_active(const MlpModel& model, const NngpFactors& factors, const Eigen::MatrixXd& X,
                             std::span<const int> subset) {
  const NeighborDag& dag = *factors.dag;
  ActiveForward af;
  af.local_of.assign(static_cast<std::size_t>(dag.n()), -1);
  std::vector<char> seen(static_cast<std::size_t>(dag.n()), 0);
  for (const int k : subset) {
    if (k < 0 || k >= dag.n()) throw std::invalid_argument("gls_loss: subset position out of range");
    const int self = dag.order[static_cast<std::size_t>(k)];
    if (!seen[static_cast<std::size_t>(self)]) {
      seen[static_cast<std::size_t>(self)] = 1;
      af.rows.push_back(self);
    }
    for (const int j : dag.neighbors[static_cast<std::size_t>(k)]) {
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        af.rows.push_back(j);
      }
    }
  }
  std::sort(af.rows.begin(), af.rows.end());
  for (std::size_t i = 0; i < af.rows.size(); ++i) af.local_of[static_cast<std::size_t>(af.rows[i])] = static_cast<int>(i);

  const auto na = static_cast<Eigen::Index>(af.rows.size());
  af.Xa.resize(na, X.cols());
  for (Eigen::Index i = 0; i < na; ++i) af.Xa.row(i) = X.row(af.rows[static_cast<std::size_t>(i)]);
  const Eigen::MatrixXd Z = (af.Xa * model.W).rowwise() + model.w0.transpose();
  af.A = Z.unaryExpr([](double z) { return sigmoid(z); });
  af.O = af.A * model.beta;
  af.O.array() += model.alpha0;
  return af;
}

}  // namespace

MlpModel MlpModel::init(int d, int d1, std::uint64_t seed) {
  if (d < 1 || d1 < 1) throw std::invalid_argument("MlpModel::init: d and d1 must be positive");
  Rng rng(seed);
  MlpModel m;
  m.W.resize(d, d1);
  m.w0.resize(d1);
  m.beta.resize(d1);
  const double bw = std::sqrt(6.0 / (d + d1));
  const double bb = std::sqrt(6.0 / (d1 + 1));
  for (int r = 0; r < d1; ++r) {
    for (int j = 0; j < d; ++j) m.W(j, r) = rng.uniform(-bw, bw);
  }
  for (int r = 0; r < d1; ++r) m.w0(r) = rng.uniform(-bw, bw);
  for (int r = 0; r < d1; ++r) m.beta(r) = rng.uniform(-bb, bb);
  m.alpha0 = rng.uniform(-bb, bb);
  return m;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.d()) throw std::invalid_argument("forward: covariate dimension mismatch");
  Eigen::MatrixXd Z = (X * model.W).rowwise() + model.w0.transpose();
  Eigen::VectorXd O = Z.unaryExpr([](double z) { return sigmoid(z); }) * model.beta;
  O.array() += model.alpha0;
  return O;
}

double gls_loss(const MlpModel& model, const NngpFactors& factors, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                std::span<const int> subset) {
  double loss = 0.0;
  backward(model, factors, X, Y, subset, &loss);
  return loss;
}

GradientBundle backward(const MlpModel& model, const NngpFactors& factors, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& Y, std::span<const int> subset, double* loss_out) {
  if (X.cols() != model.d()) throw std::invalid_argument("backward: covariate dimension mismatch");
  if (Y.size() != factors.n() || X.rows() != factors.n()) {
    throw std::invalid_argument("backward: data and factors disagree on n");
  }
  const NeighborDag& dag = *factors.dag;
  ActiveForward af = forward_active(model, factors, X, subset);
  const auto na = static_cast<Eigen::Index>(af.rows.size());

  double loss = 0.0;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(na);  // s_m = dLoss/dO_m
  for (const int k : subset) {
    const auto& nbrs = dag.neighbors[static_cast<std::size_t>(k)];
    const auto& v = factors.v_weights[static_cast<std::size_t>(k)];
    const int self_local = af.local_of[static_cast<std::size_t>(dag.order[static_cast<std::size_t>(k)])];
    double ystar = v(0) * Y(dag.order[static_cast<std::size_t>(k)]);
    double ostar = v(0) * af.O(self_local);
    for (std::size_t a = 0; a < nbrs.size(); ++a) {
      const int ml = af.local_of[static_cast<std::size_t>(nbrs[a])];
      ystar += v(static_cast<Eigen::Index>(a) + 1) * Y(nbrs[a]);
      ostar += v(static_cast<Eigen::Index>(a) + 1) * af.O(ml);
    }
    const double r = ystar - ostar;
    loss += r * r;
    const double dstar = -2.0 * r;  // delta*_k
    s(self_local) += dstar * v(0);
    for (std::size_t a = 0; a < nbrs.size(); ++a) {
      s(af.local_of[static_cast<std::size_t>(nbrs[a])]) += dstar * v(static_cast<Eigen::Index>(a) + 1);
    }
  }
  if (loss_out) *loss_out = loss;

  GradientBundle g;
  // dO_m/dbeta = A_m, dO_m/dalpha0 = 1
  g.dbeta.noalias() = af.A.transpose() * s;
  g.dalpha0 = s.sum();
  // hidden layer: M_{m,r} = s_m g'(Z_{m,r}) beta_r with g' = A (1 - A)
  Eigen::MatrixXd M = (af.A.array() * (1.0 - af.A.array())).matrix();
  M.array().colwise() *= s.array();
  M.array().rowwise() *= model.beta.transpose().array();
  g.dW.noalias() = af.Xa.transpose() * M;
  g.dw0 = M.colwise().sum().transpose();
  return g;
}

AdamState AdamState::zeros(int d, int d1) {
  AdamState st;
  st.mW = Eigen::MatrixXd::Zero(d, d1);
  st.vW = Eigen::MatrixXd::Zero(d, d1);
  st.mw0 = Eigen::VectorXd::Zero(d1);
  st.vw0 = Eigen::VectorXd::Zero(d1);
  st.mbeta = Eigen::VectorXd::Zero(d1);
  st.vbeta = Eigen::VectorXd::Zero(d1);
  return st;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

template <class Param, class Grad, class M, class V>
void adam_block(Param& p, const Grad& g, M& m, V& v, double lr, double bc1, double bc2) {
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
  p -= lr * (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + kEps).matrix());
}

}  // namespace

void adam_step(MlpModel& model, const GradientBundle& grads, AdamState& state, double lr) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  adam_block(model.W, grads.dW, state.mW, state.vW, lr, bc1, bc2);
  adam_block(model.w0, grads.dw0, state.mw0, state.vw0, lr, bc1, bc2);
  adam_block(model.beta, grads.dbeta, state.mbeta, state.vbeta, lr, bc1, bc2);
  state.malpha0 = kBeta1 * state.malpha0 + (1.0 - kBeta1) * grads.dalpha0;
  state.valpha0 = kBeta2 * state.valpha0 + (1.0 - kBeta2) * grads.dalpha0 * grads.dalpha0;
  model.alpha0 -= lr * (state.malpha0 / bc1) / (std::sqrt(state.valpha0 / bc2) + kEps);
}

void sgd_step(MlpModel& model, const GradientBundle& grads, double lr) {
  model.W -= lr * grads.dW;
  model.w0 -= lr * grads.dw0;
  model.beta -= lr * grads.dbeta;
  model.alpha0 -= lr * grads.dalpha0;
}

nlohmann::json model_to_json(const MlpModel& model, const CovarianceParams& theta, int dag_m, Ordering dag_ordering,
                             std::uint64_t init_seed) {
  nlohmann::json j;
  j["d"] = model.d();
  j["hidden_units"] = model.hidden_units();
  std::vector<std::vector<double>> W(static_cast<std::size_t>(model.d()));
  for (int r = 0; r < model.d(); ++r) {
    W[static_cast<std::size_t>(r)].assign(model.W.row(r).begin(), model.W.row(r).end());
  }
  j["W"] = W;
  j["w0"] = std::vector<double>(model.w0.begin(), model.w0.end());
  j["beta"] = std::vector<double>(model.beta.begin(), model.beta.end());
  j["alpha0"] = model.alpha0;
  j["activation"] = "sigmoid";
  j["theta"] = theta;
  j["dag"] = nlohmann::json{{"m", dag_m}, {"ordering", ordering_name(dag_ordering)}};
  j["init_seed"] = init_seed;
  return j;
}

PersistedModel model_from_json(const nlohmann::json& j) {
  PersistedModel p;
  const int d = j.at("d").get<int>();
  const int d1 = j.at("hidden_units").get<int>();
  if (d < 1 || d1 < 1) throw std::invalid_argument("model json: invalid dimensions");
  if (j.at("activation").get<std::string>() != "sigmoid") {
    throw std::invalid_argument("model json: unsupported activation");
  }
  const auto W = j.at("W").get<std::vector<std::vector<double>>>();
  const auto w0 = j.at("w0").get<std::vector<double>>();
  const auto beta = j.at("beta").get<std::vector<double>>();
  if (static_cast<int>(W.size()) != d || static_cast<int>(w0.size()) != d1 || static_cast<int>(beta.size()) != d1) {
    throw std::invalid_argument("model json: weight shapes disagree with dimensions");
  }
  p.model.W.resize(d, d1);
  for (int r = 0; r < d; ++r) {
    if (static_cast<int>(W[static_cast<std::size_t>(r)].size()) != d1) {
      throw std::invalid_argument("model json: ragged W");
    }
    for (int c = 0; c < d1; ++c) p.model.W(r, c) = W[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  p.model.w0 = Eigen::Map<const Eigen::VectorXd>(w0.data(), d1);
  p.model.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), d1);
  p.model.alpha0 = j.at("alpha0").get<double>();
  p.theta = j.at("theta").get<CovarianceParams>();
  p.dag_m = j.at("dag").at("m").get<int>();
  p.dag_ordering = ordering_from_name(j.at("dag").at("ordering").get<std::string>());
  p.init_seed = j.at("init_seed").get<std::uint64_t>();
  return p;
}

}  // namespace nngls
