#include "nngls/neighbors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "nngls/kdtree.hpp"
#include "nngls/parallel.hpp"

namespace nngls {

std::string ordering_name(Ordering o) {
  switch (o) {
    case Ordering::coordinate_sum:
      return "coordinate_sum";
    case Ordering::first_axis:
      return "first_axis";
    case Ordering::given:
      return "given";
  }
  return "coordinate_sum";
}

Ordering ordering_from_name(const std::string& name) {
  if (name == "coordinate_sum") return Ordering::coordinate_sum;
  if (name == "first_axis") return Ordering::first_axis;
  if (name == "given") return Ordering::given;
  throw std::invalid_argument("unknown ordering: " + name);
}

namespace {

void check_distinct(const Eigen::MatrixXd& S) {
  const auto n = static_cast<int>(S.rows());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (S(a, 0) != S(b, 0)) return S(a, 0) < S(b, 0);
    return S(a, 1) < S(b, 1);
  });
  for (int k = 1; k < n; ++k) {
    if (S(idx[k], 0) == S(idx[k - 1], 0) && S(idx[k], 1) == S(idx[k - 1], 1)) {
      throw std::invalid_argument("degenerate design: duplicate coordinates");
    }
  }
}

}  // namespace

NeighborDag build_dag(const Eigen::MatrixXd& S, int m, Ordering ordering, const std::vector<int>* given_order,
                      int threads) {
  const auto n = static_cast<int>(S.rows());
  if (n < 1) throw std::invalid_argument("build_dag: need at least one location");
  if (S.cols() != 2) throw std::invalid_argument("build_dag: coordinates must be n x 2");
  if (!S.allFinite()) throw std::invalid_argument("build_dag: non-finite coordinates");
  if (m < 0) throw std::invalid_argument("build_dag: m must be nonnegative");
  check_distinct(S);

  NeighborDag dag;
  dag.m = m;
  dag.ordering = ordering;
  dag.order.resize(static_cast<std::size_t>(n));
  std::iota(dag.order.begin(), dag.order.end(), 0);

  switch (ordering) {
    case Ordering::coordinate_sum:
      std::sort(dag.order.begin(), dag.order.end(), [&](int a, int b) {
        const double sa = S(a, 0) + S(a, 1);
        const double sb = S(b, 0) + S(b, 1);
        if (sa != sb) return sa < sb;
        if (S(a, 0) != S(b, 0)) return S(a, 0) < S(b, 0);
        return a < b;
      });
      break;
    case Ordering::first_axis:
      std::sort(dag.order.begin(), dag.order.end(), [&](int a, int b) {
        if (S(a, 0) != S(b, 0)) return S(a, 0) < S(b, 0);
        if (S(a, 1) != S(b, 1)) return S(a, 1) < S(b, 1);
        return a < b;
      });
      break;
    case Ordering::given: {
      if (given_order == nullptr || static_cast<int>(given_order->size()) != n) {
        throw std::invalid_argument("build_dag: ordering 'given' requires a permutation of size n");
      }
      std::vector<char> seen(static_cast<std::size_t>(n), 0);
      for (int v : *given_order) {
        if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) {
          throw std::invalid_argument("build_dag: supplied order is not a permutation of 0..n-1");
        }
        seen[static_cast<std::size_t>(v)] = 1;
      }
      dag.order = *given_order;
      break;
    }
  }

  dag.position.assign(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < n; ++k) dag.position[static_cast<std::size_t>(dag.order[k])] = k;

  dag.neighbors.assign(static_cast<std::size_t>(n), {});
  if (m == 0 || n == 1) return dag;

  // tree over all points ranked by DAG position; a query at position k admits
  // only points with rank < k
  const KdTree2d tree(S, dag.position);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      if (k == 0) continue;
      const int self = dag.order[k];
      const int want = std::min<int>(m, static_cast<int>(k));
      auto nbrs = tree.knn(S(self, 0), S(self, 1), want, static_cast<int>(k));
      std::sort(nbrs.begin(), nbrs.end());
      dag.neighbors[k] = std::move(nbrs);
    }
  });
  return dag;
}

PredictionNeighbors find_prediction_neighbors(const Eigen::MatrixXd& S_train, const Eigen::MatrixXd& S_query, int m,
                                              int threads) {
  const auto n = static_cast<int>(S_train.rows());
  if (n < 1) throw std::invalid_argument("find_prediction_neighbors: empty training set");
  if (m <= 0) throw std::invalid_argument("find_prediction_neighbors: m must be positive");
  const KdTree2d tree(S_train);
  PredictionNeighbors out;
  out.neighbors.assign(static_cast<std::size_t>(S_query.rows()), {});
  parallel_for(static_cast<std::size_t>(S_query.rows()), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t q = lo; q < hi; ++q) {
      const auto qi = static_cast<Eigen::Index>(q);
      out.neighbors[q] = tree.knn(S_query(qi, 0), S_query(qi, 1), std::min(m, n));
    }
  });
  return out;
}

double min_pairwise_distance(const Eigen::MatrixXd& S) {
  const auto n = static_cast<int>(S.rows());
  if (n < 2) throw std::invalid_argument("min_pairwise_distance: need at least two locations");
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = S(i, 0) - S(j, 0);
      const double dy = S(i, 1) - S(j, 1);
      best = std::min(best, dx * dx + dy * dy);
    }
  }
  return std::sqrt(best);
}

}  // namespace nngls
