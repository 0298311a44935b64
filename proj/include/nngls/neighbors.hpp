#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace nngls {

enum class Ordering {
  coordinate_sum,  // ascending s1+s2 (default NNGP heuristic)
  first_axis,      // ascending s1
  given,           // caller-supplied permutation
};

std::string ordering_name(Ordering o);
Ordering ordering_from_name(const std::string& name);

// Directed nearest-neighbor DAG over a set of locations. Position k in the
// ordering holds dataset index order[k]; neighbors[k] lists the (at most m)
// nearest earlier-ordered locations as dataset indices, ascending. All edges
// point from earlier to later positions, so the graph is acyclic by
// construction. Immutable once built; safe to share across threads.
struct NeighborDag {
  std::vector<int> order;                   // position -> dataset index
  std::vector<int> position;                // dataset index -> position
  std::vector<std::vector<int>> neighbors;  // per position, ascending dataset indices
  int m = 0;
  Ordering ordering = Ordering::coordinate_sum;

  int n() const { return static_cast<int>(order.size()); }
};

// Exact m-nearest-earlier-neighbor DAG. Ties break toward the smaller
// dataset index. Throws on duplicate coordinates ("degenerate design"),
// m < 0, or an invalid user permutation.
NeighborDag build_dag(const Eigen::MatrixXd& S, int m, Ordering ordering = Ordering::coordinate_sum,
                      const std::vector<int>* given_order = nullptr, int threads = 1);

// Per query location: the min(n, m) nearest training indices, sorted by
// (distance, index) so distances are nondecreasing within each list.
struct PredictionNeighbors {
  std::vector<std::vector<int>> neighbors;
};

PredictionNeighbors find_prediction_neighbors(const Eigen::MatrixXd& S_train, const Eigen::MatrixXd& S_query, int m,
                                              int threads = 1);

// Exact minimum pairwise Euclidean distance; requires n >= 2.
double min_pairwise_distance(const Eigen::MatrixXd& S);

}  // namespace nngls
