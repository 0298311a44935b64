#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "nngls/neighbors.hpp"

using namespace nngls;

TEST_CASE("build_dag: single location has no neighbors") {
  Eigen::MatrixXd S(1, 2);
  S << 0.3, 0.7;
  const NeighborDag dag = build_dag(S, 20);
  CHECK(dag.order == std::vector<int>{0});
  CHECK(dag.neighbors.size() == 1);
  CHECK(dag.neighbors[0].empty());
}

TEST_CASE("build_dag: three collinear points, m = 1, first-axis ordering") {
  Eigen::MatrixXd S(3, 2);
  S << 0, 0, 1, 0, 2, 0;
  const NeighborDag dag = build_dag(S, 1, Ordering::first_axis);
  CHECK(dag.order == std::vector<int>{0, 1, 2});
  CHECK(dag.neighbors[0].empty());
  CHECK(dag.neighbors[1] == std::vector<int>{0});
  CHECK(dag.neighbors[2] == std::vector<int>{1});
}

TEST_CASE("build_dag: matches the exhaustive-scan oracle, n = 200") {
  const Eigen::MatrixXd S = test_helpers::random_points(200, 10.0, 11);
  const NeighborDag dag = build_dag(S, 20, Ordering::coordinate_sum, nullptr, 2);
  for (int k = 0; k < dag.n(); ++k) {
    std::vector<int> earlier(dag.order.begin(), dag.order.begin() + k);
    const int self = dag.order[static_cast<std::size_t>(k)];
    auto expect = test_helpers::brute_force_knn(S, S(self, 0), S(self, 1), earlier, std::min(k, 20));
    std::sort(expect.begin(), expect.end());
    CHECK(dag.neighbors[static_cast<std::size_t>(k)] == expect);
    CHECK(static_cast<int>(expect.size()) == std::min(k, 20));
  }
}

TEST_CASE("build_dag: acyclic (all neighbors earlier in the order) and deterministic") {
  const Eigen::MatrixXd S = test_helpers::random_points(150, 5.0, 5);
  const NeighborDag a = build_dag(S, 10);
  const NeighborDag b = build_dag(S, 10, Ordering::coordinate_sum, nullptr, 2);
  CHECK(a.order == b.order);
  CHECK(a.neighbors == b.neighbors);
  for (int k = 0; k < a.n(); ++k) {
    for (int j : a.neighbors[static_cast<std::size_t>(k)]) {
      CHECK(a.position[static_cast<std::size_t>(j)] < k);
    }
  }
}

TEST_CASE("build_dag: distance ties break toward the smaller index") {
  // unit grid: many equidistant candidates
  Eigen::MatrixXd S(9, 2);
  int at = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) S.row(at++) << i, j;
  const NeighborDag dag = build_dag(S, 3, Ordering::first_axis);
  for (int k = 0; k < dag.n(); ++k) {
    std::vector<int> earlier(dag.order.begin(), dag.order.begin() + k);
    const int self = dag.order[static_cast<std::size_t>(k)];
    auto expect = test_helpers::brute_force_knn(S, S(self, 0), S(self, 1), earlier, std::min(k, 3));
    std::sort(expect.begin(), expect.end());
    CHECK(dag.neighbors[static_cast<std::size_t>(k)] == expect);
  }
}

TEST_CASE("build_dag: user-supplied ordering and errors") {
  Eigen::MatrixXd S(4, 2);
  S << 0, 0, 1, 0, 0, 1, 1, 1;
  const std::vector<int> perm{3, 2, 1, 0};
  const NeighborDag dag = build_dag(S, 2, Ordering::given, &perm);
  CHECK(dag.order == perm);

  CHECK_THROWS_AS(build_dag(S, -1), std::invalid_argument);
  const std::vector<int> bad{0, 0, 1, 2};
  CHECK_THROWS_AS(build_dag(S, 2, Ordering::given, &bad), std::invalid_argument);

  Eigen::MatrixXd dup(3, 2);
  dup << 0, 0, 1, 1, 0, 0;
  CHECK_THROWS_WITH_AS(build_dag(dup, 2), doctest::Contains("degenerate design"), std::invalid_argument);
}

TEST_CASE("find_prediction_neighbors: trivial cases") {
  Eigen::MatrixXd train(1, 2);
  train << 0.5, 0.5;
  Eigen::MatrixXd query(2, 2);
  query << 0, 0, 3, 3;
  const PredictionNeighbors nb = find_prediction_neighbors(train, query, 20);
  CHECK(nb.neighbors[0] == std::vector<int>{0});
  CHECK(nb.neighbors[1] == std::vector<int>{0});

  Eigen::MatrixXd none(0, 2);
  CHECK_THROWS_AS(find_prediction_neighbors(none, query, 5), std::invalid_argument);
}

TEST_CASE("find_prediction_neighbors: a coincident query lists that index first") {
  const Eigen::MatrixXd train = test_helpers::random_points(60, 4.0, 7);
  Eigen::MatrixXd query(1, 2);
  query << train(17, 0), train(17, 1);
  const PredictionNeighbors nb = find_prediction_neighbors(train, query, 5);
  REQUIRE(nb.neighbors[0].size() == 5);
  CHECK(nb.neighbors[0][0] == 17);
}

TEST_CASE("find_prediction_neighbors: matches the exhaustive-scan oracle, 500 train / 50 query") {
  const Eigen::MatrixXd train = test_helpers::random_points(500, 10.0, 21);
  const Eigen::MatrixXd query = test_helpers::random_points(50, 10.0, 22);
  const PredictionNeighbors nb = find_prediction_neighbors(train, query, 20, 2);
  std::vector<int> all(500);
  std::iota(all.begin(), all.end(), 0);
  for (int q = 0; q < 50; ++q) {
    const auto expect = test_helpers::brute_force_knn(train, query(q, 0), query(q, 1), all, 20);
    CHECK(nb.neighbors[static_cast<std::size_t>(q)] == expect);
    // distances nondecreasing within the list
    double prev = -1.0;
    for (int idx : nb.neighbors[static_cast<std::size_t>(q)]) {
      const double dist = (train.row(idx) - query.row(q)).norm();
      CHECK(dist >= prev);
      prev = dist;
    }
  }
}

TEST_CASE("min_pairwise_distance") {
  Eigen::MatrixXd two(2, 2);
  two << 0, 0, 3, 4;
  CHECK(min_pairwise_distance(two) == doctest::Approx(5.0).epsilon(1e-15));

  Eigen::MatrixXd grid(9, 2);
  int at = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) grid.row(at++) << i, j;
  CHECK(min_pairwise_distance(grid) == doctest::Approx(1.0).epsilon(1e-15));

  const Eigen::MatrixXd S = test_helpers::random_points(100, 8.0, 33);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i)
    for (int j = i + 1; j < 100; ++j) best = std::min(best, (S.row(i) - S.row(j)).norm());
  CHECK(min_pairwise_distance(S) == doctest::Approx(best).epsilon(1e-14));

  Eigen::MatrixXd one(1, 2);
  one << 0, 0;
  CHECK_THROWS_AS(min_pairwise_distance(one), std::invalid_argument);
}
