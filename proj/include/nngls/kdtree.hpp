#pragma once

#include <Eigen/Dense>
#include <vector>

namespace nngls {

// Exact 2-d tree over planar points with an optional admissibility rank per
// point. knn() returns the k nearest points whose rank is strictly below
// max_rank (pass a negative max_rank to disable the filter). Backtracking is
// exact; distance ties break toward the smaller point index. The tree is
// immutable after construction and safe to share across threads.
class KdTree2d {
 public:
  explicit KdTree2d(const Eigen::MatrixXd& points, std::vector<int> rank = {});

  // Result sorted by (distance, index), at most k entries.
  std::vector<int> knn(double x, double y, int k, int max_rank = -1) const;

 private:
  struct Node {
    int point = -1;
    int left = -1;
    int right = -1;
    int axis = 0;
    int min_rank = 0;
  };

  int build(std::vector<int>& idx, int lo, int hi, int depth);

  const Eigen::MatrixXd& pts_;
  std::vector<int> rank_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace nngls
