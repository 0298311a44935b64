#include "nngls/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace nngls {

namespace {

struct Candidate {
  double dist2;
  int index;
  bool operator<(const Candidate& o) const {
    // max-heap: the worst candidate (largest distance, then largest index) on top
    if (dist2 != o.dist2) return dist2 < o.dist2;
    return index < o.index;
  }
};

}  // namespace

KdTree2d::KdTree2d(const Eigen::MatrixXd& points, std::vector<int> rank) : pts_(points), rank_(std::move(rank)) {
  const auto n = static_cast<int>(points.rows());
  if (points.cols() != 2) throw std::invalid_argument("KdTree2d expects n x 2 coordinates");
  if (!rank_.empty() && static_cast<int>(rank_.size()) != n) {
    throw std::invalid_argument("rank size must match point count");
  }
  if (rank_.empty()) rank_.assign(static_cast<std::size_t>(n), 0);
  nodes_.reserve(static_cast<std::size_t>(n));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  root_ = build(idx, 0, n, 0);
}

int KdTree2d::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 2;
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
    if (pts_(a, axis) != pts_(b, axis)) return pts_(a, axis) < pts_(b, axis);
    return a < b;
  });
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{idx[mid], -1, -1, axis, rank_[static_cast<std::size_t>(idx[mid])]});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  int mr = nodes_[self].min_rank;
  if (left >= 0) mr = std::min(mr, nodes_[left].min_rank);
  if (right >= 0) mr = std::min(mr, nodes_[right].min_rank);
  nodes_[self].min_rank = mr;
  return self;
}

std::vector<int> KdTree2d::knn(double x, double y, int k, int max_rank) const {
  std::vector<int> result;
  if (k <= 0 || root_ < 0) return result;

  std::priority_queue<Candidate> best;
  const double q[2] = {x, y};

  // explicit stack: (node, signed axis distance from query to the splitting plane)
  std::vector<int> stack;
  stack.reserve(64);

  auto consider = [&](int point) {
    if (max_rank >= 0 && rank_[static_cast<std::size_t>(point)] >= max_rank) return;
    const double dx = pts_(point, 0) - x;
    const double dy = pts_(point, 1) - y;
    const Candidate c{dx * dx + dy * dy, point};
    if (static_cast<int>(best.size()) < k) {
      best.push(c);
    } else if (c < best.top()) {
      best.pop();
      best.push(c);
    }
  };

  // recursive search via lambda to keep exact near/far ordering
  auto search = [&](auto&& self, int node) -> void {
    if (node < 0) return;
    const Node& nd = nodes_[node];
    if (max_rank >= 0 && nd.min_rank >= max_rank) return;
    consider(nd.point);
    const double delta = q[nd.axis] - pts_(nd.point, nd.axis);
    const int near = delta < 0 ? nd.left : nd.right;
    const int far = delta < 0 ? nd.right : nd.left;
    self(self, near);
    // far side can only hold a better candidate if the heap is not yet full
    // or the plane distance does not strictly exceed the current worst
    if (static_cast<int>(best.size()) < k || delta * delta <= best.top().dist2) {
      self(self, far);
    }
  };
  search(search, root_);

  result.resize(best.size());
  for (std::size_t i = result.size(); i-- > 0;) {
    result[i] = best.top().index;
    best.pop();
  }
  return result;
}

}  // namespace nngls
