#include "seamstitch/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace seamstitch {

KdTree::KdTree(Eigen::MatrixXd points, int leaf_size)
    : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  index_.resize(points_.rows());
  std::iota(index_.begin(), index_.end(), Eigen::Index{0});
  if (points_.rows() > 0) build(0, points_.rows());
}

int KdTree::build(Eigen::Index begin, Eigen::Index end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= leaf_size_) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  int best_dim = 0;
  double best_spread = -1;
  for (Eigen::Index d = 0; d < points_.cols(); ++d) {
    double lo = points_(index_[begin], d), hi = lo;
    for (Eigen::Index i = begin + 1; i < end; ++i) {
      lo = std::min(lo, points_(index_[i], d));
      hi = std::max(hi, points_(index_[i], d));
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<int>(d);
    }
  }
  if (best_spread <= 0) {  // all points identical
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  const Eigen::Index mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) { return points_(a, best_dim) < points_(b, best_dim); });
  const double split = points_(index_[mid], best_dim);
  nodes_[id].split_dim = best_dim;
  nodes_[id].split_value = split;
  // Left holds [begin, mid), right holds [mid, end); left values <= split <= right values.
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Eigen::Ref<const Eigen::VectorXd>& q, double r2, double radius,
                    std::vector<Eigen::Index>& out) const {
  const Node& n = nodes_[node];
  if (n.split_dim < 0) {
    for (Eigen::Index i = n.begin; i < n.end; ++i)
      if ((points_.row(index_[i]).transpose() - q).squaredNorm() <= r2) out.push_back(index_[i]);
    return;
  }
  const double diff = q(n.split_dim) - n.split_value;
  if (diff <= radius) search(n.left, q, r2, radius, out);
  if (diff >= -radius) search(n.right, q, r2, radius, out);
}

std::vector<Eigen::Index> KdTree::radius_search(const Eigen::Ref<const Eigen::VectorXd>& q,
                                                double radius) const {
  std::vector<Eigen::Index> out;
  if (nodes_.empty() || radius < 0) return out;
  search(0, q, radius * radius, radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace seamstitch
