#pragma once

#include <Eigen/Core>

#include <vector>

namespace seamstitch {

/// Static KD-tree over the rows of a dense matrix, answering fixed-radius
/// queries in Euclidean distance. Split dimension is the one of largest
/// spread; split value is the median.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(Eigen::MatrixXd points, int leaf_size = 8);

  /// Row indices with |row - q| <= radius, ascending.
  std::vector<Eigen::Index> radius_search(const Eigen::Ref<const Eigen::VectorXd>& q, double radius) const;

  Eigen::Index size() const { return points_.rows(); }
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  struct Node {
    int split_dim = -1;  // -1 for leaves
    double split_value = 0.0;
    int left = -1;
    int right = -1;
    Eigen::Index begin = 0;  // range into index_ for leaves
    Eigen::Index end = 0;
  };

  int build(Eigen::Index begin, Eigen::Index end);
  void search(int node, const Eigen::Ref<const Eigen::VectorXd>& q, double r2, double radius,
              std::vector<Eigen::Index>& out) const;

  Eigen::MatrixXd points_;
  std::vector<Eigen::Index> index_;
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

}  // namespace seamstitch
