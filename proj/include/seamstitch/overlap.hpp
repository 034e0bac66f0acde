#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "seamstitch/segmenter.hpp"

namespace seamstitch {

/// Depth-consistency reweighting of two confidences observed for the same
/// pixel in two segments:
///   w = c_a * c_b / (1 + |d_a - d_b|),  c_a' = w * c_a,  c_b' = w * c_b.
struct Reweighted {
  double weight = 0.0;
  double conf_a = 0.0;
  double conf_b = 0.0;
};

/// Returns nullopt when either depth is non-positive (pixel is skipped).
std::optional<Reweighted> reweight_confidence(double c_a, double c_b, double d_a, double d_b);

enum class CorrespondenceKind { Pointmap, Pose };

/// Weighted point pairs; x_a lives in segment a's frame, x_b in segment b's.
/// Pose sets store camera centers as points plus the matching rotations.
struct CorrespondenceSet {
  Eigen::Matrix3Xd points_a;
  Eigen::Matrix3Xd points_b;
  Eigen::VectorXd weights;
  std::vector<Matrix3d> rotations_a;
  std::vector<Matrix3d> rotations_b;
  int segment_a = 0;
  int segment_b = 0;
  CorrespondenceKind kind = CorrespondenceKind::Pointmap;
  int skipped_pixels = 0;  // non-positive depth
  int candidate_pixels = 0;  // pairs surviving the confidence floor, before subsampling

  Eigen::Index size() const { return points_a.cols(); }
};

struct OverlapConfig {
  double tau_c = 1.5;    // floor on the updated confidence c'
  int max_points = 5000;
  int min_points = 16;
  std::uint64_t seed = 0;
};

/// Deterministic weight-stratified subsample: ranks by weight, splits the
/// ranking into deciles and draws from each decile proportionally. Returns
/// ascending indices; all indices when weights.size() <= max_points.
std::vector<Eigen::Index> stratified_subsample(const Eigen::VectorXd& weights, int max_points,
                                               std::uint64_t seed);

/// Pixel correspondences over the frames shared by a and b.
CorrespondenceSet extract_correspondences(const SegmentBundle& a, const SegmentBundle& b,
                                          const OverlapConfig& cfg);

/// Camera-center pairs (plus rotations) over shared frames, unit weights.
CorrespondenceSet extract_pose_correspondences(const SegmentBundle& a, const SegmentBundle& b);

}  // namespace seamstitch
