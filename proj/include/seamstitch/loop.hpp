#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seamstitch/kdtree.hpp"
#include "seamstitch/segmenter.hpp"

namespace seamstitch {

/// Mean over patch rows, then L2 normalization.
Eigen::VectorXd pool_descriptor(const Eigen::MatrixXd& patch_features);

struct DescriptorEntry {
  int frame_id = 0;
  int segment_id = 0;
};

/// Immutable set of unit-norm frame descriptors with a KD-tree over them.
class DescriptorIndex {
 public:
  /// `vectors` holds one descriptor per row; rows are L2-normalized here.
  DescriptorIndex(std::vector<DescriptorEntry> entries, Eigen::MatrixXd vectors);

  /// One entry per frame, tagged with its owning segment and taken from that
  /// segment's bundle. Loop bundles are ignored.
  static DescriptorIndex from_bundles(const std::vector<SegmentBundle>& bundles, const SegmentPlan& plan);

  const std::vector<DescriptorEntry>& entries() const { return entries_; }
  const Eigen::MatrixXd& vectors() const { return tree_.points(); }
  const KdTree& tree() const { return tree_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(entries_.size()); }

 private:
  std::vector<DescriptorEntry> entries_;
  KdTree tree_;
};

struct LoopCandidate {
  int frame_a = 0;  // frame_a < frame_b
  int frame_b = 0;
  int segment_a = 0;
  int segment_b = 0;
  double similarity = 0.0;
};

struct Loop {
  int segment_i = 0;  // segment_i < segment_j
  int segment_j = 0;
  std::vector<LoopCandidate> candidates;  // strongest first
  double total_similarity = 0.0;
};

/// All frame pairs with cosine >= sigma_sim whose segments differ by more
/// than min_gap, strongest first. Uses the fixed-radius equivalence
/// |u - v| <= sqrt(2 (1 - sigma)) on unit vectors.
std::vector<LoopCandidate> find_candidates(const DescriptorIndex& index, double sigma_sim, int min_gap);

/// Segment pairs supported by at least k_min candidates, strongest total
/// similarity first.
std::vector<Loop> detect_loops(const std::vector<LoopCandidate>& candidates, int k_min);

struct LoopRequest {
  int segment_i = 0;
  int segment_j = 0;
  int frame_a = 0;
  int frame_b = 0;
  std::vector<int> frame_ids;  // ascending, deduplicated
  std::optional<std::string> warning;
};

/// Frames around the strongest candidate pair of a loop, to be reconstructed
/// as an extra loop segment.
LoopRequest request_loop_segment(const Loop& loop, int window, const SegmentPlan& plan);

}  // namespace seamstitch
