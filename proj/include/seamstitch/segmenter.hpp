#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "seamstitch/core.hpp"

namespace seamstitch {

/// Inclusive 1-based frame range.
struct FrameRange {
  int first = 1;
  int last = 1;

  int length() const { return last - first + 1; }
  bool contains(int frame) const { return frame >= first && frame <= last; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct SegmentPlan {
  int n_frames = 0;
  int segment_length = 0;
  int overlap = 0;
  std::vector<FrameRange> ranges;

  int num_segments() const { return static_cast<int>(ranges.size()); }
  /// Range of 1-based segment id.
  const FrameRange& range(int segment_id) const { return ranges.at(segment_id - 1); }
};

/// Partition [1, n_frames] into windows of length l sharing p frames. The
/// final window is anchored to the sequence end (full length, larger overlap).
SegmentPlan plan_segments(int n_frames, int segment_length, int overlap);

/// Segment that owns `frame` in the stitched output: the earliest segment
/// containing it outside that segment's leading-overlap half. Returns 0 when
/// no segment qualifies.
int owner_segment(const SegmentPlan& plan, int frame);

struct FrameData {
  Pointmap points;
  ScalarMap confidence;
  ScalarMap depth;
  Posed pose;  // camera-to-segment
  Eigen::VectorXd descriptor;
  std::vector<std::uint8_t> rgb;  // optional, H*W*3
  double timestamp = 0.0;
};

/// One segment's reconstruction. Loop segments carry the pair of segments
/// they bridge in `loop_pair`.
struct SegmentBundle {
  int segment_id = 0;
  int width = 0;
  int height = 0;
  std::vector<int> frame_ids;
  std::vector<FrameData> frames;
  std::optional<std::pair<int, int>> loop_pair;

  int descriptor_dim() const {
    return frames.empty() ? 0 : static_cast<int>(frames.front().descriptor.size());
  }
  /// Index into `frames` of a global frame id, or -1.
  int local_index(int frame_id) const;
};

/// Frame ids present in both bundles, ascending.
std::vector<int> shared_frames(const SegmentBundle& a, const SegmentBundle& b);

struct ValidationIssue {
  enum class Kind { FrameMismatch, LengthMismatch, ShapeMismatch, NonFinite, InvalidPose, Descriptor };
  Kind kind;
  int frame_id = 0;  // 0 when not frame-specific
  int pixel = -1;    // row-major pixel index or -1
  std::string message;
};

struct ValidationReport {
  int segment_id = 0;
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

/// Checks a bundle against the plan; loop bundles (loop_pair set) are checked
/// for consistency only, not against a planned range.
ValidationReport validate_bundle(const SegmentBundle& bundle, const SegmentPlan& plan);

}  // namespace seamstitch
