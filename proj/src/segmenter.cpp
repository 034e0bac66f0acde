#include "seamstitch/segmenter.hpp"

#include <algorithm>
#include <sstream>

namespace seamstitch {

SegmentPlan plan_segments(int n_frames, int segment_length, int overlap) {
  if (n_frames <= 0 || segment_length <= 0 || overlap <= 0)
    throw Error(ErrorCode::InvalidArgument, "frame count, segment length and overlap must be positive");
  if (overlap >= segment_length)
    throw Error(ErrorCode::InvalidArgument, "overlap must be smaller than segment length");
  if (segment_length > n_frames)
    throw Error(ErrorCode::InvalidArgument, "segment length exceeds frame count");

  SegmentPlan plan{n_frames, segment_length, overlap, {}};
  const int stride = segment_length - overlap;
  for (int start = 1; start + segment_length - 1 <= n_frames; start += stride)
    plan.ranges.push_back({start, start + segment_length - 1});
  if (plan.ranges.back().last < n_frames)
    plan.ranges.push_back({n_frames - segment_length + 1, n_frames});
  return plan;
}

int owner_segment(const SegmentPlan& plan, int frame) {
  for (int k = 0; k < plan.num_segments(); ++k) {
    const FrameRange& r = plan.ranges[k];
    if (!r.contains(frame)) continue;
    if (k > 0) {
      const int lead = std::max(0, plan.ranges[k - 1].last - r.first + 1);
      if (frame < r.first + lead / 2) continue;
    }
    return k + 1;
  }
  return 0;
}

int SegmentBundle::local_index(int frame_id) const {
  const auto it = std::find(frame_ids.begin(), frame_ids.end(), frame_id);
  return it == frame_ids.end() ? -1 : static_cast<int>(it - frame_ids.begin());
}

std::vector<int> shared_frames(const SegmentBundle& a, const SegmentBundle& b) {
  std::vector<int> fa = a.frame_ids, fb = b.frame_ids, out;
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  std::set_intersection(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(out));
  return out;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << "segment " << segment_id << ": " << issues.size() << " issue(s)";
  for (std::size_t i = 0; i < std::min<std::size_t>(issues.size(), 5); ++i)
    os << "\n  - " << issues[i].message;
  return os.str();
}

namespace {

constexpr std::size_t kMaxIssues = 64;

struct Reporter {
  ValidationReport& report;
  void add(ValidationIssue::Kind kind, int frame, int pixel, const std::string& msg) {
    if (report.issues.size() < kMaxIssues) report.issues.push_back({kind, frame, pixel, msg});
  }
};

std::string frame_str(int fid) { return "frame " + std::to_string(fid); }

}  // namespace

ValidationReport validate_bundle(const SegmentBundle& b, const SegmentPlan& plan) {
  ValidationReport report{b.segment_id, {}};
  Reporter rep{report};
  using K = ValidationIssue::Kind;

  if (!b.loop_pair) {
    if (b.segment_id < 1 || b.segment_id > plan.num_segments()) {
      rep.add(K::FrameMismatch, 0, -1,
              "segment id " + std::to_string(b.segment_id) + " is not in the plan");
    } else {
      const FrameRange& r = plan.range(b.segment_id);
      if (static_cast<int>(b.frame_ids.size()) != r.length()) {
        rep.add(K::LengthMismatch, 0, -1,
                "expected " + std::to_string(r.length()) + " frames [" + std::to_string(r.first) +
                    ".." + std::to_string(r.last) + "], got " + std::to_string(b.frame_ids.size()));
      } else {
        for (std::size_t i = 0; i < b.frame_ids.size(); ++i)
          if (b.frame_ids[i] != r.first + static_cast<int>(i)) {
            rep.add(K::FrameMismatch, b.frame_ids[i], -1,
                    "frame id " + std::to_string(b.frame_ids[i]) + " at position " +
                        std::to_string(i) + " does not match planned range");
            break;
          }
      }
    }
  } else {
    for (int fid : b.frame_ids)
      if (fid < 1 || fid > plan.n_frames)
        rep.add(K::FrameMismatch, fid, -1, frame_str(fid) + " outside the sequence");
  }

  if (b.frames.size() != b.frame_ids.size()) {
    rep.add(K::LengthMismatch, 0, -1, "frame data count differs from frame id count");
    return report;
  }

  const Eigen::Index n = static_cast<Eigen::Index>(b.width) * b.height;
  const int dim = b.descriptor_dim();
  for (std::size_t i = 0; i < b.frames.size(); ++i) {
    const FrameData& f = b.frames[i];
    const int fid = b.frame_ids[i];
    const bool shapes_ok = f.points.width == b.width && f.points.height == b.height &&
                           f.points.points.rows() == n &&
                           static_cast<Eigen::Index>(f.points.valid.size()) == n &&
                           f.confidence.width == b.width && f.confidence.height == b.height &&
                           f.confidence.size() == n && f.depth.width == b.width &&
                           f.depth.height == b.height && f.depth.size() == n;
    if (!shapes_ok) {
      rep.add(K::ShapeMismatch, fid, -1, frame_str(fid) + " grid shape differs from bundle H x W");
      continue;
    }
    for (Eigen::Index p = 0; p < n; ++p) {
      const int px = static_cast<int>(p);
      if (!f.points.points.row(p).allFinite()) {
        rep.add(K::NonFinite, fid, px, frame_str(fid) + " pixel " + std::to_string(px) + ": non-finite point");
      }
      const double c = f.confidence.values(p);
      if (!std::isfinite(c) || c < 0) {
        rep.add(K::NonFinite, fid, px, frame_str(fid) + " pixel " + std::to_string(px) + ": invalid confidence");
      }
      const double d = f.depth.values(p);
      if (!std::isfinite(d)) {
        rep.add(K::NonFinite, fid, px, frame_str(fid) + " pixel " + std::to_string(px) + ": non-finite depth");
      } else if (f.points.valid[p] && d <= 0) {
        rep.add(K::NonFinite, fid, px, frame_str(fid) + " pixel " + std::to_string(px) + ": non-positive depth");
      }
    }
    if (!f.pose.is_valid(1e-5)) rep.add(K::InvalidPose, fid, -1, frame_str(fid) + ": invalid pose");
    if (f.descriptor.size() != dim || dim == 0 || !f.descriptor.allFinite())
      rep.add(K::Descriptor, fid, -1, frame_str(fid) + ": descriptor missing, non-finite or of inconsistent dimension");
    if (!f.rgb.empty() && static_cast<Eigen::Index>(f.rgb.size()) != 3 * n)
      rep.add(K::ShapeMismatch, fid, -1, frame_str(fid) + ": rgb size mismatch");
  }
  return report;
}

}  // namespace seamstitch
