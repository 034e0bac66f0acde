#include "seamstitch/loop.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace seamstitch {

Eigen::VectorXd pool_descriptor(const Eigen::MatrixXd& patch_features) {
  if (patch_features.rows() < 1 || patch_features.cols() < 1)
    throw Error(ErrorCode::InvalidArgument, "pool_descriptor: no patches");
  const Eigen::VectorXd mean = patch_features.colwise().mean().transpose();
  const double norm = mean.norm();
  if (!(norm >= 1e-12))
    throw Error(ErrorCode::Degenerate, "pool_descriptor: pooled descriptor is zero");
  return mean / norm;
}

namespace {

Eigen::MatrixXd normalized_rows(Eigen::MatrixXd v) {
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double n = v.row(i).norm();
    if (!(n >= 1e-12) || !std::isfinite(n))
      throw Error(ErrorCode::Degenerate, "descriptor " + std::to_string(i) + " is zero or non-finite");
    v.row(i) /= n;
  }
  return v;
}

}  // namespace

DescriptorIndex::DescriptorIndex(std::vector<DescriptorEntry> entries, Eigen::MatrixXd vectors)
    : entries_(std::move(entries)) {
  if (static_cast<Eigen::Index>(entries_.size()) != vectors.rows())
    throw Error(ErrorCode::InvalidArgument, "descriptor entry count differs from vector count");
  tree_ = KdTree(normalized_rows(std::move(vectors)));
}

DescriptorIndex DescriptorIndex::from_bundles(const std::vector<SegmentBundle>& bundles,
                                              const SegmentPlan& plan) {
  std::map<int, const SegmentBundle*> by_id;
  for (const SegmentBundle& b : bundles)
    if (!b.loop_pair) by_id[b.segment_id] = &b;

  std::vector<DescriptorEntry> entries;
  std::vector<const Eigen::VectorXd*> rows;
  for (int f = 1; f <= plan.n_frames; ++f) {
    const int owner = owner_segment(plan, f);
    const auto it = by_id.find(owner);
    if (it == by_id.end()) continue;
    const int local = it->second->local_index(f);
    if (local < 0) continue;
    entries.push_back({f, owner});
    rows.push_back(&it->second->frames[local].descriptor);
  }
  const Eigen::Index dim = rows.empty() ? 0 : rows.front()->size();
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->size() != dim)
      throw Error(ErrorCode::InvalidArgument, "descriptors have inconsistent dimensions");
    v.row(static_cast<Eigen::Index>(i)) = rows[i]->transpose();
  }
  return DescriptorIndex(std::move(entries), std::move(v));
}

std::vector<LoopCandidate> find_candidates(const DescriptorIndex& index, double sigma_sim, int min_gap) {
  if (!(sigma_sim > 0 && sigma_sim < 1))
    throw Error(ErrorCode::InvalidArgument, "sigma_sim must lie in (0, 1)");
  // Slightly inflated so boundary pairs are decided by the exact cosine test.
  const double radius = std::sqrt(2.0 * (1.0 - sigma_sim)) * (1.0 + 1e-9) + 1e-12;
  const Eigen::MatrixXd& v = index.vectors();
  const auto& entries = index.entries();

  std::vector<LoopCandidate> out;
  for (Eigen::Index i = 0; i < index.size(); ++i) {
    for (Eigen::Index j : index.tree().radius_search(v.row(i).transpose(), radius)) {
      if (j <= i) continue;
      const DescriptorEntry& a = entries[i];
      const DescriptorEntry& b = entries[j];
      if (std::abs(a.segment_id - b.segment_id) <= min_gap) continue;
      const double sim = v.row(i).dot(v.row(j));
      if (sim < sigma_sim) continue;
      const bool ab = a.frame_id < b.frame_id;
      const DescriptorEntry& lo = ab ? a : b;
      const DescriptorEntry& hi = ab ? b : a;
      out.push_back({lo.frame_id, hi.frame_id, lo.segment_id, hi.segment_id, sim});
    }
  }
  std::sort(out.begin(), out.end(), [](const LoopCandidate& x, const LoopCandidate& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    if (x.frame_a != y.frame_a) return x.frame_a < y.frame_a;
    return x.frame_b < y.frame_b;
  });
  return out;
}

std::vector<Loop> detect_loops(const std::vector<LoopCandidate>& candidates, int k_min) {
  std::map<std::pair<int, int>, std::vector<LoopCandidate>> groups;
  for (const LoopCandidate& c : candidates) {
    const auto key = std::minmax(c.segment_a, c.segment_b);
    groups[{key.first, key.second}].push_back(c);
  }
  std::vector<Loop> loops;
  for (auto& [key, group] : groups) {
    if (static_cast<int>(group.size()) < std::max(1, k_min)) continue;
    std::sort(group.begin(), group.end(), [](const LoopCandidate& x, const LoopCandidate& y) {
      if (x.similarity != y.similarity) return x.similarity > y.similarity;
      if (x.frame_a != y.frame_a) return x.frame_a < y.frame_a;
      return x.frame_b < y.frame_b;
    });
    Loop loop{key.first, key.second, group, 0.0};
    // Sum in sorted order so the total is independent of input order.
    for (const LoopCandidate& c : loop.candidates) loop.total_similarity += c.similarity;
    loops.push_back(std::move(loop));
  }
  std::sort(loops.begin(), loops.end(), [](const Loop& x, const Loop& y) {
    if (x.total_similarity != y.total_similarity) return x.total_similarity > y.total_similarity;
    if (x.segment_i != y.segment_i) return x.segment_i < y.segment_i;
    return x.segment_j < y.segment_j;
  });
  return loops;
}

LoopRequest request_loop_segment(const Loop& loop, int window, const SegmentPlan& plan) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "loop window must be >= 1");
  if (loop.candidates.empty()) throw Error(ErrorCode::InvalidArgument, "loop has no candidates");

  LoopRequest req;
  req.segment_i = loop.segment_i;
  req.segment_j = loop.segment_j;
  req.frame_a = loop.candidates.front().frame_a;
  req.frame_b = loop.candidates.front().frame_b;

  auto collect = [&](int w) {
    std::set<int> frames;
    for (int center : {req.frame_a, req.frame_b})
      for (int f = std::max(1, center - w); f <= std::min(plan.n_frames, center + w); ++f) frames.insert(f);
    return std::vector<int>(frames.begin(), frames.end());
  };

  req.frame_ids = collect(window);
  if (static_cast<int>(req.frame_ids.size()) >= plan.n_frames) {
    const int capped = std::max(1, (plan.segment_length / 2 - 1) / 2);
    req.warning = "loop window " + std::to_string(window) + " covers the whole sequence; capped to " +
                  std::to_string(capped);
    req.frame_ids = collect(capped);
  }
  return req;
}

}  // namespace seamstitch
