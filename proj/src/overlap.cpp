#include "seamstitch/overlap.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

namespace seamstitch {

std::optional<Reweighted> reweight_confidence(double c_a, double c_b, double d_a, double d_b) {
  if (!(c_a >= 0.0) || !(c_b >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "confidences must be non-negative");
  if (!(d_a > 0.0) || !(d_b > 0.0)) return std::nullopt;
  const double w = (c_a * c_b) / (1.0 + std::abs(d_a - d_b));
  return Reweighted{w, w * c_a, w * c_b};
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, int a, int b) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(a) * 1000003ULL +
                                                     static_cast<std::uint64_t>(b) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<Eigen::Index> stratified_subsample(const Eigen::VectorXd& weights, int max_points,
                                               std::uint64_t seed) {
  const Eigen::Index n = weights.size();
  std::vector<Eigen::Index> out;
  if (max_points <= 0) return out;
  if (n <= max_points) {
    out.resize(n);
    std::iota(out.begin(), out.end(), Eigen::Index{0});
    return out;
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return weights(i) < weights(j); });

  constexpr int kStrata = 10;
  std::array<Eigen::Index, kStrata + 1> bounds{};
  for (int s = 0; s <= kStrata; ++s) bounds[s] = n * s / kStrata;

  // Largest-remainder allocation of the quota across strata.
  std::array<Eigen::Index, kStrata> quota{};
  std::array<double, kStrata> remainder{};
  Eigen::Index assigned = 0;
  for (int s = 0; s < kStrata; ++s) {
    const double exact = static_cast<double>(max_points) * static_cast<double>(bounds[s + 1] - bounds[s]) /
                         static_cast<double>(n);
    quota[s] = static_cast<Eigen::Index>(std::floor(exact));
    remainder[s] = exact - static_cast<double>(quota[s]);
    assigned += quota[s];
  }
  std::array<int, kStrata> by_rem{};
  std::iota(by_rem.begin(), by_rem.end(), 0);
  std::stable_sort(by_rem.begin(), by_rem.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int k = 0; assigned < max_points; ++k, ++assigned) ++quota[by_rem[k % kStrata]];

  std::mt19937_64 rng(seed);
  out.reserve(max_points);
  for (int s = 0; s < kStrata; ++s) {
    std::vector<Eigen::Index> pool(order.begin() + bounds[s], order.begin() + bounds[s + 1]);
    const auto size = static_cast<std::uint64_t>(pool.size());
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(quota[s]); ++i) {
      const std::uint64_t j = i + rng() % (size - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

CorrespondenceSet extract_correspondences(const SegmentBundle& a, const SegmentBundle& b,
                                          const OverlapConfig& cfg) {
  const std::vector<int> shared = shared_frames(a, b);
  if (shared.empty())
    throw Error(ErrorCode::InvalidArgument, "segments " + std::to_string(a.segment_id) + " and " +
                                                std::to_string(b.segment_id) + " share no frames");
  if (a.width != b.width || a.height != b.height)
    throw Error(ErrorCode::InvalidArgument, "segments have different grid sizes");

  std::vector<Vector3d> xa, xb;
  std::vector<double> w;
  int skipped = 0;
  for (int fid : shared) {
    const FrameData& fa = a.frames[a.local_index(fid)];
    const FrameData& fb = b.frames[b.local_index(fid)];
    for (Eigen::Index p = 0; p < fa.points.size(); ++p) {
      if (!fa.points.valid[p] || !fb.points.valid[p]) continue;
      const double ca = fa.confidence.values(p), cb = fb.confidence.values(p);
      if (ca <= 0.0 || cb <= 0.0) continue;
      const auto rw = reweight_confidence(ca, cb, fa.depth.values(p), fb.depth.values(p));
      if (!rw) {
        ++skipped;
        continue;
      }
      if (rw->conf_a < cfg.tau_c || rw->conf_b < cfg.tau_c) continue;
      xa.push_back(fa.points.point(p));
      xb.push_back(fb.points.point(p));
      w.push_back(rw->weight);
    }
  }

  CorrespondenceSet out;
  out.segment_a = a.segment_id;
  out.segment_b = b.segment_id;
  out.kind = CorrespondenceKind::Pointmap;
  out.skipped_pixels = skipped;
  out.candidate_pixels = static_cast<int>(w.size());
  if (static_cast<int>(w.size()) < cfg.min_points)
    throw Error(ErrorCode::Degenerate, "degenerate overlap between segments " + std::to_string(a.segment_id) +
                                           " and " + std::to_string(b.segment_id) + ": only " +
                                           std::to_string(w.size()) + " correspondences survive");

  const Eigen::VectorXd all_w = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  const std::vector<Eigen::Index> keep =
      stratified_subsample(all_w, cfg.max_points, mix_seed(cfg.seed, a.segment_id, b.segment_id));
  const auto m = static_cast<Eigen::Index>(keep.size());
  out.points_a.resize(3, m);
  out.points_b.resize(3, m);
  out.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.points_a.col(i) = xa[keep[i]];
    out.points_b.col(i) = xb[keep[i]];
    out.weights(i) = w[keep[i]];
  }
  return out;
}

CorrespondenceSet extract_pose_correspondences(const SegmentBundle& a, const SegmentBundle& b) {
  const std::vector<int> shared = shared_frames(a, b);
  if (shared.size() < 3)
    throw Error(ErrorCode::Degenerate, "segments " + std::to_string(a.segment_id) + " and " +
                                           std::to_string(b.segment_id) +
                                           " share fewer than 3 frames; pose alignment is under-determined");
  CorrespondenceSet out;
  out.segment_a = a.segment_id;
  out.segment_b = b.segment_id;
  out.kind = CorrespondenceKind::Pose;
  const auto n = static_cast<Eigen::Index>(shared.size());
  out.points_a.resize(3, n);
  out.points_b.resize(3, n);
  out.weights = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Posed& pa = a.frames[a.local_index(shared[i])].pose;
    const Posed& pb = b.frames[b.local_index(shared[i])].pose;
    out.points_a.col(i) = pa.center();
    out.points_b.col(i) = pb.center();
    out.rotations_a.push_back(pa.rotation);
    out.rotations_b.push_back(pb.rotation);
  }
  out.candidate_pixels = static_cast<int>(n);
  return out;
}

}  // namespace seamstitch
