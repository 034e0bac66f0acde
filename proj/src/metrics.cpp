#include "seamstitch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "seamstitch/align.hpp"

namespace seamstitch {

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double max_dt) {
  if (est.size() == 0 || gt.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty trajectory");
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  // Both timestamp lists are sorted; a sliding window keeps this linear-ish.
  std::size_t lo = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est.timestamps[i];
    while (lo < gt.size() && gt.timestamps[lo] < t - max_dt) ++lo;
    for (std::size_t j = lo; j < gt.size() && gt.timestamps[j] <= t + max_dt; ++j)
      cand.emplace_back(std::abs(gt.timestamps[j] - t), i, j);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<char> used_e(est.size(), 0), used_g(gt.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [dt, i, j] : cand) {
    if (used_e[i] || used_g[j]) continue;
    used_e[i] = used_g[j] = 1;
    out.emplace_back(i, j);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no timestamps associate within max_dt");
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct Paired {
  Eigen::Matrix3Xd est;
  Eigen::Matrix3Xd gt;
  std::vector<Matrix3d> est_rot;
  std::vector<Matrix3d> gt_rot;
};

Paired pair_up(const Trajectory& est, const Trajectory& gt, double max_dt) {
  const auto pairs = associate(est, gt, max_dt);
  Paired p;
  p.est.resize(3, static_cast<Eigen::Index>(pairs.size()));
  p.gt.resize(3, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    p.est.col(static_cast<Eigen::Index>(k)) = est.poses[pairs[k].first].translation;
    p.gt.col(static_cast<Eigen::Index>(k)) = gt.poses[pairs[k].second].translation;
    p.est_rot.push_back(est.poses[pairs[k].first].rotation);
    p.gt_rot.push_back(gt.poses[pairs[k].second].rotation);
  }
  return p;
}

TrajectoryAlignment align_pairs(const Paired& p, bool with_scale) {
  if (p.est.cols() < 3) throw Error(ErrorCode::InvalidArgument, "trajectory alignment needs >= 3 pairs");
  const SimilarityFit fit = umeyama_fit(p.gt, p.est, Eigen::VectorXd::Ones(p.est.cols()), with_scale);
  return {fit.transform, fit.singular_ratio < 1e-9};
}

Transformd alignment_for(const Paired& p, AlignMode mode) {
  if (mode == AlignMode::None) return Transformd::identity(Group::Sim3);
  return align_pairs(p, mode == AlignMode::Similarity).transform;
}

}  // namespace

TrajectoryAlignment umeyama_traj(const Trajectory& est, const Trajectory& gt, bool with_scale, double max_dt) {
  return align_pairs(pair_up(est, gt, max_dt), with_scale);
}

double ape_rmse(const Trajectory& est, const Trajectory& gt, AlignMode mode, double max_dt) {
  const Paired p = pair_up(est, gt, max_dt);
  const Transformd T = alignment_for(p, mode);
  double sum = 0;
  for (Eigen::Index i = 0; i < p.est.cols(); ++i)
    sum += (apply(T, Vector3d(p.est.col(i))) - p.gt.col(i)).squaredNorm();
  return std::sqrt(sum / static_cast<double>(p.est.cols()));
}

double aae(const Trajectory& est, const Trajectory& gt, AlignMode mode, double max_dt) {
  const Paired p = pair_up(est, gt, max_dt);
  const Transformd T = alignment_for(p, mode);
  double sum = 0;
  for (std::size_t i = 0; i < p.est_rot.size(); ++i)
    sum += rotation_angle<double>(T.rotation() * p.est_rot[i] * p.gt_rot[i].transpose());
  return sum / static_cast<double>(p.est_rot.size()) * 180.0 / M_PI;
}

double scale_error(const Trajectory& est, const Trajectory& gt, double max_dt) {
  const Paired p = pair_up(est, gt, max_dt);
  return std::abs(align_pairs(p, true).transform.scale() - 1.0) * 100.0;
}

}  // namespace seamstitch
