#pragma once

#include <vector>

#include "seamstitch/core.hpp"

namespace seamstitch {

struct Trajectory {
  std::vector<double> timestamps;  // seconds, strictly increasing
  std::vector<Posed> poses;        // camera-to-world

  std::size_t size() const { return poses.size(); }
  void push_back(double t, const Posed& p) {
    timestamps.push_back(t);
    poses.push_back(p);
  }
};

/// Index pairs (est, gt) from greedy nearest-timestamp matching within
/// max_dt; each pose is used at most once. Sorted by est index.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double max_dt = 0.02);

enum class AlignMode { None, Rigid, Similarity };

struct TrajectoryAlignment {
  Transformd transform;  // maps est positions onto gt
  bool collinear = false;
};

/// Closed-form alignment of associated positions, gt ~ T est.
TrajectoryAlignment umeyama_traj(const Trajectory& est, const Trajectory& gt, bool with_scale,
                                 double max_dt = 0.02);

double ape_rmse(const Trajectory& est, const Trajectory& gt, AlignMode mode, double max_dt = 0.02);

/// Mean geodesic angle (degrees) of R_aligned_est * R_gt^T.
double aae(const Trajectory& est, const Trajectory& gt, AlignMode mode, double max_dt = 0.02);

/// |s - 1| * 100 for the similarity scale s mapping est onto gt.
double scale_error(const Trajectory& est, const Trajectory& gt, double max_dt = 0.02);

}  // namespace seamstitch
