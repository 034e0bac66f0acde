#pragma once

#include <limits>
#include <vector>

#include "seamstitch/core.hpp"
#include "seamstitch/overlap.hpp"

namespace seamstitch {

struct IrlsConfig {
  double huber_delta = 0.1;  // meters; +inf disables robustification
  int max_iters = 20;
  double rel_tol = 1e-8;     // on the chart norm of the per-iteration update
  Group group = Group::Sim3;
  double rank_tol = 1e-9;     // singular-value ratio for SIM3/AFFINE3 rank tests
  double sl4_rank_tol = 1e-6; // second-smallest / largest singular value of the DLT system
};

/// Closed-form weighted similarity fit minimizing sum w |x_a - (s R x_b + t)|^2.
struct SimilarityFit {
  Transformd transform;
  double singular_ratio = 0.0;  // sigma_2 / sigma_1 of the cross-covariance
};

/// Weighted Umeyama without degeneracy checks beyond zero weight / spread.
/// with_scale = false pins s = 1.
SimilarityFit umeyama_fit(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                          const Eigen::VectorXd& w, bool with_scale = true);

Transformd estimate_sim3_weighted(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                                  const Eigen::VectorXd& w, double rank_tol = 1e-9);

Transformd estimate_affine3_weighted(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                                     const Eigen::VectorXd& w, double rank_tol = 1e-9);

struct Sl4Fit {
  Transformd transform;
  /// sigma_last / sigma_second_last of the normalized DLT system; near zero
  /// for a well-determined homography.
  double condition_ratio = 0.0;
};

/// Normalized weighted DLT for a 3D homography x_a ~ H x_b.
Sl4Fit estimate_sl4_weighted(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                             const Eigen::VectorXd& w, double rank_tol = 1e-6);

/// Dispatch to the group's weighted estimator.
Transformd estimate_weighted(Group g, const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                             const Eigen::VectorXd& w, const IrlsConfig& cfg = {});

struct IrlsDiagnostics {
  int iterations = 0;
  bool converged = false;
  double rms = 0.0;             // weighted RMS residual of the returned estimate
  double inlier_fraction = 0.0; // residual <= huber_delta
  double condition_ratio = 0.0; // SL4 only
  std::vector<double> objective; // sum c_i * huber(r_i) after each fit
};

struct AlignResult {
  Transformd transform;
  IrlsDiagnostics diagnostics;
};

/// Huber loss: r^2/2 below delta, delta (r - delta/2) above.
double huber_loss(double r, double delta);

/// IRLS with a Huber kernel: fit, reweight each pair by min(1, delta / r),
/// refit, until the chart step drops below rel_tol.
AlignResult irls_align(const CorrespondenceSet& corrs, const IrlsConfig& cfg);

/// Alignment from camera poses. SIM3 takes its rotation from the chordal
/// mean of relative rotations and scale/translation from the centers;
/// AFFINE3 fits the centers only. SL4 is not supported.
AlignResult align_poses(const CorrespondenceSet& corrs, const IrlsConfig& cfg);

}  // namespace seamstitch
