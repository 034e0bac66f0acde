#include "seamstitch/align.hpp"

#include <cmath>
#include <functional>

namespace seamstitch {

namespace {

void check_inputs(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb, const Eigen::VectorXd& w,
                  Eigen::Index min_pairs, const char* who) {
  if (xa.cols() != xb.cols() || xa.cols() != w.size())
    throw Error(ErrorCode::InvalidArgument, std::string(who) + ": point and weight counts differ");
  if (xa.cols() < min_pairs)
    throw Error(ErrorCode::Degenerate, std::string(who) + ": needs at least " +
                                           std::to_string(min_pairs) + " pairs, got " +
                                           std::to_string(xa.cols()));
  if ((w.array() < 0).any() || !w.allFinite())
    throw Error(ErrorCode::InvalidArgument, std::string(who) + ": weights must be finite and non-negative");
  if (!(w.sum() > 0))
    throw Error(ErrorCode::Degenerate, std::string(who) + ": total weight is zero");
}

struct Moments {
  double total = 0;
  Vector3d mean_a = Vector3d::Zero();
  Vector3d mean_b = Vector3d::Zero();
  Matrix3d cross = Matrix3d::Zero();  // sum w (a - ma)(b - mb)^T / total
  Matrix3d scatter_b = Matrix3d::Zero();
};

Moments weighted_moments(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb, const Eigen::VectorXd& w) {
  Moments m;
  m.total = w.sum();
  m.mean_a = xa * w / m.total;
  m.mean_b = xb * w / m.total;
  const Eigen::Matrix3Xd ca = xa.colwise() - m.mean_a;
  const Eigen::Matrix3Xd cb = xb.colwise() - m.mean_b;
  m.cross = ca * w.asDiagonal() * cb.transpose() / m.total;
  m.scatter_b = cb * w.asDiagonal() * cb.transpose() / m.total;
  return m;
}

}  // namespace

SimilarityFit umeyama_fit(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb, const Eigen::VectorXd& w,
                          bool with_scale) {
  check_inputs(xa, xb, w, 1, "umeyama");
  const Moments m = weighted_moments(xa, xb, w);
  const double var_b = m.scatter_b.trace();
  if (with_scale && !(var_b > 1e-300))
    throw Error(ErrorCode::Degenerate, "umeyama: source points have zero spread");

  Eigen::JacobiSVD<Matrix3d> svd(m.cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d S = Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;
  const Matrix3d R = svd.matrixU() * S * svd.matrixV().transpose();
  const Vector3d sv = svd.singularValues();
  const double s = with_scale ? (sv.asDiagonal() * S).trace() / var_b : 1.0;
  if (!(s > 0))
    throw Error(ErrorCode::Degenerate, "umeyama: non-positive scale");
  SimilarityFit fit;
  fit.transform = Transformd::sim3(s, R, m.mean_a - s * R * m.mean_b);
  fit.singular_ratio = sv(0) > 0 ? sv(1) / sv(0) : 0.0;
  return fit;
}

Transformd estimate_sim3_weighted(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                                  const Eigen::VectorXd& w, double rank_tol) {
  check_inputs(xa, xb, w, 3, "sim3");
  const SimilarityFit fit = umeyama_fit(xa, xb, w, true);
  if (fit.singular_ratio < rank_tol)
    throw Error(ErrorCode::Degenerate, "sim3: collinear or degenerate configuration");
  return fit.transform;
}

Transformd estimate_affine3_weighted(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                                     const Eigen::VectorXd& w, double rank_tol) {
  check_inputs(xa, xb, w, 4, "affine3");
  const Moments m = weighted_moments(xa, xb, w);
  const Eigen::SelfAdjointEigenSolver<Matrix3d> eig(m.scatter_b);
  const Vector3d ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0) || ev(0) < rank_tol * ev(2))
    throw Error(ErrorCode::Degenerate, "affine3: weighted scatter is rank deficient (coplanar support)");
  const Matrix3d A = m.scatter_b.ldlt().solve(m.cross.transpose()).transpose();
  return Transformd::affine3(A, m.mean_a - A * m.mean_b);
}

namespace {

// Isotropic normalization: weighted centroid to origin, mean distance sqrt(3).
Matrix4d normalizer(const Eigen::Matrix3Xd& x, const Eigen::VectorXd& w) {
  const double total = w.sum();
  const Vector3d c = x * w / total;
  double mean_dist = 0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) mean_dist += w(i) * (x.col(i) - c).norm();
  mean_dist /= total;
  if (!(mean_dist > 0))
    throw Error(ErrorCode::Degenerate, "sl4: points have zero spread");
  const double k = std::sqrt(3.0) / mean_dist;
  Matrix4d T = Matrix4d::Identity();
  T.topLeftCorner<3, 3>() *= k;
  T.topRightCorner<3, 1>() = -k * c;
  return T;
}

}  // namespace

Sl4Fit estimate_sl4_weighted(const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                             const Eigen::VectorXd& w, double rank_tol) {
  check_inputs(xa, xb, w, 5, "sl4");
  const Matrix4d Ta = normalizer(xa, w);
  const Matrix4d Tb = normalizer(xb, w);
  const Eigen::Index n = xa.cols();

  // Three proportionality constraints per pair: (H X)_j - u_j (H X)_3 = 0.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3 * n, 16);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sw = std::sqrt(w(i));
    const Eigen::Vector4d X = Tb * xb.col(i).homogeneous();
    const Eigen::Vector4d U = Ta * xa.col(i).homogeneous();
    for (int j = 0; j < 3; ++j) {
      A.block<1, 4>(3 * i + j, 4 * j) = sw * X.transpose();
      A.block<1, 4>(3 * i + j, 12) = -sw * U(j) * X.transpose();
    }
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::Matrix<double, 16, 16> R =
      qr.matrixQR().topRows(std::min<Eigen::Index>(16, A.rows())).template triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::Matrix<double, 16, 16>> svd(R, Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (!(sv(0) > 0) || sv(14) < rank_tol * sv(0))
    throw Error(ErrorCode::Degenerate,
                "sl4: DLT system has a multi-dimensional null space (planar or degenerate support)");

  const Eigen::Matrix<double, 16, 1> h = svd.matrixV().col(15);
  Matrix4d Hn;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) Hn(r, c) = h(4 * r + c);
  Matrix4d H = Ta.inverse() * Hn * Tb;

  const Vector3d cb = xb * w / w.sum();
  if ((H * cb.homogeneous())(3) < 0) H = -H;
  if (!(H.determinant() > 0))
    throw Error(ErrorCode::Degenerate, "sl4: estimated homography reverses orientation");
  return {Transformd::sl4(H), sv(15) / sv(14)};
}

Transformd estimate_weighted(Group g, const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                             const Eigen::VectorXd& w, const IrlsConfig& cfg) {
  switch (g) {
    case Group::Sim3: return estimate_sim3_weighted(xa, xb, w, cfg.rank_tol);
    case Group::Affine3: return estimate_affine3_weighted(xa, xb, w, cfg.rank_tol);
    case Group::SL4: return estimate_sl4_weighted(xa, xb, w, cfg.sl4_rank_tol).transform;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown group");
}

double huber_loss(double r, double delta) {
  r = std::abs(r);
  if (std::isinf(delta) || r <= delta) return 0.5 * r * r;
  return delta * (r - 0.5 * delta);
}

namespace {

Eigen::VectorXd residual_norms(const Transformd& T, const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb) {
  Eigen::VectorXd r(xa.cols());
  for (Eigen::Index i = 0; i < xa.cols(); ++i) {
    try {
      r(i) = (xa.col(i) - apply(T, Vector3d(xb.col(i)))).norm();
    } catch (const Error&) {
      r(i) = std::numeric_limits<double>::infinity();
    }
  }
  return r;
}

double step_norm(const Transformd& prev, const Transformd& next) {
  try {
    return log_params(compose(inverse(prev), next)).norm();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

using Fitter = std::function<Transformd(const Eigen::VectorXd&)>;

// Shared IRLS loop; `base` are the per-pair confidence weights.
AlignResult run_irls(const Fitter& fit, const Eigen::Matrix3Xd& xa, const Eigen::Matrix3Xd& xb,
                     const Eigen::VectorXd& base, const IrlsConfig& cfg) {
  if (!(cfg.huber_delta > 0) || cfg.max_iters < 1 || !(cfg.rel_tol > 0))
    throw Error(ErrorCode::InvalidArgument, "invalid IRLS configuration");
  const double delta = cfg.huber_delta;
  auto objective = [&](const Eigen::VectorXd& r) {
    double J = 0;
    for (Eigen::Index i = 0; i < r.size(); ++i) J += base(i) * huber_loss(r(i), delta);
    return J;
  };

  AlignResult out;
  Transformd T = fit(base);
  Eigen::VectorXd r = residual_norms(T, xa, xb);
  out.diagnostics.objective.push_back(objective(r));
  out.diagnostics.iterations = 1;
  Transformd best = T;
  double best_J = out.diagnostics.objective.back();
  Eigen::VectorXd best_r = r;

  while (out.diagnostics.iterations < cfg.max_iters) {
    Eigen::VectorXd w = base;
    if (!std::isinf(delta))
      for (Eigen::Index i = 0; i < r.size(); ++i)
        if (r(i) > delta) w(i) *= std::isinf(r(i)) ? 0.0 : delta / r(i);
    const Transformd next = fit(w);
    ++out.diagnostics.iterations;
    const double step = step_norm(T, next);
    T = next;
    r = residual_norms(T, xa, xb);
    const double J = objective(r);
    out.diagnostics.objective.push_back(J);
    if (J < best_J) {
      best = T;
      best_J = J;
      best_r = r;
    }
    if (step < cfg.rel_tol) {
      out.diagnostics.converged = true;
      break;
    }
  }

  out.transform = best;
  double wsum = 0, wr2 = 0;
  Eigen::Index inliers = 0;
  for (Eigen::Index i = 0; i < best_r.size(); ++i) {
    if (std::isfinite(best_r(i))) {
      wsum += base(i);
      wr2 += base(i) * best_r(i) * best_r(i);
    }
    if (best_r(i) <= delta) ++inliers;
  }
  out.diagnostics.rms = wsum > 0 ? std::sqrt(wr2 / wsum) : 0.0;
  out.diagnostics.inlier_fraction =
      best_r.size() > 0 ? static_cast<double>(inliers) / static_cast<double>(best_r.size()) : 0.0;
  return out;
}

}  // namespace

AlignResult irls_align(const CorrespondenceSet& corrs, const IrlsConfig& cfg) {
  const Eigen::Matrix3Xd& xa = corrs.points_a;
  const Eigen::Matrix3Xd& xb = corrs.points_b;
  double cond = 0.0;
  const Fitter fit = [&](const Eigen::VectorXd& w) -> Transformd {
    if (cfg.group == Group::SL4) {
      const Sl4Fit f = estimate_sl4_weighted(xa, xb, w, cfg.sl4_rank_tol);
      cond = f.condition_ratio;
      return f.transform;
    }
    return estimate_weighted(cfg.group, xa, xb, w, cfg);
  };
  AlignResult res = run_irls(fit, xa, xb, corrs.weights, cfg);
  res.diagnostics.condition_ratio = cond;
  return res;
}

AlignResult align_poses(const CorrespondenceSet& corrs, const IrlsConfig& cfg) {
  if (corrs.size() < 3)
    throw Error(ErrorCode::Degenerate, "pose alignment needs at least 3 pose pairs");
  const Eigen::Matrix3Xd& ca = corrs.points_a;
  const Eigen::Matrix3Xd& cb = corrs.points_b;

  switch (cfg.group) {
    case Group::Sim3: {
      if (corrs.rotations_a.size() != static_cast<std::size_t>(corrs.size()) ||
          corrs.rotations_b.size() != static_cast<std::size_t>(corrs.size()))
        throw Error(ErrorCode::InvalidArgument, "pose correspondences lack rotations");
      const Fitter fit = [&](const Eigen::VectorXd& w) -> Transformd {
        if (!(w.sum() > 0)) throw Error(ErrorCode::Degenerate, "pose alignment: total weight is zero");
        Matrix3d M = Matrix3d::Zero();
        for (Eigen::Index i = 0; i < corrs.size(); ++i)
          M += w(i) * corrs.rotations_a[i] * corrs.rotations_b[i].transpose();
        const Matrix3d R = project_to_so3(M);
        const Vector3d ma = ca * w / w.sum();
        const Vector3d mb = cb * w / w.sum();
        double num = 0, den = 0;
        for (Eigen::Index i = 0; i < corrs.size(); ++i) {
          const Vector3d db = cb.col(i) - mb;
          num += w(i) * (ca.col(i) - ma).dot(R * db);
          den += w(i) * db.squaredNorm();
        }
        if (!(den > 1e-300) || !(num > 0))
          throw Error(ErrorCode::Degenerate, "pose alignment: camera centers have zero spread");
        const double s = num / den;
        return Transformd::sim3(s, R, ma - s * R * mb);
      };
      return run_irls(fit, ca, cb, corrs.weights, cfg);
    }
    case Group::Affine3: {
      const Fitter fit = [&](const Eigen::VectorXd& w) {
        return estimate_affine3_weighted(ca, cb, w, cfg.rank_tol);
      };
      return run_irls(fit, ca, cb, corrs.weights, cfg);
    }
    case Group::SL4:
      throw Error(ErrorCode::InvalidArgument, "pose-based alignment is not available for SL4");
  }
  throw Error(ErrorCode::InvalidArgument, "unknown group");
}

}  // namespace seamstitch
