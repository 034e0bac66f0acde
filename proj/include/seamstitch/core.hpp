#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seamstitch/error.hpp"

namespace seamstitch {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Vector3d = Vector3<double>;
using Matrix3d = Matrix3<double>;
using Matrix4d = Matrix4<double>;

/// Transform groups of increasing expressiveness.
enum class Group { Sim3, Affine3, SL4 };

/// Dimension of the local chart used for optimization.
constexpr int chart_dim(Group g) {
  switch (g) {
    case Group::Sim3: return 7;
    case Group::Affine3: return 12;
    case Group::SL4: return 15;
  }
  return 0;
}

constexpr std::string_view to_string(Group g) {
  switch (g) {
    case Group::Sim3: return "sim3";
    case Group::Affine3: return "affine3";
    case Group::SL4: return "sl4";
  }
  return "unknown";
}

inline Group parse_group(std::string_view name) {
  if (name == "sim3" || name == "SIM3") return Group::Sim3;
  if (name == "affine3" || name == "AFFINE3") return Group::Affine3;
  if (name == "sl4" || name == "SL4") return Group::SL4;
  throw Error(ErrorCode::InvalidArgument,
              "unknown transform group '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// SO(3) helpers

template <typename Scalar>
Matrix3<Scalar> skew(const Vector3<Scalar>& v) {
  Matrix3<Scalar> m;
  // clang-format off
  m << Scalar(0), -v.z(),     v.y(),
       v.z(),     Scalar(0), -v.x(),
      -v.y(),     v.x(),      Scalar(0);
  // clang-format on
  return m;
}

template <typename Scalar>
Matrix3<Scalar> so3_exp(const Vector3<Scalar>& omega) {
  const Scalar theta = omega.norm();
  if (theta < Scalar(1e-300)) return Matrix3<Scalar>::Identity();
  return Eigen::AngleAxis<Scalar>(theta, omega / theta).toRotationMatrix();
}

template <typename Scalar>
Vector3<Scalar> so3_log(const Matrix3<Scalar>& R) {
  const Eigen::AngleAxis<Scalar> aa{Eigen::Quaternion<Scalar>(R)};
  Scalar angle = aa.angle();
  Vector3<Scalar> axis = aa.axis();
  if (angle > Scalar(M_PI)) {
    angle = Scalar(2 * M_PI) - angle;
    axis = -axis;
  }
  return angle * axis;
}

/// Geodesic angle of a rotation matrix in radians, accurate near zero.
template <typename Scalar>
Scalar rotation_angle(const Matrix3<Scalar>& R) {
  const Vector3<Scalar> v(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const Scalar c = (R.trace() - Scalar(1)) / Scalar(2);
  return std::atan2(v.norm() / Scalar(2), c);
}

/// Nearest rotation in the Frobenius sense (det = +1).
template <typename Scalar>
Matrix3<Scalar> project_to_so3(const Matrix3<Scalar>& M) {
  Eigen::JacobiSVD<Matrix3<Scalar>> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3<Scalar> D = Matrix3<Scalar>::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

// ---------------------------------------------------------------------------
// Pose

/// Rigid camera-to-frame pose. The translation is the camera center.
template <typename Scalar>
struct Pose {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  Vector3<Scalar> center() const { return translation; }

  bool is_valid(Scalar tol = Scalar(1e-9)) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Matrix3<Scalar> e = rotation.transpose() * rotation - Matrix3<Scalar>::Identity();
    return e.cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - Scalar(1)) <= tol;
  }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }
};

using Posed = Pose<double>;

// ---------------------------------------------------------------------------
// Transform

/// An element of SIM(3), Affine(3) or SL(4), acting on 3D points through its
/// homogeneous 4x4 matrix. SIM(3) elements also keep their (s, R, t) factors.
template <typename Scalar>
class Transform {
 public:
  Transform() : Transform(identity(Group::Sim3)) {}

  static Transform identity(Group g) {
    Transform t(g);
    t.matrix_.setIdentity();
    t.scale_ = Scalar(1);
    t.rotation_.setIdentity();
    t.translation_.setZero();
    return t;
  }

  static Transform sim3(Scalar s, const Matrix3<Scalar>& R, const Vector3<Scalar>& t) {
    if (!(s > Scalar(0)) || !std::isfinite(s))
      throw Error(ErrorCode::InvalidArgument, "SIM3 scale must be positive and finite");
    Transform out(Group::Sim3);
    out.scale_ = s;
    out.rotation_ = R;
    out.translation_ = t;
    out.matrix_.setIdentity();
    out.matrix_.template topLeftCorner<3, 3>() = s * R;
    out.matrix_.template topRightCorner<3, 1>() = t;
    return out;
  }

  static Transform affine3(const Matrix3<Scalar>& A, const Vector3<Scalar>& t) {
    Transform out(Group::Affine3);
    out.matrix_.setIdentity();
    out.matrix_.template topLeftCorner<3, 3>() = A;
    out.matrix_.template topRightCorner<3, 1>() = t;
    return out;
  }

  /// Rescales H to unit determinant. Orientation-reversing matrices have no
  /// real rescaling into SL(4) and are rejected.
  static Transform sl4(const Matrix4<Scalar>& H) {
    const Scalar det = H.determinant();
    if (!(det > Scalar(0)) || !std::isfinite(det))
      throw Error(ErrorCode::Degenerate, "SL4 matrix must have positive determinant");
    Transform out(Group::SL4);
    out.matrix_ = H / std::pow(det, Scalar(0.25));
    return out;
  }

  /// Reinterprets a homogeneous matrix in group g. For SIM3 the linear block
  /// is factored into scale and nearest rotation.
  static Transform from_matrix(Group g, const Matrix4<Scalar>& m) {
    switch (g) {
      case Group::Sim3: {
        const Matrix3<Scalar> L = m.template topLeftCorner<3, 3>();
        const Scalar det = L.determinant();
        if (!(det > Scalar(0)))
          throw Error(ErrorCode::InvalidArgument, "SIM3 linear part must have positive determinant");
        const Scalar s = std::cbrt(det);
        return sim3(s, project_to_so3<Scalar>(L / s), m.template topRightCorner<3, 1>());
      }
      case Group::Affine3:
        return affine3(m.template topLeftCorner<3, 3>(), m.template topRightCorner<3, 1>());
      case Group::SL4:
        return sl4(m);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown group");
  }

  Group group() const { return group_; }
  const Matrix4<Scalar>& matrix() const { return matrix_; }
  Matrix3<Scalar> linear() const { return matrix_.template topLeftCorner<3, 3>(); }
  Vector3<Scalar> offset() const { return matrix_.template topRightCorner<3, 1>(); }

  // SIM3 factors; meaningful only for group() == Group::Sim3.
  Scalar scale() const { return scale_; }
  const Matrix3<Scalar>& rotation() const { return rotation_; }
  const Vector3<Scalar>& translation() const { return translation_; }

  template <typename Other>
  Transform<Other> cast() const {
    if (group_ == Group::Sim3)
      return Transform<Other>::sim3(Other(scale_), rotation_.template cast<Other>(),
                                    translation_.template cast<Other>());
    if (group_ == Group::Affine3)
      return Transform<Other>::affine3(linear().template cast<Other>(),
                                       offset().template cast<Other>());
    return Transform<Other>::sl4(matrix_.template cast<Other>());
  }

 private:
  explicit Transform(Group g) : group_(g) {}

  Group group_;
  Matrix4<Scalar> matrix_ = Matrix4<Scalar>::Identity();
  Scalar scale_ = Scalar(1);
  Matrix3<Scalar> rotation_ = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation_ = Vector3<Scalar>::Zero();
};

using Transformd = Transform<double>;

/// Embeds a transform into a (larger) group with the same action.
template <typename Scalar>
Transform<Scalar> promote(const Transform<Scalar>& t, Group target) {
  if (t.group() == target) return t;
  if (target == Group::Sim3)
    throw Error(ErrorCode::GroupMismatch, "cannot demote to SIM3");
  if (target == Group::Affine3 && t.group() == Group::SL4)
    throw Error(ErrorCode::GroupMismatch, "cannot demote SL4 to AFFINE3");
  return Transform<Scalar>::from_matrix(target, t.matrix());
}

template <typename Scalar>
Transform<Scalar> compose(const Transform<Scalar>& a, const Transform<Scalar>& b) {
  if (a.group() != b.group())
    throw Error(ErrorCode::GroupMismatch, std::string("cannot compose ") +
                                              std::string(to_string(a.group())) + " with " +
                                              std::string(to_string(b.group())));
  switch (a.group()) {
    case Group::Sim3:
      return Transform<Scalar>::sim3(a.scale() * b.scale(), a.rotation() * b.rotation(),
                                     a.scale() * (a.rotation() * b.translation()) + a.translation());
    case Group::Affine3:
      return Transform<Scalar>::affine3(a.linear() * b.linear(),
                                        a.linear() * b.offset() + a.offset());
    case Group::SL4:
      return Transform<Scalar>::sl4(a.matrix() * b.matrix());
  }
  throw Error(ErrorCode::InvalidArgument, "unknown group");
}

template <typename Scalar>
Transform<Scalar> inverse(const Transform<Scalar>& t) {
  switch (t.group()) {
    case Group::Sim3: {
      const Matrix3<Scalar> Rt = t.rotation().transpose();
      const Scalar inv_s = Scalar(1) / t.scale();
      return Transform<Scalar>::sim3(inv_s, Rt, -inv_s * (Rt * t.translation()));
    }
    case Group::Affine3: {
      const Eigen::FullPivLU<Matrix3<Scalar>> lu(t.linear());
      if (!lu.isInvertible())
        throw Error(ErrorCode::Degenerate, "AFFINE3 linear part is singular");
      const Matrix3<Scalar> Ainv = lu.inverse();
      return Transform<Scalar>::affine3(Ainv, -(Ainv * t.offset()));
    }
    case Group::SL4:
      return Transform<Scalar>::sl4(t.matrix().inverse());
  }
  throw Error(ErrorCode::InvalidArgument, "unknown group");
}

template <typename Scalar>
Vector3<Scalar> apply(const Transform<Scalar>& t, const Vector3<Scalar>& x) {
  if (t.group() != Group::SL4) return t.linear() * x + t.offset();
  const Eigen::Matrix<Scalar, 4, 1> h = t.matrix() * x.homogeneous();
  if (std::abs(h(3)) < Scalar(1e-12))
    throw Error(ErrorCode::PointAtInfinity, "SL4 maps point to infinity");
  return h.template head<3>() / h(3);
}

/// Jacobian of the point action at x (3x3).
template <typename Scalar>
Matrix3<Scalar> action_jacobian(const Transform<Scalar>& t, const Vector3<Scalar>& x) {
  if (t.group() != Group::SL4) return t.linear();
  const Eigen::Matrix<Scalar, 4, 1> h = t.matrix() * x.homogeneous();
  const Matrix3<Scalar> A = t.linear();
  const Eigen::Matrix<Scalar, 1, 3> v = t.matrix().template block<1, 3>(3, 0);
  const Vector3<Scalar> p = h.template head<3>();
  return (A * h(3) - p * v) / (h(3) * h(3));
}

namespace detail {

// Traceless basis: 12 off-diagonal units followed by diag(1,-1,0,0),
// diag(0,1,-1,0), diag(0,0,1,-1).
template <typename Scalar>
Matrix4<Scalar> sl4_hat(const VectorX<Scalar>& v) {
  Matrix4<Scalar> m = Matrix4<Scalar>::Zero();
  int k = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (r != c) m(r, c) = v(k++);
  m(0, 0) = v(12);
  m(1, 1) = -v(12) + v(13);
  m(2, 2) = -v(13) + v(14);
  m(3, 3) = -v(14);
  return m;
}

template <typename Scalar>
VectorX<Scalar> sl4_vee(const Matrix4<Scalar>& m) {
  VectorX<Scalar> v(15);
  int k = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (r != c) v(k++) = m(r, c);
  // Project onto the traceless subspace first so rounding in the trace is
  // spread evenly over the diagonal.
  const Scalar mean = m.trace() / Scalar(4);
  const Scalar d0 = m(0, 0) - mean, d1 = m(1, 1) - mean, d2 = m(2, 2) - mean;
  v(12) = d0;
  v(13) = d0 + d1;
  v(14) = d0 + d1 + d2;
  return v;
}

}  // namespace detail

/// Local coordinates at identity.
///  SIM3:    (t, omega, log s)       7
///  AFFINE3: (vec(A - I) row-major, t)  12
///  SL4:     traceless matrix log in the basis above  15
/// Throws Error(Degenerate) when no real logarithm exists.
template <typename Scalar>
VectorX<Scalar> log_params(const Transform<Scalar>& t) {
  switch (t.group()) {
    case Group::Sim3: {
      VectorX<Scalar> v(7);
      v.template head<3>() = t.translation();
      v.template segment<3>(3) = so3_log<Scalar>(t.rotation());
      v(6) = std::log(t.scale());
      return v;
    }
    case Group::Affine3: {
      const Matrix3<Scalar> A = t.linear();
      if (std::abs(A.determinant()) < Scalar(1e-12))
        throw Error(ErrorCode::Degenerate, "AFFINE3 linear part is singular");
      VectorX<Scalar> v(12);
      const Matrix3<Scalar> D = A - Matrix3<Scalar>::Identity();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v(3 * r + c) = D(r, c);
      v.template tail<3>() = t.offset();
      return v;
    }
    case Group::SL4: {
      const Matrix4<Scalar> L = t.matrix().log();
      const Matrix4<Scalar> back = L.exp();
      if (!L.allFinite() ||
          (back - t.matrix()).norm() > Scalar(1e-6) * (Scalar(1) + t.matrix().norm()))
        throw Error(ErrorCode::Degenerate, "SL4 element has no real principal logarithm");
      return detail::sl4_vee<Scalar>(L);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown group");
}

template <typename Scalar>
Transform<Scalar> exp_params(Group g, const VectorX<Scalar>& v) {
  if (v.size() != chart_dim(g))
    throw Error(ErrorCode::InvalidArgument, "chart vector has wrong dimension for group");
  switch (g) {
    case Group::Sim3:
      return Transform<Scalar>::sim3(std::exp(v(6)), so3_exp<Scalar>(v.template segment<3>(3)),
                                     v.template head<3>());
    case Group::Affine3: {
      Matrix3<Scalar> A = Matrix3<Scalar>::Identity();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) A(r, c) += v(3 * r + c);
      return Transform<Scalar>::affine3(A, v.template tail<3>());
    }
    case Group::SL4: {
      // Matrix exponential by scaling and squaring (Pade).
      const Matrix4<Scalar> m = detail::sl4_hat<Scalar>(v).exp();
      return Transform<Scalar>::sl4(m);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown group");
}

/// Nearest similarity (rotation and uniform scale) of a 3x3 linear map.
template <typename Scalar>
std::pair<Scalar, Matrix3<Scalar>> polar_similarity(const Matrix3<Scalar>& M) {
  const Matrix3<Scalar> R = project_to_so3<Scalar>(M);
  const Scalar s = std::cbrt(std::abs(M.determinant()));
  return {s, R};
}

// ---------------------------------------------------------------------------
// Dense per-frame grids

/// Per-pixel 3D points (row-major pixel order) with an explicit validity mask.
struct Pointmap {
  int width = 0;
  int height = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> points;
  std::vector<std::uint8_t> valid;

  Pointmap() = default;
  Pointmap(int w, int h)
      : width(w), height(h), points(Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(
                                 static_cast<Eigen::Index>(w) * h, 3)),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  Eigen::Index size() const { return static_cast<Eigen::Index>(width) * height; }
  Vector3d point(Eigen::Index i) const { return points.row(i).transpose(); }
};

/// H x W grid of non-negative scalars (confidence or depth).
struct ScalarMap {
  int width = 0;
  int height = 0;
  Eigen::VectorXd values;

  ScalarMap() = default;
  ScalarMap(int w, int h, double fill = 0.0)
      : width(w), height(h), values(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(w) * h, fill)) {}

  Eigen::Index size() const { return values.size(); }
};

}  // namespace seamstitch
