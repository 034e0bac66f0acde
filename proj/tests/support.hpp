// Test-only helpers: random instances and independent oracles. Nothing here
// calls into the library code it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seamstitch/core.hpp"
#include "seamstitch/metrics.hpp"
#include "seamstitch/segmenter.hpp"

namespace testing_support {

using seamstitch::Group;
using seamstitch::Transformd;

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng, double max_angle = M_PI) {
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::Vector3d axis(g(rng), g(rng), g(rng));
  axis.normalize();
  return Eigen::AngleAxisd(max_angle * u(rng), axis).toRotationMatrix();
}

inline Eigen::Vector3d random_vec(std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> g(0, sigma);
  return {g(rng), g(rng), g(rng)};
}

/// Well-conditioned random element of `g`.
inline Transformd random_transform(Group g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  const double s = std::exp(0.5 * u(rng));
  const Transformd sim = Transformd::sim3(s, random_rotation(rng), random_vec(rng, 2.0));
  if (g == Group::Sim3) return sim;
  if (g == Group::Affine3) {
    Eigen::Matrix3d A = s * random_rotation(rng);
    for (int i = 0; i < 9; ++i) A.data()[i] += 0.2 * u(rng);
    if (A.determinant() < 0) A.col(0) *= -1;
    return Transformd::affine3(A, random_vec(rng, 2.0));
  }
  Eigen::Matrix4d H = sim.matrix();
  for (int c = 0; c < 3; ++c) H(3, c) = 0.02 * u(rng);
  return Transformd::sl4(H);
}

/// Plain homogeneous action written out by hand.
inline Eigen::Vector3d oracle_apply(const Eigen::Matrix4d& m, const Eigen::Vector3d& x) {
  double y[4];
  for (int r = 0; r < 4; ++r) y[r] = m(r, 0) * x(0) + m(r, 1) * x(1) + m(r, 2) * x(2) + m(r, 3);
  return {y[0] / y[3], y[1] / y[3], y[2] / y[3]};
}

inline Eigen::Matrix4d oracle_matmul(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b) {
  Eigen::Matrix4d c;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline seamstitch::Trajectory random_trajectory(std::mt19937_64& rng, int n) {
  seamstitch::Trajectory t;
  Eigen::Vector3d p = random_vec(rng);
  for (int i = 0; i < n; ++i) {
    p += random_vec(rng, 0.3);
    seamstitch::Posed pose;
    pose.rotation = random_rotation(rng);
    pose.translation = p;
    t.push_back(0.05 * i, pose);
  }
  return t;
}

/// Brute-force metrics: explicit similarity alignment by Horn's quaternion
/// method (different construction from the SVD-based library code).
struct BruteAlignment {
  double s = 1;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

inline BruteAlignment brute_align(const std::vector<Eigen::Vector3d>& est, const std::vector<Eigen::Vector3d>& gt,
                                  bool with_scale) {
  const double n = static_cast<double>(est.size());
  Eigen::Vector3d me = Eigen::Vector3d::Zero(), mg = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    me += est[i] / n;
    mg += gt[i] / n;
  }
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  double var_e = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    S += (est[i] - me) * (gt[i] - mg).transpose();
    var_e += (est[i] - me).squaredNorm();
  }
  Eigen::Matrix4d N;
  N << S(0, 0) + S(1, 1) + S(2, 2), S(1, 2) - S(2, 1), S(2, 0) - S(0, 2), S(0, 1) - S(1, 0),
      S(1, 2) - S(2, 1), S(0, 0) - S(1, 1) - S(2, 2), S(0, 1) + S(1, 0), S(2, 0) + S(0, 2),
      S(2, 0) - S(0, 2), S(0, 1) + S(1, 0), -S(0, 0) + S(1, 1) - S(2, 2), S(1, 2) + S(2, 1),
      S(0, 1) - S(1, 0), S(2, 0) + S(0, 2), S(1, 2) + S(2, 1), -S(0, 0) - S(1, 1) + S(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(N);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  BruteAlignment a;
  a.R = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
  if (with_scale) {
    double num = 0;
    for (std::size_t i = 0; i < est.size(); ++i) num += (gt[i] - mg).dot(a.R * (est[i] - me));
    a.s = num / var_e;
  }
  a.t = mg - a.s * a.R * me;
  return a;
}

inline double angle_of(const Eigen::Matrix3d& R) {
  return std::acos(std::clamp((R.trace() - 1) / 2, -1.0, 1.0));
}

/// Minimal binary little-endian PLY reader for x y z float + r g b uchar.
struct PlyVertex {
  float x, y, z;
  std::uint8_t r, g, b;
};

inline std::vector<PlyVertex> read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line, format;
  std::size_t count = 0;
  std::vector<std::string> props;
  std::getline(in, line);
  if (line != "ply") throw std::runtime_error("not a ply file");
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") ls >> format;
    if (kw == "element") {
      std::string name;
      ls >> name >> count;
    }
    if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    }
  }
  const std::vector<std::string> expected = {"float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"};
  if (format != "binary_little_endian" || props != expected) throw std::runtime_error("unexpected ply layout");
  std::vector<PlyVertex> out(count);
  for (auto& v : out) {
    char buf[15];
    in.read(buf, 15);
    if (!in) throw std::runtime_error("truncated ply body");
    std::memcpy(&v.x, buf, 4);
    std::memcpy(&v.y, buf + 4, 4);
    std::memcpy(&v.z, buf + 8, 4);
    v.r = static_cast<std::uint8_t>(buf[12]);
    v.g = static_cast<std::uint8_t>(buf[13]);
    v.b = static_cast<std::uint8_t>(buf[14]);
  }
  char extra;
  if (in.read(&extra, 1)) throw std::runtime_error("trailing bytes after ply body");
  return out;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("seamstitch_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small hand-built bundle: `n` frames starting at `first`, W x H grid, points
/// on a tilted plane in front of the camera, unit-ish confidences.
inline seamstitch::SegmentBundle toy_bundle(int segment_id, int first, int n, int W = 8, int H = 6, int D = 4) {
  seamstitch::SegmentBundle b;
  b.segment_id = segment_id;
  b.width = W;
  b.height = H;
  for (int k = 0; k < n; ++k) {
    const int fid = first + k;
    b.frame_ids.push_back(fid);
    seamstitch::FrameData f;
    f.points = seamstitch::Pointmap(W, H);
    f.confidence = seamstitch::ScalarMap(W, H, 0.0);
    f.depth = seamstitch::ScalarMap(W, H, 0.0);
    for (int p = 0; p < W * H; ++p) {
      const double u = p % W, v = p / W;
      const double z = 2.0 + 0.1 * u + 0.05 * v + 0.01 * fid;
      f.points.points.row(p) << 0.1 * (u - W / 2.0) * z, 0.1 * (v - H / 2.0) * z, z;
      f.points.valid[p] = 1;
      f.confidence.values(p) = 2.0 + 0.01 * p;
      f.depth.values(p) = z;
    }
    f.pose.translation = Eigen::Vector3d(0.05 * fid, 0.01 * fid * fid * 0.01, 0.02 * std::sin(fid));
    f.pose.rotation = Eigen::AngleAxisd(0.02 * fid, Eigen::Vector3d::UnitY()).toRotationMatrix();
    f.descriptor = Eigen::VectorXd::Constant(D, 1.0 / std::sqrt(D));
    f.timestamp = fid;
    b.frames.push_back(std::move(f));
  }
  return b;
}

}  // namespace testing_support
