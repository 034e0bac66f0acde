#include "seamstitch/synth.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace seamstitch::synth {

SceneKind parse_scene(std::string_view name) {
  if (name == "corridor-loop") return SceneKind::CorridorLoop;
  if (name == "multi-room") return SceneKind::MultiRoom;
  if (name == "straight-line") return SceneKind::StraightLine;
  if (name == "planar-wall") return SceneKind::PlanarWall;
  throw Error(ErrorCode::InvalidArgument, "unknown scene '" + std::string(name) + "'");
}

std::string_view to_string(SceneKind k) {
  switch (k) {
    case SceneKind::CorridorLoop: return "corridor-loop";
    case SceneKind::MultiRoom: return "multi-room";
    case SceneKind::StraightLine: return "straight-line";
    case SceneKind::PlanarWall: return "planar-wall";
  }
  return "unknown";
}

NoiseConfig NoiseConfig::zero() {
  NoiseConfig n;
  n.point_sigma = 0;
  n.outlier_fraction = 0;
  n.descriptor_sigma = 0;
  n.gauge_scale_range = 0;
  return n;
}

PinholeCamera make_camera(int width, int height) {
  if (width < 2 || height < 2) throw Error(ErrorCode::InvalidArgument, "camera grid too small");
  PinholeCamera c;
  c.width = width;
  c.height = height;
  c.fx = c.fy = width / 2.0;  // tan(45 deg) = 1
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  return c;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t z = a ^ (b * 0x9E3779B97F4A7C15ULL) ^ (c * 0xC2B2AE3D27D4EB4FULL);
  for (int i = 0; i < 2; ++i) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
  }
  return z;
}

// Camera looking along heading theta in the xy plane, z up.
Posed heading_pose(const Vector3d& position, double theta) {
  const Vector3d forward(std::cos(theta), std::sin(theta), 0.0);
  const Vector3d down(0, 0, -1);
  const Vector3d right = down.cross(forward);
  Posed p;
  p.rotation.col(0) = right;
  p.rotation.col(1) = down;
  p.rotation.col(2) = forward;
  p.translation = position;
  return p;
}

double bob(double s) { return 1.5 + 0.05 * std::sin(2 * M_PI * s / 7.0); }

// Rounded rectangle through the corridor centerline, counterclockwise.
std::pair<Eigen::Vector2d, double> loop_path(double s) {
  const double x0 = 1.5, x1 = 22.5, y0 = 1.5, y1 = 12.5, r = 1.0;
  const double lx = x1 - x0 - 2 * r, ly = y1 - y0 - 2 * r, arc = M_PI * r / 2;
  const double perimeter = 2 * lx + 2 * ly + 4 * arc;
  s = std::fmod(s, perimeter);
  if (s < 0) s += perimeter;

  struct Corner {
    Eigen::Vector2d center;
    double start_angle;
  };
  const Corner corners[4] = {{{x1 - r, y0 + r}, -M_PI / 2},
                             {{x1 - r, y1 - r}, 0.0},
                             {{x0 + r, y1 - r}, M_PI / 2},
                             {{x0 + r, y0 + r}, M_PI}};
  const Eigen::Vector2d starts[4] = {{x0 + r, y0}, {x1, y0 + r}, {x1 - r, y1}, {x0, y1 - r}};
  const double lengths[4] = {lx, ly, lx, ly};
  const double headings[4] = {0.0, M_PI / 2, M_PI, -M_PI / 2};
  for (int side = 0; side < 4; ++side) {
    if (s < lengths[side]) {
      const Eigen::Vector2d dir(std::cos(headings[side]), std::sin(headings[side]));
      return {starts[side] + s * dir, headings[side]};
    }
    s -= lengths[side];
    if (s < arc) {
      const double a = corners[side].start_angle + s / r;
      return {corners[side].center + r * Eigen::Vector2d(std::cos(a), std::sin(a)), a + M_PI / 2};
    }
    s -= arc;
  }
  return {starts[0], 0.0};
}

constexpr double kLoopPerimeter = 2 * 19.0 + 2 * 9.0 + 2 * M_PI;

}  // namespace

SyntheticWorld generate_scene(SceneKind kind, int n_frames, std::uint64_t seed, int width, int height) {
  if (n_frames < 2) throw Error(ErrorCode::InvalidArgument, "scene needs at least 2 frames");
  SyntheticWorld w;
  w.kind = kind;
  w.seed = seed;
  w.camera = make_camera(width, height);
  w.trajectory.reserve(n_frames);

  // Small seed-dependent phase so different seeds give different worlds.
  std::mt19937_64 rng(mix(seed, 0x5CE4E));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  switch (kind) {
    case SceneKind::CorridorLoop: {
      w.boxes.push_back({{0, 0, 0}, {24, 14, 3}, true});
      w.boxes.push_back({{3, 3, -1}, {21, 11, 4}, false});
      w.boxes.push_back({{7.0, 0, 0}, {7.4, 0.4, 3}, false});  // pilasters break symmetry
      w.boxes.push_back({{16.0, 13.6, 0}, {16.5, 14, 3}, false});
      const double offset = unit(rng) * 0.5;
      for (int f = 0; f < n_frames; ++f) {
        const double s = offset + kLoopPerimeter * f / n_frames;
        const auto [xy, theta] = loop_path(s);
        w.trajectory.push_back(heading_pose(Vector3d(xy.x(), xy.y(), bob(s)), theta));
      }
      break;
    }
    case SceneKind::MultiRoom: {
      w.boxes.push_back({{0, 0, 0}, {12, 12, 3}, true});
      w.boxes.push_back({{5, 5, -1}, {7, 7, 4}, false});
      w.boxes.push_back({{1, 1, -1}, {2, 2, 4}, false});
      w.boxes.push_back({{10, 1, -1}, {11, 2, 4}, false});
      w.boxes.push_back({{1, 10, -1}, {2, 11, 4}, false});
      w.boxes.push_back({{6, 10.5, -1}, {6.3, 12, 4}, false});  // partition stub
      const double laps = std::max(1.0, n_frames / 300.0);
      const double phase = unit(rng) * 2 * M_PI;
      for (int f = 0; f < n_frames; ++f) {
        const double a = phase + 2 * M_PI * laps * f / n_frames;
        const Vector3d p(6 + 3.5 * std::cos(a), 6 + 3.5 * std::sin(a), bob(3.5 * a));
        w.trajectory.push_back(heading_pose(p, a + M_PI / 2));
      }
      break;
    }
    case SceneKind::StraightLine: {
      const double length = 0.1 * (n_frames - 1);
      w.boxes.push_back({{-5, -1.5, 0}, {length + 5, 1.5, 3}, true});
      for (int f = 0; f < n_frames; ++f) w.trajectory.push_back(heading_pose(Vector3d(0.1 * f, 0, 1.5), 0.0));
      break;
    }
    case SceneKind::PlanarWall: {
      w.boxes.push_back({{-1e4, 3, -1e4}, {1e4, 4, 1e4}, false});
      for (int f = 0; f < n_frames; ++f)
        w.trajectory.push_back(heading_pose(Vector3d(0.1 * f, 0, 1.5), M_PI / 2));
      break;
    }
  }

  Eigen::Vector2d lo = w.trajectory.front().translation.head<2>(), hi = lo;
  for (const Posed& p : w.trajectory) {
    lo = lo.cwiseMin(p.translation.head<2>());
    hi = hi.cwiseMax(p.translation.head<2>());
  }
  w.grid_min = lo.array() - 3.0;
  w.grid_max = hi.array() + 3.0;
  return w;
}

Trajectory ground_truth(const SyntheticWorld& world) {
  Trajectory t;
  for (int f = 1; f <= world.n_frames(); ++f) t.push_back(world.timestamp(f), world.trajectory[f - 1]);
  return t;
}

namespace {

// Distance along d (not normalized) to the first surface hit, or +inf.
double intersect(const Box& b, const Vector3d& o, const Vector3d& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr double eps = 1e-9;
  if (b.interior) {
    double t_exit = inf;
    for (int a = 0; a < 3; ++a) {
      if (d(a) > 0) t_exit = std::min(t_exit, (b.max(a) - o(a)) / d(a));
      if (d(a) < 0) t_exit = std::min(t_exit, (b.min(a) - o(a)) / d(a));
    }
    return t_exit > eps ? t_exit : inf;
  }
  double t_near = -inf, t_far = inf;
  for (int a = 0; a < 3; ++a) {
    if (d(a) == 0) {
      if (o(a) < b.min(a) || o(a) > b.max(a)) return inf;
      continue;
    }
    double t1 = (b.min(a) - o(a)) / d(a), t2 = (b.max(a) - o(a)) / d(a);
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_near <= eps) return inf;
  return t_near;
}

std::array<std::uint8_t, 3> surface_color(const Vector3d& x, std::size_t box) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 4> base = {
      {{{180, 160, 140}}, {{120, 140, 180}}, {{170, 90, 90}}, {{90, 160, 100}}}};
  const auto& c = base[box % base.size()];
  const long checker = static_cast<long>(std::floor(x.x()) + std::floor(x.y()) + std::floor(x.z()));
  const double k = (checker & 1) ? 1.0 : 0.7;
  return {static_cast<std::uint8_t>(c[0] * k), static_cast<std::uint8_t>(c[1] * k),
          static_cast<std::uint8_t>(c[2] * k)};
}

bool cast(const SyntheticWorld& w, const Posed& pose, int pixel, Vector3d& hit, double& depth, std::size_t& box) {
  const int u = pixel % w.camera.width, v = pixel / w.camera.width;
  const Vector3d ray_cam((u + 0.5 - w.camera.cx) / w.camera.fx, (v + 0.5 - w.camera.cy) / w.camera.fy, 1.0);
  const Vector3d d = pose.rotation * ray_cam;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.boxes.size(); ++i) {
    const double t = intersect(w.boxes[i], pose.translation, d);
    if (t < best) {
      best = t;
      box = i;
    }
  }
  if (!std::isfinite(best)) return false;
  hit = pose.translation + best * d;
  depth = best;  // ray_cam has unit z
  return true;
}

}  // namespace

bool cast_ray(const SyntheticWorld& world, int frame_id, int pixel, Vector3d& hit, double& depth) {
  std::size_t box = 0;
  return cast(world, world.trajectory.at(frame_id - 1), pixel, hit, depth, box);
}

Transformd segment_gauge(int segment_id, const NoiseConfig& noise) {
  if (!noise.random_gauge) return Transformd::identity(noise.gauge_group);
  std::mt19937_64 rng(mix(noise.seed, 0x6A09E667ULL, static_cast<std::uint64_t>(segment_id)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
  axis.normalize();
  const double angle = unit(rng) * M_PI * 0.9;
  const Vector3d t(2 * gauss(rng), 2 * gauss(rng), 2 * gauss(rng));
  // Scales follow a golden-ratio sequence with a seeded phase, so any run of
  // consecutive segments covers [1 - r, 1 + r] evenly.
  const double phase = std::ldexp(static_cast<double>(mix(noise.seed, 0x5CA1E) >> 11), -53);
  const double u = std::fmod(phase + 0.6180339887498949 * segment_id, 1.0);
  const double s = 1.0 + noise.gauge_scale_range * (2 * u - 1);
  const Transformd sim = Transformd::sim3(s, so3_exp<double>(angle * axis), t);

  switch (noise.gauge_group) {
    case Group::Sim3:
      return sim;
    case Group::Affine3: {
      Matrix3d A = Matrix3d::Identity();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) A(r, c) += 0.05 * unit(rng);
      return compose(promote(sim, Group::Affine3), Transformd::affine3(A, Vector3d::Zero()));
    }
    case Group::SL4: {
      Matrix4d H = Matrix4d::Identity();
      for (int c = 0; c < 3; ++c) H(3, c) = 0.005 * unit(rng);
      return compose(promote(sim, Group::SL4), Transformd::sl4(H));
    }
  }
  return sim;
}

Transformd world_to_segment(const SyntheticWorld& world, int segment_id, int first_frame,
                            const NoiseConfig& noise) {
  const Posed& first = world.trajectory.at(first_frame - 1);
  const Transformd cam_to_world = Transformd::sim3(1.0, first.rotation, first.translation);
  const Transformd gauge = segment_gauge(segment_id, noise);
  return compose(gauge, promote(inverse(cam_to_world), gauge.group()));
}

Eigen::VectorXd frame_descriptor(const SyntheticWorld& world, int frame_id, const NoiseConfig& noise) {
  constexpr double spacing = 1.0, sigma = 1.0;
  constexpr int heading_bins = 8;
  constexpr double heading_kappa = 2.0, heading_weight = 0.5;
  const Posed& pose = world.trajectory.at(frame_id - 1);
  const Eigen::Vector2d p = pose.translation.head<2>();
  const Vector3d fwd = pose.rotation.col(2);
  const double theta = std::atan2(fwd.y(), fwd.x());

  const int nx = static_cast<int>(std::floor((world.grid_max.x() - world.grid_min.x()) / spacing)) + 1;
  const int ny = static_cast<int>(std::floor((world.grid_max.y() - world.grid_min.y()) / spacing)) + 1;
  Eigen::VectorXd pos(nx * ny);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const Eigen::Vector2d a = world.grid_min + spacing * Eigen::Vector2d(i, j);
      pos(i * ny + j) = std::exp(-(p - a).squaredNorm() / (2 * sigma * sigma));
    }
  pos.normalize();
  Eigen::VectorXd head(heading_bins);
  for (int b = 0; b < heading_bins; ++b)
    head(b) = std::exp(heading_kappa * (std::cos(theta - 2 * M_PI * b / heading_bins) - 1));
  head *= heading_weight / head.norm();

  Eigen::VectorXd d(pos.size() + head.size());
  d << pos, head;
  if (noise.descriptor_sigma > 0) {
    std::mt19937_64 rng(mix(noise.seed, 0xDE5C, static_cast<std::uint64_t>(frame_id)));
    std::normal_distribution<double> gauss(0.0, noise.descriptor_sigma);
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) += gauss(rng);
  }
  return d / d.norm();
}

namespace {

SegmentBundle render(const SyntheticWorld& world, int segment_id, const std::vector<int>& frame_ids,
                     const NoiseConfig& noise, bool drift) {
  if (frame_ids.empty()) throw Error(ErrorCode::InvalidArgument, "no frames to render");
  for (int f : frame_ids)
    if (f < 1 || f > world.n_frames())
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(f) + " outside the world trajectory");

  const int W = world.camera.width, H = world.camera.height;
  SegmentBundle b;
  b.segment_id = segment_id;
  b.width = W;
  b.height = H;
  b.frame_ids = frame_ids;

  const Transformd base = world_to_segment(world, segment_id, frame_ids.front(), noise);
  const Group g = base.group();
  const Transformd gauge = segment_gauge(segment_id, noise);
  const Posed& first = world.trajectory.at(frame_ids.front() - 1);
  const Transformd world_to_first = inverse(Transformd::sim3(1.0, first.rotation, first.translation));

  VectorX<double> xi = VectorX<double>::Zero(7);
  if (drift) {
    std::mt19937_64 rng(mix(noise.seed, 0xD81F7ULL, static_cast<std::uint64_t>(segment_id)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 3; ++i) xi(i) = noise.drift_translation * gauss(rng);
    for (int i = 3; i < 6; ++i) xi(i) = noise.drift_rotation * gauss(rng);
    xi(6) = noise.drift_log_scale * gauss(rng);
  }
  const bool has_drift = xi.squaredNorm() > 0;
  const double n_minus_1 = std::max<double>(1.0, static_cast<double>(frame_ids.size()) - 1.0);

  std::size_t total_hits = 0;
  for (std::size_t k = 0; k < frame_ids.size(); ++k) {
    const int fid = frame_ids[k];
    Transformd S = base;
    if (has_drift) {
      const Transformd D = exp_params(Group::Sim3, VectorX<double>(xi * (static_cast<double>(k) / n_minus_1)));
      S = compose(gauge, promote(compose(D, world_to_first), g));
    }
    const Posed& cam = world.trajectory.at(fid - 1);

    FrameData fd;
    fd.points = Pointmap(W, H);
    fd.confidence = ScalarMap(W, H, 0.0);
    fd.depth = ScalarMap(W, H, 0.0);
    fd.rgb.assign(static_cast<std::size_t>(3) * W * H, 0);
    fd.timestamp = world.timestamp(fid);
    fd.descriptor = frame_descriptor(world, fid, noise);
    fd.pose.translation = apply(S, cam.translation);
    if (g == Group::Sim3)
      fd.pose.rotation = S.rotation() * cam.rotation;
    else
      fd.pose.rotation = project_to_so3<double>(action_jacobian(S, cam.translation) * cam.rotation);

    std::mt19937_64 rng(mix(noise.seed, static_cast<std::uint64_t>(segment_id) * 7919ULL + 13,
                            static_cast<std::uint64_t>(fid)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int p = 0; p < W * H; ++p) {
      Vector3d hit;
      double ray_depth;
      std::size_t box = 0;
      if (!cast(world, cam, p, hit, ray_depth, box)) continue;
      ++total_hits;
      const auto color = surface_color(hit, box);
      for (int c = 0; c < 3; ++c) fd.rgb[3 * p + c] = color[c];

      Vector3d x;
      try {
        x = apply(S, hit);
      } catch (const Error&) {
        continue;
      }
      Vector3d n = Vector3d::Zero();
      if (noise.point_sigma > 0) n = noise.point_sigma * Vector3d(gauss(rng), gauss(rng), gauss(rng));
      if (noise.outlier_fraction > 0 && unit(rng) < noise.outlier_fraction)
        n += Vector3d(4 * unit(rng) - 2, 4 * unit(rng) - 2, 4 * unit(rng) - 2);
      x += n;
      const double depth = (fd.pose.rotation.transpose() * (x - fd.pose.translation)).z();
      if (!(depth > 0)) continue;

      fd.points.points.row(p) = x.transpose();
      fd.points.valid[p] = 1;
      fd.depth.values(p) = depth;
      fd.confidence.values(p) = noise.confidence_base / (1.0 + noise.confidence_kappa * n.norm());
    }
    b.frames.push_back(std::move(fd));
  }
  if (total_hits == 0)
    throw Error(ErrorCode::Degenerate, "segment " + std::to_string(segment_id) + ": every ray missed the scene");
  return b;
}

}  // namespace

SegmentBundle render_segment(const SyntheticWorld& world, int segment_id, const std::vector<int>& frame_ids,
                             const NoiseConfig& noise) {
  return render(world, segment_id, frame_ids, noise, true);
}

SegmentBundle fulfill_loop_request(const SyntheticWorld& world, int segment_id, std::pair<int, int> loop_pair,
                                   const std::vector<int>& frame_ids, const NoiseConfig& noise) {
  SegmentBundle b = render(world, segment_id, frame_ids, noise, false);
  b.loop_pair = loop_pair;
  return b;
}

RenderedSequence render_sequence(const SyntheticWorld& world, int segment_length, int overlap,
                                 const NoiseConfig& noise, const std::optional<LoopSearch>& loops) {
  RenderedSequence out;
  out.plan = plan_segments(world.n_frames(), segment_length, overlap);
  for (int k = 1; k <= out.plan.num_segments(); ++k) {
    const FrameRange& r = out.plan.range(k);
    std::vector<int> ids(static_cast<std::size_t>(r.length()));
    std::iota(ids.begin(), ids.end(), r.first);
    out.bundles.push_back(render_segment(world, k, ids, noise));
  }
  if (!loops) return out;
  const DescriptorIndex index = DescriptorIndex::from_bundles(out.bundles, out.plan);
  const auto found = detect_loops(find_candidates(index, loops->sigma_sim, loops->min_gap), loops->k_min);
  int next_id = out.plan.num_segments() + 1;
  for (const Loop& loop : found) {
    LoopRequest req = request_loop_segment(loop, loops->window, out.plan);
    out.loop_bundles.push_back(
        fulfill_loop_request(world, next_id++, {loop.segment_i, loop.segment_j}, req.frame_ids, noise));
    out.requests.push_back(std::move(req));
  }
  return out;
}

}  // namespace seamstitch::synth
