#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seamstitch/loop.hpp"
#include "seamstitch/metrics.hpp"
#include "seamstitch/segmenter.hpp"

namespace seamstitch::synth {

enum class SceneKind { CorridorLoop, MultiRoom, StraightLine, PlanarWall };

SceneKind parse_scene(std::string_view name);
std::string_view to_string(SceneKind k);

/// Axis-aligned box. Interior boxes are rooms seen from inside; the others
/// are solid obstacles.
struct Box {
  Vector3d min;
  Vector3d max;
  bool interior = false;
};

struct PinholeCamera {
  int width = 64;
  int height = 48;
  double fx = 32;
  double fy = 32;
  double cx = 32;
  double cy = 24;
};

struct SyntheticWorld {
  SceneKind kind = SceneKind::StraightLine;
  std::uint64_t seed = 0;
  std::vector<Box> boxes;
  std::vector<Posed> trajectory;  // camera-to-world, index 0 is frame 1
  PinholeCamera camera;
  double fps = 30.0;
  // Descriptor anchor grid (xy) bounds.
  Eigen::Vector2d grid_min = Eigen::Vector2d::Zero();
  Eigen::Vector2d grid_max = Eigen::Vector2d::Zero();

  int n_frames() const { return static_cast<int>(trajectory.size()); }
  double timestamp(int frame_id) const { return (frame_id - 1) / fps; }
};

/// 90 degree horizontal field of view pinhole for a W x H grid.
PinholeCamera make_camera(int width, int height);

SyntheticWorld generate_scene(SceneKind kind, int n_frames, std::uint64_t seed, int width = 64,
                              int height = 48);

struct NoiseConfig {
  double point_sigma = 0.01;       // meters
  double outlier_fraction = 0.05;
  double descriptor_sigma = 0.0;
  double confidence_base = 3.0;
  double confidence_kappa = 50.0;  // per meter of injected noise
  bool random_gauge = true;
  double gauge_scale_range = 0.1;  // SIM3 scale drawn in [1 - r, 1 + r]
  Group gauge_group = Group::Sim3;
  // Per-segment internal drift: frame at relative position a in [0, 1] of
  // the segment is reconstructed through exp(a * xi_k), xi_k ~ N(0, sigma).
  double drift_rotation = 0.0;     // radians
  double drift_translation = 0.0;  // meters
  double drift_log_scale = 0.0;
  std::uint64_t seed = 0;

  /// No point noise, outliers, drift or gauge scale; the rigid gauge is kept.
  static NoiseConfig zero();
};

/// Ground-truth camera trajectory with timestamps.
Trajectory ground_truth(const SyntheticWorld& world);

/// World point and depth along the camera ray through pixel `pixel` of frame
/// `frame_id` (1-based). Returns false on a miss.
bool cast_ray(const SyntheticWorld& world, int frame_id, int pixel, Vector3d& hit, double& depth);

/// Random gauge drawn for a segment id (identity when random_gauge is off).
Transformd segment_gauge(int segment_id, const NoiseConfig& noise);

/// World-to-segment transform of a segment whose first frame is
/// `first_frame`, before drift.
Transformd world_to_segment(const SyntheticWorld& world, int segment_id, int first_frame,
                            const NoiseConfig& noise);

/// Unit descriptor of a frame: RBF encoding of the ground-truth position on
/// an xy grid plus a heading encoding, with optional Gaussian noise.
Eigen::VectorXd frame_descriptor(const SyntheticWorld& world, int frame_id, const NoiseConfig& noise);

/// Render a planned segment over `frame_ids`.
SegmentBundle render_segment(const SyntheticWorld& world, int segment_id, const std::vector<int>& frame_ids,
                             const NoiseConfig& noise);

/// Render a loop segment for an arbitrary frame list: one fresh gauge, no drift.
SegmentBundle fulfill_loop_request(const SyntheticWorld& world, int segment_id, std::pair<int, int> loop_pair,
                                   const std::vector<int>& frame_ids, const NoiseConfig& noise);

struct LoopSearch {
  double sigma_sim = 0.95;
  int k_min = 3;
  int min_gap = 2;
  int window = 7;
};

struct RenderedSequence {
  SegmentPlan plan;
  std::vector<SegmentBundle> bundles;
  std::vector<LoopRequest> requests;
  std::vector<SegmentBundle> loop_bundles;  // ids follow the planned ones
};

/// Renders every planned segment and, when `loops` is set, runs the same loop
/// search as the backend and fulfills each request.
RenderedSequence render_sequence(const SyntheticWorld& world, int segment_length, int overlap,
                                 const NoiseConfig& noise, const std::optional<LoopSearch>& loops);

}  // namespace seamstitch::synth
