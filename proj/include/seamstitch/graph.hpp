#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seamstitch/segmenter.hpp"

namespace seamstitch {

enum class EdgeKind { Pointmap, Pose, LoopPointmap, LoopPose };

constexpr std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::Pointmap: return "POINTMAP";
    case EdgeKind::Pose: return "POSE";
    case EdgeKind::LoopPointmap: return "LOOP_POINTMAP";
    case EdgeKind::LoopPose: return "LOOP_POSE";
  }
  return "UNKNOWN";
}

constexpr bool is_loop(EdgeKind k) { return k == EdgeKind::LoopPointmap || k == EdgeKind::LoopPose; }

/// Relative measurement: points of `to` map into `from` via
/// x_from = apply(measurement, x_to), so consistency means
/// G_to = compose(G_from, measurement).
struct Edge {
  int from = 0;
  int to = 0;
  Transformd measurement;
  EdgeKind kind = EdgeKind::Pointmap;
  double weight = 1.0;
  bool robust = false;
};

/// Segment-level pose graph. Node states are segment-to-world transforms;
/// the gauge node stays at identity.
struct PoseGraph {
  Group group = Group::Sim3;
  int gauge = 1;
  std::map<int, Transformd> nodes;
  std::vector<Edge> edges;
};

/// Collects nodes 1..num_segments plus loop-edge endpoints and checks that
/// every node is reachable from the gauge node.
PoseGraph build_graph(Group group, int num_segments, std::vector<Edge> adjacent_edges,
                      std::vector<Edge> loop_edges);

/// Chains sequential measurements from the gauge (pointmap edges preferred)
/// and reaches remaining nodes through their strongest incident edge.
PoseGraph initialize_nodes(PoseGraph graph);

struct EdgeResidual {
  VectorX<double> r;
  bool fallback = false;  // log failed; a first-order surrogate was used
};

/// r = sqrt(weight) * log( measurement^-1 * G_from^-1 * G_to ).
EdgeResidual edge_residual(const Edge& e, const Transformd& from, const Transformd& to);

struct LmConfig {
  int max_iters = 100;
  double tol = 1e-10;          // step norm
  double rel = 1e-14;          // relative cost decrease
  double loop_huber_delta = 0.5; // chart units; applied to robust edges only
  double initial_lambda = 1e-4;
  int max_retries = 30;
  double fd_step = 1e-6;
};

struct LmReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;  // accepted steps
  bool converged = false;
  bool failed = false;
  bool used_fallback = false;
  std::string stop_reason;
  std::vector<double> edge_residual_norms;  // per edge, final
};

/// Sum over edges of |r_e|^2, Huber-robustified (2 delta |r| - delta^2 above
/// delta) on edges flagged robust.
double graph_cost(const PoseGraph& graph, const LmConfig& cfg);

/// Levenberg-Marquardt over all non-gauge node states with central
/// finite-difference Jacobians in the group chart (right perturbation).
std::pair<PoseGraph, LmReport> optimize_lm(const PoseGraph& graph, const LmConfig& cfg);

/// Finite-difference Jacobian of one edge's residual w.r.t. the right
/// perturbation of its `to` (or `from`) node, for self-consistency checks.
Eigen::MatrixXd edge_jacobian(const Edge& e, const Transformd& from, const Transformd& to, bool wrt_to,
                              double step);

// ---------------------------------------------------------------------------
// Stitching

struct TrajectoryEntry {
  int frame_id = 0;
  double timestamp = 0.0;
  int segment_id = 0;
  Posed pose;  // camera-to-world
};

struct GlobalMap {
  std::vector<Eigen::Vector3f> points;
  std::vector<std::array<std::uint8_t, 3>> colors;
  std::vector<int> segment_ids;
  std::vector<TrajectoryEntry> trajectory;
  /// True when poses were projected from a non-similarity node state onto
  /// the nearest rotation (AFFINE3 / SL4).
  bool poses_approximated = false;
};

struct StitchConfig {
  double tau_c = 1.5;
  std::size_t max_map_points = 2'000'000;
  double world_scale = 1.0;  // uniform scale applied after the node transforms
};

/// Geometric mean of the planned nodes' scale factors, inverted: the world
/// scale that makes the average segment metric.
double mean_scale_anchor(const PoseGraph& graph, int num_segments);

GlobalMap stitch(const std::vector<SegmentBundle>& bundles, const PoseGraph& graph, const SegmentPlan& plan,
                 const StitchConfig& cfg);

}  // namespace seamstitch
