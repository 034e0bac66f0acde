#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seamstitch/align.hpp"
#include "seamstitch/config.hpp"
#include "seamstitch/graph.hpp"
#include "seamstitch/loop.hpp"
#include "seamstitch/metrics.hpp"
#include "seamstitch/segmenter.hpp"

namespace seamstitch {

struct EdgeRecord {
  Edge edge;
  int correspondences = 0;
  int candidate_pixels = 0;
  int skipped_pixels = 0;
  IrlsDiagnostics irls;
  double final_residual = 0.0;
};

struct SkippedEdge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::Pose;
  std::string reason;
};

struct PipelineResult {
  SegmentPlan plan;
  PoseGraph initial;    // chained initialization
  PoseGraph optimized;
  LmReport lm;
  double world_scale = 1.0;
  GlobalMap map;
  std::vector<EdgeRecord> edges;  // same order as optimized.edges
  std::vector<SkippedEdge> skipped;
  std::vector<LoopCandidate> candidates;
  std::vector<Loop> loops;
  std::vector<LoopRequest> loop_requests;
  std::vector<std::string> warnings;
};

/// Runs the backend on in-memory bundles. Planned bundles have no loop_pair;
/// loop bundles carry the segment pair they bridge.
PipelineResult run_pipeline(const RunConfig& cfg, std::vector<SegmentBundle> bundles,
                            std::vector<SegmentBundle> loop_bundles = {});

/// Reads bundles from cfg.input_dir (and cfg.loops_dir when set), runs the
/// pipeline and writes trajectory.tum, map.ply, report.json and
/// loop_requests.json into cfg.output_dir.
PipelineResult run_from_disk(const RunConfig& cfg);

Trajectory to_trajectory(const GlobalMap& map);

nlohmann::json make_report(const RunConfig& cfg, const PipelineResult& r);
nlohmann::json loop_requests_json(const std::vector<LoopRequest>& requests);

/// Endpoint position error of the planned-segment chain against ground truth,
/// after aligning the first frames: distance between the last estimated and
/// true camera centers, with the first camera pinned.
double endpoint_error(const Trajectory& est, const Trajectory& gt);

}  // namespace seamstitch
