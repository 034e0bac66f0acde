#include "seamstitch/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <set>
#include <thread>
#include <tuple>
#include <type_traits>
#include <variant>

#include "seamstitch/io.hpp"
#include "seamstitch/overlap.hpp"

namespace seamstitch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using TaskResult = std::variant<EdgeRecord, SkippedEdge>;

// Runs tasks on a small pool; results land at their task index so the output
// does not depend on scheduling. The first failing task (by index) rethrows.
std::vector<TaskResult> run_tasks(const std::vector<std::function<TaskResult()>>& tasks, int threads) {
  std::vector<std::optional<TaskResult>> out(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        out[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(1, tasks.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<TaskResult> results;
  results.reserve(out.size());
  for (auto& r : out) results.push_back(std::move(*r));
  return results;
}

std::string pair_name(int a, int b) { return "segments " + std::to_string(a) + "-" + std::to_string(b); }

EdgeRecord pointmap_edge(const SegmentBundle& a, const SegmentBundle& b, int from, int to, EdgeKind kind,
                         const RunConfig& cfg) {
  try {
    OverlapConfig oc;
    oc.tau_c = cfg.tau_c;
    oc.max_points = cfg.max_points;
    oc.seed = cfg.seed;
    const CorrespondenceSet corrs = extract_correspondences(a, b, oc);
    IrlsConfig ic;
    ic.huber_delta = cfg.huber_delta;
    ic.max_iters = cfg.irls_max_iters;
    ic.group = cfg.group;
    const AlignResult fit = irls_align(corrs, ic);
    EdgeRecord rec;
    rec.edge = {from, to, fit.transform, kind, cfg.pointmap_weight, is_loop(kind)};
    rec.correspondences = static_cast<int>(corrs.size());
    rec.candidate_pixels = corrs.candidate_pixels;
    rec.skipped_pixels = corrs.skipped_pixels;
    rec.irls = fit.diagnostics;
    return rec;
  } catch (const Error& e) {
    throw Error(e.code(), pair_name(a.segment_id, b.segment_id) + " pointmap alignment (" +
                              std::string(to_string(cfg.group)) + "): " + e.detail());
  }
}

TaskResult pose_edge(const SegmentBundle& a, const SegmentBundle& b, int from, int to, EdgeKind kind,
                     const RunConfig& cfg) {
  try {
    const CorrespondenceSet corrs = extract_pose_correspondences(a, b);
    IrlsConfig ic;
    ic.huber_delta = cfg.huber_delta;
    ic.max_iters = cfg.irls_max_iters;
    ic.group = cfg.group;
    const AlignResult fit = align_poses(corrs, ic);
    EdgeRecord rec;
    rec.edge = {from, to, fit.transform, kind, cfg.pose_weight, is_loop(kind)};
    rec.correspondences = static_cast<int>(corrs.size());
    rec.irls = fit.diagnostics;
    return rec;
  } catch (const Error& e) {
    return SkippedEdge{from, to, kind, pair_name(a.segment_id, b.segment_id) + ": " + e.detail()};
  }
}

void require_valid(const SegmentBundle& b, const SegmentPlan& plan) {
  const ValidationReport rep = validate_bundle(b, plan);
  if (!rep.ok()) throw Error(ErrorCode::InvalidArgument, rep.summary());
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, std::vector<SegmentBundle> bundles,
                            std::vector<SegmentBundle> loop_bundles) {
  cfg.validate();
  for (auto it = bundles.begin(); it != bundles.end();)
    if (it->loop_pair) {
      loop_bundles.push_back(std::move(*it));
      it = bundles.erase(it);
    } else {
      ++it;
    }
  if (bundles.empty()) throw Error(ErrorCode::InvalidArgument, "no segment bundles");
  std::sort(bundles.begin(), bundles.end(),
            [](const SegmentBundle& x, const SegmentBundle& y) { return x.segment_id < y.segment_id; });

  int n_frames = 0;
  for (const SegmentBundle& b : bundles)
    if (!b.frame_ids.empty()) n_frames = std::max(n_frames, b.frame_ids.back());

  PipelineResult r;
  r.plan = plan_segments(n_frames, cfg.segment_length, cfg.overlap);
  const int K = r.plan.num_segments();
  if (static_cast<int>(bundles.size()) != K)
    throw Error(ErrorCode::InvalidArgument, "plan has " + std::to_string(K) + " segments but " +
                                                std::to_string(bundles.size()) + " bundles were given");
  for (int k = 1; k <= K; ++k) {
    if (bundles[k - 1].segment_id != k)
      throw Error(ErrorCode::InvalidArgument, "missing bundle for segment " + std::to_string(k));
    require_valid(bundles[k - 1], r.plan);
  }
  for (const SegmentBundle& b : loop_bundles) require_valid(b, r.plan);

  // Adjacent edges.
  std::vector<std::function<TaskResult()>> tasks;
  for (int k = 1; k < K; ++k) {
    const SegmentBundle* a = &bundles[k - 1];
    const SegmentBundle* b = &bundles[k];
    if (cfg.pointmap_edges)
      tasks.emplace_back([a, b, k, &cfg] { return TaskResult(pointmap_edge(*a, *b, k, k + 1, EdgeKind::Pointmap, cfg)); });
    if (cfg.pose_edges && cfg.group != Group::SL4)
      tasks.emplace_back([a, b, k, &cfg] { return pose_edge(*a, *b, k, k + 1, EdgeKind::Pose, cfg); });
  }
  if (cfg.pose_edges && cfg.group == Group::SL4) r.warnings.push_back("pose edges are not defined for sl4; skipped");

  // Loop detection and loop edges.
  std::vector<std::vector<std::size_t>> loop_task_ids;
  if (cfg.loop_closure) {
    const DescriptorIndex index = DescriptorIndex::from_bundles(bundles, r.plan);
    r.candidates = find_candidates(index, cfg.sigma_sim, cfg.min_gap);
    r.loops = detect_loops(r.candidates, cfg.k_min);
    std::vector<char> used(loop_bundles.size(), 0);
    int next_node = K + 1;
    for (const Loop& loop : r.loops) {
      LoopRequest req = request_loop_segment(loop, cfg.loop_window, r.plan);
      if (req.warning) r.warnings.push_back(*req.warning);
      r.loop_requests.push_back(req);
      const SegmentBundle* lb = nullptr;
      for (std::size_t m = 0; m < loop_bundles.size(); ++m)
        if (!used[m] && loop_bundles[m].loop_pair == std::make_pair(loop.segment_i, loop.segment_j)) {
          lb = &loop_bundles[m];
          used[m] = 1;
          break;
        }
      if (!lb) {
        r.warnings.push_back("loop " + std::to_string(loop.segment_i) + "-" + std::to_string(loop.segment_j) +
                             " has no loop segment bundle; continuing without its edges");
        continue;
      }
      const int node = next_node++;
      std::vector<std::size_t> ids;
      for (int anchor : {loop.segment_i, loop.segment_j}) {
        const SegmentBundle* a = &bundles[anchor - 1];
        if (cfg.pointmap_edges) {
          ids.push_back(tasks.size());
          tasks.emplace_back([a, anchor, node, lb, &cfg] {
            try {
              return TaskResult(pointmap_edge(*a, *lb, anchor, node, EdgeKind::LoopPointmap, cfg));
            } catch (const Error& e) {
              return TaskResult(SkippedEdge{anchor, node, EdgeKind::LoopPointmap, e.detail()});
            }
          });
        }
        if (cfg.pose_edges && cfg.group != Group::SL4) {
          ids.push_back(tasks.size());
          tasks.emplace_back([a, anchor, node, lb, &cfg] { return pose_edge(*a, *lb, anchor, node, EdgeKind::LoopPose, cfg); });
        }
      }
      loop_task_ids.push_back(std::move(ids));
    }
    for (std::size_t m = 0; m < loop_bundles.size(); ++m)
      if (!used[m])
        r.warnings.push_back("loop segment bundle " + std::to_string(loop_bundles[m].segment_id) +
                             " matches no detected loop; ignored");
  } else if (!loop_bundles.empty()) {
    r.warnings.push_back("loop closure disabled; loop segment bundles ignored");
  }

  std::vector<TaskResult> results = run_tasks(tasks, cfg.threads);

  // A loop node needs an edge to both anchors, otherwise all its edges go.
  std::vector<char> drop(results.size(), 0);
  for (const auto& ids : loop_task_ids) {
    std::set<int> anchored;
    for (std::size_t id : ids)
      if (const auto* rec = std::get_if<EdgeRecord>(&results[id])) anchored.insert(rec->edge.from);
    if (anchored.size() == 2) continue;
    for (std::size_t id : ids) drop[id] = 1;
    const int node = std::visit(
        [](const auto& x) {
          if constexpr (std::is_same_v<std::decay_t<decltype(x)>, EdgeRecord>)
            return x.edge.to;
          else
            return x.to;
        },
        results[ids.front()]);
    r.warnings.push_back("loop node " + std::to_string(node) + " could not be tied to both anchors; dropped");
  }

  std::vector<Edge> adjacent, loop_edges;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (auto* sk = std::get_if<SkippedEdge>(&results[i])) {
      r.skipped.push_back(*sk);
      continue;
    }
    if (drop[i]) continue;
    EdgeRecord& rec = std::get<EdgeRecord>(results[i]);
    (is_loop(rec.edge.kind) ? loop_edges : adjacent).push_back(rec.edge);
    r.edges.push_back(std::move(rec));
  }
  // Keep records in graph edge order: adjacent first, then loop.
  std::stable_partition(r.edges.begin(), r.edges.end(), [](const EdgeRecord& e) { return !is_loop(e.edge.kind); });

  PoseGraph g = build_graph(cfg.group, K, std::move(adjacent), std::move(loop_edges));
  r.initial = initialize_nodes(std::move(g));
  LmConfig lc;
  lc.max_iters = cfg.lm_max_iters;
  lc.tol = cfg.lm_tol;
  lc.rel = cfg.lm_rel;
  lc.loop_huber_delta = cfg.loop_huber_delta;
  std::tie(r.optimized, r.lm) = optimize_lm(r.initial, lc);
  if (r.lm.used_fallback) r.warnings.push_back("edge residual used the first-order fallback during optimization");
  for (std::size_t i = 0; i < r.edges.size() && i < r.lm.edge_residual_norms.size(); ++i)
    r.edges[i].final_residual = r.lm.edge_residual_norms[i];

  r.world_scale = cfg.scale_anchor == ScaleAnchor::Mean ? mean_scale_anchor(r.optimized, K) : 1.0;
  StitchConfig sc;
  sc.tau_c = cfg.tau_c;
  sc.max_map_points = cfg.max_map_points;
  sc.world_scale = r.world_scale;
  r.map = stitch(bundles, r.optimized, r.plan, sc);
  if (r.map.poses_approximated)
    r.warnings.push_back("camera poses were projected to the nearest rotation for " +
                         std::string(to_string(cfg.group)));
  return r;
}

Trajectory to_trajectory(const GlobalMap& map) {
  Trajectory t;
  for (const TrajectoryEntry& e : map.trajectory) t.push_back(e.timestamp, e.pose);
  return t;
}

json loop_requests_json(const std::vector<LoopRequest>& requests) {
  json out = json::array();
  for (const LoopRequest& q : requests) {
    json j = {{"segment_i", q.segment_i}, {"segment_j", q.segment_j}, {"frame_a", q.frame_a},
              {"frame_b", q.frame_b},     {"frame_ids", q.frame_ids}};
    if (q.warning) j["warning"] = *q.warning;
    out.push_back(j);
  }
  return out;
}

namespace {

json transform_json(const Transformd& t) {
  json rows = json::array();
  const Matrix4d m = t.matrix();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

}  // namespace

json make_report(const RunConfig& cfg, const PipelineResult& r) {
  json edges = json::array();
  for (const EdgeRecord& e : r.edges)
    edges.push_back({{"from", e.edge.from},
                     {"to", e.edge.to},
                     {"kind", std::string(to_string(e.edge.kind))},
                     {"weight", e.edge.weight},
                     {"robust", e.edge.robust},
                     {"correspondences", e.correspondences},
                     {"candidate_pixels", e.candidate_pixels},
                     {"skipped_pixels", e.skipped_pixels},
                     {"irls_iterations", e.irls.iterations},
                     {"irls_converged", e.irls.converged},
                     {"irls_rms", e.irls.rms},
                     {"inlier_fraction", e.irls.inlier_fraction},
                     {"condition_ratio", e.irls.condition_ratio},
                     {"final_residual", e.final_residual},
                     {"measurement", transform_json(e.edge.measurement)}});
  json skipped = json::array();
  for (const SkippedEdge& s : r.skipped)
    skipped.push_back({{"from", s.from}, {"to", s.to}, {"kind", std::string(to_string(s.kind))}, {"reason", s.reason}});
  json loops = json::array();
  for (const Loop& l : r.loops)
    loops.push_back({{"segment_i", l.segment_i},
                     {"segment_j", l.segment_j},
                     {"candidates", l.candidates.size()},
                     {"total_similarity", l.total_similarity},
                     {"strongest", {l.candidates.front().frame_a, l.candidates.front().frame_b}}});
  json nodes = json::array();
  for (const auto& [id, t] : r.optimized.nodes) nodes.push_back({{"id", id}, {"transform", transform_json(t)}});
  json plan = json::array();
  for (const FrameRange& fr : r.plan.ranges) plan.push_back({fr.first, fr.last});

  return {{"config", to_json(cfg)},
          {"n_frames", r.plan.n_frames},
          {"segments", plan},
          {"edges", edges},
          {"skipped_edges", skipped},
          {"loop_candidates", r.candidates.size()},
          {"loops", loops},
          {"loop_requests", loop_requests_json(r.loop_requests)},
          {"lm",
           {{"initial_cost", r.lm.initial_cost},
            {"final_cost", r.lm.final_cost},
            {"iterations", r.lm.iterations},
            {"converged", r.lm.converged},
            {"failed", r.lm.failed},
            {"used_fallback", r.lm.used_fallback},
            {"stop_reason", r.lm.stop_reason}}},
          {"world_scale", r.world_scale},
          {"nodes", nodes},
          {"map", {{"points", r.map.points.size()}, {"poses_approximated", r.map.poses_approximated}}},
          {"warnings", r.warnings}};
}

PipelineResult run_from_disk(const RunConfig& cfg) {
  if (cfg.input_dir.empty()) throw Error(ErrorCode::InvalidArgument, "input_dir is required");
  std::vector<SegmentBundle> bundles, loop_bundles;
  for (const fs::path& dir : list_bundle_dirs(cfg.input_dir)) {
    SegmentBundle b = read_bundle(dir);
    (b.loop_pair ? loop_bundles : bundles).push_back(std::move(b));
  }
  if (!cfg.loops_dir.empty() && fs::exists(cfg.loops_dir))
    for (const fs::path& dir : list_bundle_dirs(cfg.loops_dir)) {
      SegmentBundle b = read_bundle(dir);
      if (!b.loop_pair) throw Error(ErrorCode::Parse, dir.string() + ": loop bundle manifest lacks loop_pair");
      loop_bundles.push_back(std::move(b));
    }

  PipelineResult r = run_pipeline(cfg, std::move(bundles), std::move(loop_bundles));

  const fs::path out = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::Io, out.string() + ": cannot create directory: " + ec.message());
  write_tum(to_trajectory(r.map), out / "trajectory.tum");
  write_ply(r.map, out / "map.ply", cfg.segment_colors ? PlyColorMode::Segment : PlyColorMode::Rgb);
  write_text_file(out / "loop_requests.json", loop_requests_json(r.loop_requests).dump(2) + "\n");
  write_text_file(out / "report.json", make_report(cfg, r).dump(2) + "\n");
  return r;
}

double endpoint_error(const Trajectory& est, const Trajectory& gt) {
  const auto pairs = associate(est, gt);
  const auto [e0, g0] = pairs.front();
  const auto [e1, g1] = pairs.back();
  const Posed& pe = est.poses[e0];
  const Posed& pg = gt.poses[g0];
  // Rigid map taking the first estimated camera onto the first true camera.
  const Matrix3d R = pg.rotation * pe.rotation.transpose();
  const Vector3d end = R * (est.poses[e1].translation - pe.translation) + pg.translation;
  return (end - gt.poses[g1].translation).norm();
}

}  // namespace seamstitch
