// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each check carries its own runtime bound.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "seamstitch/align.hpp"
#include "seamstitch/graph.hpp"
#include "seamstitch/io.hpp"
#include "seamstitch/loop.hpp"
#include "seamstitch/overlap.hpp"
#include "seamstitch/pipeline.hpp"
#include "seamstitch/synth.hpp"
#include "support.hpp"

using namespace seamstitch;
using namespace seamstitch::synth;
namespace ts = testing_support;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double max_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome reweight_suite() {
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> c(0.0, 20.0), d(0.001, 30.0);
  int exact = 0, props = 0;
  for (int i = 0; i < 1000; ++i) {
    const double ca = c(rng), cb = c(rng), da = d(rng), db = d(rng);
    const auto r = reweight_confidence(ca, cb, da, db);
    const double w = ca * cb / (1.0 + std::abs(da - db));
    exact += r && r->weight == w && r->conf_a == w * ca && r->conf_b == w * cb;
    const auto s = reweight_confidence(cb, ca, db, da);
    const auto farther = reweight_confidence(ca, cb, da, da + std::abs(da - db) + 0.25);
    const auto stronger = reweight_confidence(ca + 0.5, cb, da, db);
    props += s->weight == r->weight && farther->weight <= r->weight && stronger->weight >= r->weight;
  }
  return {exact == 1000 && props == 1000,
          std::to_string(exact) + "/1000 exact, " + std::to_string(props) + "/1000 property checks"};
}

Eigen::Matrix3Xd random_cloud(std::mt19937_64& rng, int n) {
  Eigen::Matrix3Xd x(3, n);
  for (int i = 0; i < n; ++i) x.col(i) = ts::random_vec(rng) + Vector3d(0, 0, 4);
  return x;
}

Eigen::Matrix3Xd mapped(const Transformd& T, const Eigen::Matrix3Xd& xb) {
  Eigen::Matrix3Xd xa(3, xb.cols());
  for (Eigen::Index i = 0; i < xb.cols(); ++i) xa.col(i) = apply(T, Vector3d(xb.col(i)));
  return xa;
}

Outcome estimator_recovery() {
  std::mt19937_64 rng(1001);
  std::string detail;
  bool ok = true;
  for (Group g : {Group::Sim3, Group::Affine3, Group::SL4}) {
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
      const Transformd T = ts::random_transform(g, rng);
      const Eigen::Matrix3Xd xb = random_cloud(rng, 60);
      const Eigen::Matrix3Xd xa = mapped(T, xb);
      const Eigen::VectorXd w = Eigen::VectorXd::Ones(60);
      Transformd est;
      switch (g) {
        case Group::Sim3: est = estimate_sim3_weighted(xa, xb, w); break;
        case Group::Affine3: est = estimate_affine3_weighted(xa, xb, w); break;
        case Group::SL4: est = estimate_sl4_weighted(xa, xb, w).transform; break;
      }
      worst = std::max(worst, (est.matrix() - T.matrix()).norm() / T.matrix().norm());
    }
    ok = ok && worst < 1e-6;
    detail += (detail.empty() ? "" : ", ") + std::string(to_string(g)) + " max rel err " + fmt("%.2e", worst);
  }
  return {ok, detail};
}

Outcome irls_robustness() {
  std::vector<double> rot, scale, trans, at_center;
  for (int seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(2000 + seed);
    const Transformd T = ts::random_transform(Group::Sim3, rng);
    const int n = 1000;
    Eigen::Matrix3Xd xb(3, n);
    std::uniform_real_distribution<double> room(-2.0, 2.0);
    for (int i = 0; i < n; ++i) xb.col(i) = Vector3d(room(rng), room(rng), 3 + room(rng));
    Eigen::Matrix3Xd xa = mapped(T, xb);
    // 30% of the targets replaced by uniform draws from a 10 m box around the cloud.
    const Vector3d center = xa.rowwise().mean();
    std::uniform_real_distribution<double> box(-5.0, 5.0);
    std::normal_distribution<double> noise(0, 0.01);
    for (int i = 0; i < n; ++i) {
      if (i < 0.3 * n)
        xa.col(i) = center + Vector3d(box(rng), box(rng), box(rng));
      else
        xa.col(i) += Vector3d(noise(rng), noise(rng), noise(rng));
    }
    CorrespondenceSet cs;
    cs.points_a = xa;
    cs.points_b = xb;
    cs.weights = Eigen::VectorXd::Ones(n);
    const AlignResult r = irls_align(cs, {});
    rot.push_back(rotation_angle<double>(r.transform.rotation() * T.rotation().transpose()) * 180 / M_PI);
    scale.push_back(std::abs(r.transform.scale() / T.scale() - 1) * 100);
    trans.push_back((r.transform.translation() - T.translation()).norm());
    at_center.push_back((apply(r.transform, Vector3d(0, 0, 3)) - apply(T, Vector3d(0, 0, 3))).norm());
  }
  const double mr = median(rot), ms = median(scale), mt = median(trans);
  return {mr < 0.5 && ms < 1.0 && mt < 0.02, "25 seeds, median rot " + fmt("%.4f deg", mr) + ", scale " +
                                                 fmt("%.4f%%", ms) + ", trans " + fmt("%.4f m", mt) +
                                                 " (at the cloud center " + fmt("%.4f m", median(at_center)) + ")"};
}

Outcome loop_oracle() {
  std::mt19937_64 rng(1003);
  std::normal_distribution<double> g(0, 1);
  int equal = 0;
  std::size_t total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 150, dim = 12;
    Eigen::MatrixXd centers(6, dim), v(n, dim);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = g(rng);
    std::vector<DescriptorEntry> e(n);
    std::uniform_int_distribution<int> pick(0, 5), seg(1, 10);
    for (int i = 0; i < n; ++i) {
      v.row(i) = centers.row(pick(rng));
      for (int d = 0; d < dim; ++d) v(i, d) += 0.15 * g(rng);
      v.row(i).normalize();
      e[i] = {i + 1, seg(rng)};
    }
    std::set<std::pair<int, int>> brute, fast;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (std::abs(e[i].segment_id - e[j].segment_id) <= 2) continue;
        double dot = 0;
        for (int d = 0; d < dim; ++d) dot += v(i, d) * v(j, d);
        if (dot >= 0.95) brute.insert({i + 1, j + 1});
      }
    for (const LoopCandidate& c : find_candidates(DescriptorIndex(e, v), 0.95, 2)) fast.insert({c.frame_a, c.frame_b});
    equal += brute == fast;
    total += brute.size();
  }
  const SyntheticWorld w = generate_scene(SceneKind::CorridorLoop, 600, 7);
  const RenderedSequence seq = render_sequence(w, 60, 30, NoiseConfig{}, std::nullopt);
  const auto planted = find_candidates(DescriptorIndex::from_bundles(seq.bundles, seq.plan), 0.95, 2);
  return {equal == 50 && planted.size() >= 3, std::to_string(equal) + "/50 instances equal (" + std::to_string(total) +
                                                  " pairs); corridor-loop candidates at 0.95: " +
                                                  std::to_string(planted.size())};
}

// ---------------------------------------------------------------------------
// Drift loop: corridor-loop with 10 segments, per-segment internal drift and
// a clean loop segment.

constexpr int kDriftFrames = 330;

NoiseConfig drift_noise(Group g, std::uint64_t seed) {
  NoiseConfig n;
  n.seed = seed;
  n.gauge_group = g;
  n.drift_rotation = 0.02;
  n.drift_translation = 0.05;
  n.drift_log_scale = 0.02;
  return n;
}

struct DriftCase {
  SyntheticWorld world;
  NoiseConfig noise;
  RenderedSequence seq;
};

DriftCase drift_case(Group g, std::uint64_t seed) {
  DriftCase c;
  c.world = generate_scene(SceneKind::CorridorLoop, kDriftFrames, seed, 32, 24);
  c.noise = drift_noise(g, seed);
  c.seq = render_sequence(c.world, 60, 30, c.noise, LoopSearch{});
  return c;
}

// Last-frame camera center from node states, against ground truth expressed
// in segment 1's frame (the gauge node's frame).
double endpoint_in_gauge(const DriftCase& c, const PoseGraph& graph) {
  const int f = c.world.n_frames();
  const int owner = owner_segment(c.seq.plan, f);
  const SegmentBundle& b = c.seq.bundles.at(owner - 1);
  const Vector3d est = apply(graph.nodes.at(owner), b.frames[b.local_index(f)].pose.translation);
  const Vector3d truth = apply(world_to_segment(c.world, 1, 1, c.noise), c.world.trajectory[f - 1].translation);
  return (est - truth).norm();
}

RunConfig drift_config(Group g) {
  RunConfig cfg;
  cfg.group = g;
  cfg.threads = 1;
  return cfg;
}

Outcome lm_criterion() {
  // Consistent graphs: exact measurements along a chain plus a loop edge.
  std::mt19937_64 rng(1004);
  bool consistent_ok = true;
  double worst_cost = 0;
  for (Group g : {Group::Sim3, Group::Affine3, Group::SL4})
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 8;
      std::map<int, Transformd> s;
      s.emplace(1, Transformd::identity(g));
      for (int k = 2; k <= n; ++k) s.emplace(k, ts::random_transform(g, rng));
      std::vector<Edge> adj, loops;
      for (int k = 1; k < n; ++k) adj.push_back({k, k + 1, compose(inverse(s.at(k)), s.at(k + 1)), EdgeKind::Pointmap, 1.0, false});
      loops.push_back({1, n, compose(inverse(s.at(1)), s.at(n)), EdgeKind::LoopPointmap, 1.0, true});
      const auto [opt, rep] = optimize_lm(initialize_nodes(build_graph(g, n, adj, loops)), {});
      worst_cost = std::max(worst_cost, rep.final_cost);
      consistent_ok = consistent_ok && rep.converged && rep.final_cost < 1e-20;
    }

  // SIM3 gates the criterion; the other groups are measured and reported.
  std::string detail = "consistent max cost " + fmt("%.1e", worst_cost) + "; drift loop median opt/chained";
  bool drift_ok = true;
  auto measure = [&](Group g, bool pose_edges) {
    std::vector<double> ratios;
    int passing = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const DriftCase c = drift_case(g, seed);
      RunConfig cfg = drift_config(g);
      cfg.pose_edges = pose_edges;
      const PipelineResult r = run_pipeline(cfg, c.seq.bundles, c.seq.loop_bundles);
      const double chained = endpoint_in_gauge(c, r.initial);
      const double optimized = endpoint_in_gauge(c, r.optimized);
      ratios.push_back(optimized / chained);
      passing += optimized <= 0.2 * chained;
    }
    const double med = median(ratios);
    detail += ", " + std::string(to_string(g)) + (pose_edges ? "" : " without pose edges") + " " + fmt("%.3f", med) +
              " (" + std::to_string(passing) + "/10 seeds <= 0.2" + (g == Group::Sim3 ? ", mandatory" : "") + ")";
    return med <= 0.2;
  };
  drift_ok = measure(Group::Sim3, true);
  measure(Group::Affine3, true);
  measure(Group::Affine3, false);
  measure(Group::SL4, true);
  return {consistent_ok && drift_ok, detail};
}

Outcome zero_noise_pipeline() {
  const SyntheticWorld w = generate_scene(SceneKind::CorridorLoop, 600, 7, 64, 48);
  NoiseConfig n = NoiseConfig::zero();
  n.seed = 7;
  const RenderedSequence seq = render_sequence(w, 60, 30, n, LoopSearch{});
  const PipelineResult r = run_pipeline(RunConfig{}, seq.bundles, seq.loop_bundles);
  const Trajectory est = to_trajectory(r.map), gt = ground_truth(w);
  const double ape = ape_rmse(est, gt, AlignMode::Rigid);
  const double ang = aae(est, gt, AlignMode::Rigid);
  const double se = scale_error(est, gt);
  return {ape < 1e-6 && ang < 1e-4 && se < 1e-4 && est.size() == 600,
          "APE " + fmt("%.2e m", ape) + ", AAE " + fmt("%.2e deg", ang) + ", scale " + fmt("%.2e%%", se) + ", " +
              std::to_string(r.loops.size()) + " loop(s)"};
}

Outcome noisy_scale() {
  double worst = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const SyntheticWorld w = generate_scene(SceneKind::CorridorLoop, 600, seed, 64, 48);
    NoiseConfig n;  // sigma 0.01 m, 5% outliers, gauge scale in [0.9, 1.1]
    n.seed = seed;
    const RenderedSequence seq = render_sequence(w, 60, 30, n, LoopSearch{});
    const PipelineResult r = run_pipeline(RunConfig{}, seq.bundles, seq.loop_bundles);
    const double se = scale_error(to_trajectory(r.map), ground_truth(w));
    worst = std::max(worst, se);
    detail += fmt(" %.3f%%", se);
  }
  return {worst < 2.0, "scale error per seed:" + detail};
}

Outcome ablations() {
  int loop_ok = 0, pose_ok = 0, pm_ok = 0;
  const int seeds = 10;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const DriftCase c = drift_case(Group::Sim3, seed);
    const RunConfig full_cfg = drift_config(Group::Sim3);
    const PipelineResult full = run_pipeline(full_cfg, c.seq.bundles, c.seq.loop_bundles);

    RunConfig cfg = full_cfg;
    cfg.loop_closure = false;
    const PipelineResult no_loop = run_pipeline(cfg, c.seq.bundles, c.seq.loop_bundles);
    loop_ok += endpoint_in_gauge(c, no_loop.optimized) > endpoint_in_gauge(c, full.optimized);

    // Final cost: the full objective evaluated at each ablated solution.
    LmConfig lm;
    lm.loop_huber_delta = full_cfg.loop_huber_delta;
    auto cost_at = [&](const PipelineResult& r) {
      PoseGraph g = full.optimized;
      for (auto& [id, t] : g.nodes) t = r.optimized.nodes.at(id);
      return graph_cost(g, lm);
    };
    const double base = graph_cost(full.optimized, lm);
    cfg = full_cfg;
    cfg.pose_edges = false;
    pose_ok += cost_at(run_pipeline(cfg, c.seq.bundles, c.seq.loop_bundles)) > base;
    cfg = full_cfg;
    cfg.pointmap_edges = false;
    pm_ok += cost_at(run_pipeline(cfg, c.seq.bundles, c.seq.loop_bundles)) > base;
  }
  return {loop_ok == seeds && pose_ok == seeds && pm_ok == seeds,
          "no-loop-closure worse endpoint " + std::to_string(loop_ok) + "/10, no-pose-edges higher cost " +
              std::to_string(pose_ok) + "/10, no-pointmap-edges higher cost " + std::to_string(pm_ok) + "/10"};
}

Outcome metrics_and_formats() {
  std::mt19937_64 rng(1008);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory gt = ts::random_trajectory(rng, 30);
    const Transformd T = ts::random_transform(Group::Sim3, rng);
    Trajectory est = gt;
    for (Posed& p : est.poses) {
      p.translation = apply(T, p.translation) + ts::random_vec(rng, 0.05);
      p.rotation = T.rotation() * p.rotation * so3_exp<double>(ts::random_vec(rng, 0.02));
    }
    std::vector<Vector3d> e, g;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      e.push_back(est.poses[i].translation);
      g.push_back(gt.poses[i].translation);
    }
    for (bool with_scale : {false, true}) {
      const auto b = ts::brute_align(e, g, with_scale);
      double sum = 0, ang = 0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        sum += (b.s * b.R * e[i] + b.t - g[i]).squaredNorm();
        ang += ts::angle_of(b.R * est.poses[i].rotation * gt.poses[i].rotation.transpose());
      }
      const AlignMode mode = with_scale ? AlignMode::Similarity : AlignMode::Rigid;
      worst = std::max(worst, std::abs(ape_rmse(est, gt, mode) - std::sqrt(sum / e.size())));
      worst = std::max(worst, std::abs(aae(est, gt, mode) - ang / e.size() * 180 / M_PI));
      if (with_scale) worst = std::max(worst, std::abs(scale_error(est, gt) - std::abs(b.s - 1) * 100));
    }
  }

  const auto dir = ts::scratch_dir("acceptance_formats");
  const Trajectory t = ts::random_trajectory(rng, 100);
  write_tum(t, dir / "t.tum");
  const Trajectory r = read_tum(dir / "t.tum");
  double tum_err = r.size() == t.size() ? 0 : 1;
  for (std::size_t i = 0; i < std::min(r.size(), t.size()); ++i)
    tum_err = std::max({tum_err, (r.poses[i].translation - t.poses[i].translation).norm(),
                        (r.poses[i].rotation - t.poses[i].rotation).norm(), std::abs(r.timestamps[i] - t.timestamps[i])});

  GlobalMap m;
  for (int i = 0; i < 50; ++i) {
    m.points.push_back(ts::random_vec(rng).cast<float>());
    m.colors.push_back({static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(2 * i), static_cast<std::uint8_t>(3 * i)});
    m.segment_ids.push_back(i % 5 + 1);
  }
  write_ply(m, dir / "m.ply");
  const auto v = ts::read_ply(dir / "m.ply");
  bool ply_ok = v.size() == m.points.size();
  for (std::size_t i = 0; ply_ok && i < v.size(); ++i)
    ply_ok = v[i].x == m.points[i].x() && v[i].y == m.points[i].y() && v[i].z == m.points[i].z() &&
             v[i].r == m.colors[i][0] && v[i].g == m.colors[i][1] && v[i].b == m.colors[i][2];
  write_ply(GlobalMap{}, dir / "empty.ply");
  ply_ok = ply_ok && ts::read_ply(dir / "empty.ply").empty();

  return {worst < 1e-9 && tum_err < 1e-9 && ply_ok, "max metric deviation " + fmt("%.2e", worst) +
                                                        ", TUM round trip " + fmt("%.2e", tum_err) +
                                                        ", PLY round trip " + (ply_ok ? "ok" : "mismatch")};
}

Outcome determinism() {
  const auto dir = ts::scratch_dir("acceptance_determinism");
  bool same = true;
  for (int pass = 0; pass < 2; ++pass) {
    // Regenerate from the seed each time so the synthetic input is covered too.
    const SyntheticWorld w = generate_scene(SceneKind::CorridorLoop, kDriftFrames, 21, 32, 24);
    const RenderedSequence seq = render_sequence(w, 60, 30, drift_noise(Group::Sim3, 21), LoopSearch{});
    const auto in = dir / ("in" + std::to_string(pass));
    for (const SegmentBundle& b : seq.bundles) write_bundle(b, in / "bundles" / ("seg_" + std::to_string(1000 + b.segment_id)));
    for (const SegmentBundle& b : seq.loop_bundles) write_bundle(b, in / "loops" / ("seg_" + std::to_string(1000 + b.segment_id)));
    RunConfig cfg;
    cfg.seed = 21;
    cfg.input_dir = (in / "bundles").string();
    cfg.loops_dir = (in / "loops").string();
    cfg.output_dir = (dir / ("out" + std::to_string(pass))).string();
    run_from_disk(cfg);
  }
  const std::string a = read_text_file(dir / "out0" / "trajectory.tum");
  const std::string b = read_text_file(dir / "out1" / "trajectory.tum");
  same = !a.empty() && a == b;
  return {same, std::to_string(a.size()) + " bytes, " + (same ? "identical" : "different")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"confidence reweighting unit suite", 1, reweight_suite},
      {"group estimator recovery (200 per group)", 10, estimator_recovery},
      {"SIM3 IRLS robustness (30% outliers, 0.01 m noise)", 30, irls_robustness},
      {"loop detection oracle equivalence", 60, loop_oracle},
      {"pose-graph LM (consistent graphs, drift loop)", 60, lm_criterion},
      {"zero-noise end-to-end pipeline", 120, zero_noise_pipeline},
      {"noisy end-to-end scale error", 120, noisy_scale},
      {"ablation directions", 120, ablations},
      {"metrics oracle and format round trips", 60, metrics_and_formats},
      {"determinism of trajectory files", 60, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.max_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                c.max_seconds, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
