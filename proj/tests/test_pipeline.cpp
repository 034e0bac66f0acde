#include <gtest/gtest.h>

#include "seamstitch/io.hpp"
#include "seamstitch/pipeline.hpp"
#include "seamstitch/synth.hpp"
#include "support.hpp"

using namespace seamstitch;
using namespace seamstitch::synth;

namespace {

struct Fixture {
  SyntheticWorld world;
  RenderedSequence seq;
};

const Fixture& corridor_zero_noise() {
  static const Fixture f = [] {
    Fixture x;
    x.world = generate_scene(SceneKind::CorridorLoop, 330, 11, 32, 24);
    NoiseConfig n = NoiseConfig::zero();
    n.seed = 11;
    x.seq = render_sequence(x.world, 60, 30, n, LoopSearch{});
    return x;
  }();
  return f;
}

int count_kind(const PipelineResult& r, bool loop) {
  int n = 0;
  for (const Edge& e : r.optimized.edges) n += is_loop(e.kind) == loop;
  return n;
}

}  // namespace

TEST(Pipeline, ZeroNoiseRecoversGroundTruth) {
  const Fixture& f = corridor_zero_noise();
  const PipelineResult r = run_pipeline(RunConfig{}, f.seq.bundles, f.seq.loop_bundles);
  const Trajectory est = to_trajectory(r.map);
  const Trajectory gt = ground_truth(f.world);
  ASSERT_EQ(est.size(), gt.size());
  EXPECT_LT(ape_rmse(est, gt, AlignMode::Rigid), 1e-6);
  EXPECT_LT(aae(est, gt, AlignMode::Rigid), 1e-4);
  EXPECT_LT(scale_error(est, gt), 1e-4);
  EXPECT_GT(count_kind(r, true), 0);
  EXPECT_LT(r.lm.final_cost, 1e-12);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Pipeline, NoLoopClosureHasNoLoopEdges) {
  const Fixture& f = corridor_zero_noise();
  RunConfig cfg;
  cfg.loop_closure = false;
  const PipelineResult r = run_pipeline(cfg, f.seq.bundles, f.seq.loop_bundles);
  EXPECT_EQ(count_kind(r, true), 0);
  const auto report = make_report(cfg, r);
  for (const auto& e : report.at("edges")) EXPECT_EQ(e.at("kind").get<std::string>().rfind("LOOP", 0), std::string::npos);
}

TEST(Pipeline, EdgeTogglesSelectEdgeKinds) {
  const Fixture& f = corridor_zero_noise();
  RunConfig cfg;
  cfg.loop_closure = false;
  cfg.pose_edges = false;
  for (const Edge& e : run_pipeline(cfg, f.seq.bundles).optimized.edges) EXPECT_EQ(e.kind, EdgeKind::Pointmap);
  cfg.pose_edges = true;
  cfg.pointmap_edges = false;
  for (const Edge& e : run_pipeline(cfg, f.seq.bundles).optimized.edges) EXPECT_EQ(e.kind, EdgeKind::Pose);
}

TEST(Pipeline, MissingLoopBundlesWarnAndContinue) {
  const Fixture& f = corridor_zero_noise();
  const PipelineResult r = run_pipeline(RunConfig{}, f.seq.bundles);
  EXPECT_FALSE(r.loops.empty());
  EXPECT_FALSE(r.loop_requests.empty());
  EXPECT_EQ(count_kind(r, true), 0);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(make_report(RunConfig{}, r).at("warnings").dump().find("loop"), std::string::npos);
}

TEST(Pipeline, LoopRequestsMatchTheGenerator) {
  const Fixture& f = corridor_zero_noise();
  const PipelineResult r = run_pipeline(RunConfig{}, f.seq.bundles);
  ASSERT_EQ(r.loop_requests.size(), f.seq.requests.size());
  for (std::size_t i = 0; i < r.loop_requests.size(); ++i)
    EXPECT_EQ(r.loop_requests[i].frame_ids, f.seq.requests[i].frame_ids);
  const auto j = loop_requests_json(r.loop_requests);
  ASSERT_TRUE(j.is_array());
  EXPECT_TRUE(j[0].contains("frame_ids"));
}

TEST(Pipeline, Sl4OnPlanarSceneNamesTheSegmentPair) {
  const SyntheticWorld w = generate_scene(SceneKind::PlanarWall, 120, 3, 32, 24);
  const RenderedSequence seq = render_sequence(w, 60, 30, NoiseConfig::zero(), std::nullopt);
  RunConfig cfg;
  cfg.group = Group::SL4;
  try {
    run_pipeline(cfg, seq.bundles);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
    EXPECT_NE(e.detail().find("segments 1-2"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, MissingPlannedSegmentIsAnError) {
  const Fixture& f = corridor_zero_noise();
  std::vector<SegmentBundle> partial = f.seq.bundles;
  partial.erase(partial.begin() + 2);
  EXPECT_THROW(run_pipeline(RunConfig{}, partial), Error);
}

TEST(Pipeline, DeterministicAcrossRunsAndThreadCounts) {
  const SyntheticWorld w = generate_scene(SceneKind::CorridorLoop, 330, 4, 32, 24);
  NoiseConfig n;
  n.seed = 4;
  const RenderedSequence seq = render_sequence(w, 60, 30, n, LoopSearch{});
  const auto dir = testing_support::scratch_dir("pipeline_det");
  RunConfig cfg;
  cfg.threads = 1;
  write_tum(to_trajectory(run_pipeline(cfg, seq.bundles, seq.loop_bundles).map), dir / "a.tum");
  cfg.threads = 3;
  write_tum(to_trajectory(run_pipeline(cfg, seq.bundles, seq.loop_bundles).map), dir / "b.tum");
  EXPECT_EQ(read_text_file(dir / "a.tum"), read_text_file(dir / "b.tum"));
}

TEST(Pipeline, DiskRunWritesAllArtifacts) {
  const Fixture& f = corridor_zero_noise();
  const auto dir = testing_support::scratch_dir("pipeline_disk");
  for (const SegmentBundle& b : f.seq.bundles) write_bundle(b, dir / "bundles" / ("seg_" + std::to_string(1000 + b.segment_id)));
  for (const SegmentBundle& b : f.seq.loop_bundles) write_bundle(b, dir / "loops" / ("seg_" + std::to_string(1000 + b.segment_id)));
  RunConfig cfg;
  cfg.input_dir = (dir / "bundles").string();
  cfg.loops_dir = (dir / "loops").string();
  cfg.output_dir = (dir / "out").string();
  const PipelineResult r = run_from_disk(cfg);
  for (const char* name : {"trajectory.tum", "map.ply", "report.json", "loop_requests.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / name)) << name;
  const Trajectory est = read_tum(dir / "out" / "trajectory.tum");
  // float32 storage bounds the accuracy here.
  EXPECT_LT(ape_rmse(est, ground_truth(f.world), AlignMode::Rigid), 1e-5);
  const auto report = nlohmann::json::parse(read_text_file(dir / "out" / "report.json"));
  EXPECT_TRUE(report.contains("lm"));
  EXPECT_TRUE(report.contains("edges"));
  EXPECT_TRUE(report.contains("loops"));
  EXPECT_EQ(testing_support::read_ply(dir / "out" / "map.ply").size(), r.map.points.size());
}
