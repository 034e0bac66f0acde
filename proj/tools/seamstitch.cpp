// seamstitch command line: run | eval | synth

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "seamstitch/io.hpp"
#include "seamstitch/pipeline.hpp"
#include "seamstitch/synth.hpp"

namespace fs = std::filesystem;
using namespace seamstitch;

namespace {

// Flags bound to optionals so only the ones given on the command line
// override the file and environment layers.
struct RunFlags {
  std::string config_path;
  std::optional<std::string> input, loops_from, output, group, scale_anchor;
  std::optional<int> segment_length, overlap, k_min, min_gap, loop_window, max_points, irls_max_iters, lm_max_iters,
      threads;
  std::optional<double> sigma_sim, huber_delta, tau_c, pointmap_weight, pose_weight, loop_huber_delta;
  std::optional<std::size_t> max_map_points;
  std::optional<std::uint64_t> seed;
  bool no_pointmap_edges = false, no_pose_edges = false, no_loop_closure = false, segment_colors = false;
  bool print_config = false;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("-c,--config", f.config_path, "JSON config file");
  app->add_option("-i,--input", f.input, "directory of segment bundle directories");
  app->add_option("--loops-from", f.loops_from, "directory of loop segment bundles");
  app->add_option("-o,--output", f.output, "output directory");
  app->add_option("--segment-length", f.segment_length);
  app->add_option("--overlap", f.overlap);
  app->add_option("--group", f.group, "sim3 | affine3 | sl4");
  app->add_option("--sigma-sim", f.sigma_sim);
  app->add_option("--k-min", f.k_min);
  app->add_option("--min-gap", f.min_gap);
  app->add_option("--loop-window", f.loop_window);
  app->add_option("--huber-delta", f.huber_delta);
  app->add_option("--irls-max-iters", f.irls_max_iters);
  app->add_option("--tau-c", f.tau_c);
  app->add_option("--max-points", f.max_points);
  app->add_option("--pointmap-weight", f.pointmap_weight);
  app->add_option("--pose-weight", f.pose_weight);
  app->add_option("--lm-max-iters", f.lm_max_iters);
  app->add_option("--loop-huber-delta", f.loop_huber_delta);
  app->add_option("--scale-anchor", f.scale_anchor, "first | mean");
  app->add_option("--max-map-points", f.max_map_points);
  app->add_option("--threads", f.threads);
  app->add_option("--seed", f.seed);
  app->add_flag("--no-pointmap-edges", f.no_pointmap_edges);
  app->add_flag("--no-pose-edges", f.no_pose_edges);
  app->add_flag("--no-loop-closure", f.no_loop_closure);
  app->add_flag("--segment-colors", f.segment_colors, "color the PLY by segment id");
  app->add_flag("--print-config", f.print_config, "print the resolved config and exit");
}

template <class T, class U>
void override_with(T& field, const std::optional<U>& v) {
  if (v) field = *v;
}

RunConfig resolve(const RunFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path, cfg);
  cfg = apply_env(cfg);
  override_with(cfg.input_dir, f.input);
  override_with(cfg.loops_dir, f.loops_from);
  override_with(cfg.output_dir, f.output);
  if (f.group) cfg.group = parse_group(*f.group);
  if (f.scale_anchor) cfg.scale_anchor = parse_scale_anchor(*f.scale_anchor);
  override_with(cfg.segment_length, f.segment_length);
  override_with(cfg.overlap, f.overlap);
  override_with(cfg.k_min, f.k_min);
  override_with(cfg.min_gap, f.min_gap);
  override_with(cfg.loop_window, f.loop_window);
  override_with(cfg.max_points, f.max_points);
  override_with(cfg.irls_max_iters, f.irls_max_iters);
  override_with(cfg.lm_max_iters, f.lm_max_iters);
  override_with(cfg.threads, f.threads);
  override_with(cfg.sigma_sim, f.sigma_sim);
  override_with(cfg.huber_delta, f.huber_delta);
  override_with(cfg.tau_c, f.tau_c);
  override_with(cfg.pointmap_weight, f.pointmap_weight);
  override_with(cfg.pose_weight, f.pose_weight);
  override_with(cfg.loop_huber_delta, f.loop_huber_delta);
  override_with(cfg.max_map_points, f.max_map_points);
  override_with(cfg.seed, f.seed);
  if (f.no_pointmap_edges) cfg.pointmap_edges = false;
  if (f.no_pose_edges) cfg.pose_edges = false;
  if (f.no_loop_closure) cfg.loop_closure = false;
  if (f.segment_colors) cfg.segment_colors = true;
  cfg.validate();
  return cfg;
}

int cmd_run(const RunFlags& f) {
  const RunConfig cfg = resolve(f);
  if (f.print_config) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return 0;
  }
  const PipelineResult r = run_from_disk(cfg);
  std::cout << "segments " << r.plan.num_segments() << ", frames " << r.plan.n_frames << ", edges " << r.edges.size()
            << ", loops " << r.loops.size() << "\n"
            << "lm cost " << r.lm.initial_cost << " -> " << r.lm.final_cost << " (" << r.lm.iterations
            << " steps, " << r.lm.stop_reason << ")\n"
            << "map points " << r.map.points.size() << "\n"
            << "wrote " << (fs::path(cfg.output_dir) / "trajectory.tum").string() << "\n";
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

struct EvalFlags {
  std::string est, gt;
  double max_dt = 0.02;
};

int cmd_eval(const EvalFlags& f) {
  const Trajectory est = read_tum(f.est);
  const Trajectory gt = read_tum(f.gt);
  const double ape_none = ape_rmse(est, gt, AlignMode::None, f.max_dt);
  const double ape_rigid = ape_rmse(est, gt, AlignMode::Rigid, f.max_dt);
  const double ape_sim = ape_rmse(est, gt, AlignMode::Similarity, f.max_dt);
  const double aae_sim = aae(est, gt, AlignMode::Similarity, f.max_dt);
  const double scale = scale_error(est, gt, f.max_dt);
  const std::size_t matched = associate(est, gt, f.max_dt).size();

  std::cout << "metric                 value\n"
            << std::fixed << std::setprecision(6) << "APE rmse (none)        " << ape_none << " m\n"
            << "APE rmse (rigid)       " << ape_rigid << " m\n"
            << "APE rmse (similarity)  " << ape_sim << " m\n"
            << "AAE (similarity)       " << aae_sim << " deg\n"
            << "scale error            " << scale << " %\n"
            << "matched poses          " << matched << "\n";
  std::cout << std::defaultfloat << std::setprecision(17) << "ape_none=" << ape_none << "\nape_rigid=" << ape_rigid
            << "\nape_similarity=" << ape_sim << "\naae_deg=" << aae_sim << "\nscale_error_pct=" << scale
            << "\nmatched=" << matched << "\n";
  return 0;
}

struct SynthFlags {
  std::string scene = "corridor-loop";
  int frames = 600;
  std::uint64_t seed = 0;
  std::string out = "synth";
  int width = 64, height = 48;
  int segment_length = 60, overlap = 30;
  std::string group = "sim3";
  bool zero_noise = false;
  std::optional<double> point_sigma, outlier_fraction, descriptor_sigma, gauge_scale_range;
  double drift_rotation = 0, drift_translation = 0, drift_log_scale = 0;
  bool with_loops = false;
  synth::LoopSearch loops;
};

int cmd_synth(const SynthFlags& f) {
  const synth::SyntheticWorld world =
      synth::generate_scene(synth::parse_scene(f.scene), f.frames, f.seed, f.width, f.height);
  synth::NoiseConfig noise = f.zero_noise ? synth::NoiseConfig::zero() : synth::NoiseConfig{};
  override_with(noise.point_sigma, f.point_sigma);
  override_with(noise.outlier_fraction, f.outlier_fraction);
  override_with(noise.descriptor_sigma, f.descriptor_sigma);
  override_with(noise.gauge_scale_range, f.gauge_scale_range);
  noise.drift_rotation = f.drift_rotation;
  noise.drift_translation = f.drift_translation;
  noise.drift_log_scale = f.drift_log_scale;
  noise.gauge_group = parse_group(f.group);
  noise.seed = f.seed;

  const auto seq = synth::render_sequence(world, f.segment_length, f.overlap, noise,
                                          f.with_loops ? std::optional(f.loops) : std::nullopt);
  const fs::path out = f.out;
  const auto seg_dir = [](const fs::path& root, int id) {
    std::ostringstream name;
    name << "seg_" << std::setw(4) << std::setfill('0') << id;
    return root / name.str();
  };
  for (const SegmentBundle& b : seq.bundles) write_bundle(b, seg_dir(out / "bundles", b.segment_id));
  for (const SegmentBundle& b : seq.loop_bundles) write_bundle(b, seg_dir(out / "loops", b.segment_id));
  write_tum(synth::ground_truth(world), out / "groundtruth.tum");
  const nlohmann::json meta = {{"scene", f.scene},
                               {"frames", f.frames},
                               {"seed", f.seed},
                               {"width", f.width},
                               {"height", f.height},
                               {"segment_length", f.segment_length},
                               {"overlap", f.overlap},
                               {"group", f.group},
                               {"segments", seq.bundles.size()},
                               {"loop_segments", seq.loop_bundles.size()},
                               {"loop_requests", loop_requests_json(seq.requests)}};
  write_text_file(out / "world.json", meta.dump(2) + "\n");
  std::cout << "wrote " << seq.bundles.size() << " segment bundles and " << seq.loop_bundles.size()
            << " loop bundles under " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segment stitching backend: align overlapping segment reconstructions into one trajectory and map"};
  app.require_subcommand(1);

  RunFlags run_flags;
  add_run_flags(app.add_subcommand("run", "stitch a bundle directory"), run_flags);

  EvalFlags eval_flags;
  CLI::App* eval = app.add_subcommand("eval", "compare an estimated TUM trajectory with ground truth");
  eval->add_option("estimate", eval_flags.est)->required();
  eval->add_option("groundtruth", eval_flags.gt)->required();
  eval->add_option("--max-dt", eval_flags.max_dt, "timestamp association window (s)");

  SynthFlags sf;
  CLI::App* syn = app.add_subcommand("synth", "generate a synthetic world and its segment bundles");
  syn->add_option("--scene", sf.scene, "corridor-loop | multi-room | straight-line | planar-wall");
  syn->add_option("--frames", sf.frames);
  syn->add_option("--seed", sf.seed);
  syn->add_option("-o,--out", sf.out);
  syn->add_option("--width", sf.width);
  syn->add_option("--height", sf.height);
  syn->add_option("--segment-length", sf.segment_length);
  syn->add_option("--overlap", sf.overlap);
  syn->add_option("--group", sf.group, "gauge group");
  syn->add_flag("--zero-noise", sf.zero_noise);
  syn->add_option("--point-sigma", sf.point_sigma);
  syn->add_option("--outlier-fraction", sf.outlier_fraction);
  syn->add_option("--descriptor-sigma", sf.descriptor_sigma);
  syn->add_option("--gauge-scale-range", sf.gauge_scale_range);
  syn->add_option("--drift-rotation", sf.drift_rotation);
  syn->add_option("--drift-translation", sf.drift_translation);
  syn->add_option("--drift-log-scale", sf.drift_log_scale);
  syn->add_flag("--with-loops", sf.with_loops, "also render loop segments for detected loops");
  syn->add_option("--sigma-sim", sf.loops.sigma_sim);
  syn->add_option("--k-min", sf.loops.k_min);
  syn->add_option("--min-gap", sf.loops.min_gap);
  syn->add_option("--loop-window", sf.loops.window);

  CLI11_PARSE(app, argc, argv);
  try {
    if (app.got_subcommand("run")) return cmd_run(run_flags);
    if (app.got_subcommand("eval")) return cmd_eval(eval_flags);
    if (app.got_subcommand("synth")) return cmd_synth(sf);
  } catch (const Error& e) {
    std::cerr << "seamstitch: error[" << to_string(e.code()) << "]: " << e.detail() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "seamstitch: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
