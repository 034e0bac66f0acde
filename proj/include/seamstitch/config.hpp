#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "seamstitch/core.hpp"

namespace seamstitch {

enum class ScaleAnchor { First, Mean };

struct RunConfig {
  int segment_length = 60;
  int overlap = 30;
  Group group = Group::Sim3;
  double sigma_sim = 0.95;
  int k_min = 3;
  int min_gap = 2;
  int loop_window = 7;
  double huber_delta = 0.1;
  int irls_max_iters = 20;
  double tau_c = 1.5;
  int max_points = 5000;
  bool pointmap_edges = true;
  bool pose_edges = true;
  bool loop_closure = true;
  double pointmap_weight = 1.0;
  double pose_weight = 0.5;
  int lm_max_iters = 100;
  double lm_tol = 1e-10;
  double lm_rel = 1e-14;
  double loop_huber_delta = 0.5;
  ScaleAnchor scale_anchor = ScaleAnchor::Mean;
  std::size_t max_map_points = 2'000'000;
  bool segment_colors = false;
  int threads = 0;  // 0: hardware concurrency
  std::uint64_t seed = 0;
  std::string input_dir;
  std::string loops_dir;
  std::string output_dir = "out";

  /// Throws InvalidArgument naming the first offending field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown keys are rejected; missing keys keep `base` values.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies SEAMSTITCH_<KEY> variables (KEY is the upper-cased JSON key).
/// `getenv` is injectable for tests.
RunConfig apply_env(RunConfig cfg, const char* (*getenv_fn)(const char*) = nullptr);

std::string_view to_string(ScaleAnchor a);
ScaleAnchor parse_scale_anchor(std::string_view s);

}  // namespace seamstitch
