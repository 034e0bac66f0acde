#include "seamstitch/config.hpp"

#include <cctype>
#include <cstdlib>
#include <functional>
#include <map>

#include "seamstitch/io.hpp"

namespace seamstitch {

using nlohmann::json;

std::string_view to_string(ScaleAnchor a) { return a == ScaleAnchor::First ? "first" : "mean"; }

ScaleAnchor parse_scale_anchor(std::string_view s) {
  if (s == "first") return ScaleAnchor::First;
  if (s == "mean") return ScaleAnchor::Mean;
  throw Error(ErrorCode::InvalidArgument, "scale_anchor must be 'first' or 'mean', got '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, "config: " + m); };
  if (segment_length < 2) fail("segment_length must be >= 2");
  if (overlap < 1 || overlap >= segment_length) fail("overlap must be in [1, segment_length)");
  if (!(sigma_sim > 0 && sigma_sim < 1)) fail("sigma_sim must be in (0, 1)");
  if (k_min < 1) fail("k_min must be >= 1");
  if (min_gap < 0) fail("min_gap must be >= 0");
  if (loop_window < 1) fail("loop_window must be >= 1");
  if (!(huber_delta > 0)) fail("huber_delta must be positive");
  if (irls_max_iters < 1) fail("irls_max_iters must be >= 1");
  if (!(tau_c >= 0)) fail("tau_c must be non-negative");
  if (max_points < 3) fail("max_points must be >= 3");
  if (!(pointmap_weight > 0) || !(pose_weight > 0)) fail("edge weights must be positive");
  if (lm_max_iters < 0) fail("lm_max_iters must be >= 0");
  if (!(loop_huber_delta > 0)) fail("loop_huber_delta must be positive");
  if (threads < 0) fail("threads must be >= 0");
  if (!pointmap_edges && !pose_edges) fail("at least one of pointmap_edges and pose_edges is required");
}

json to_json(const RunConfig& c) {
  return {{"segment_length", c.segment_length},
          {"overlap", c.overlap},
          {"group", std::string(to_string(c.group))},
          {"sigma_sim", c.sigma_sim},
          {"k_min", c.k_min},
          {"min_gap", c.min_gap},
          {"loop_window", c.loop_window},
          {"huber_delta", c.huber_delta},
          {"irls_max_iters", c.irls_max_iters},
          {"tau_c", c.tau_c},
          {"max_points", c.max_points},
          {"pointmap_edges", c.pointmap_edges},
          {"pose_edges", c.pose_edges},
          {"loop_closure", c.loop_closure},
          {"pointmap_weight", c.pointmap_weight},
          {"pose_weight", c.pose_weight},
          {"lm_max_iters", c.lm_max_iters},
          {"lm_tol", c.lm_tol},
          {"lm_rel", c.lm_rel},
          {"loop_huber_delta", c.loop_huber_delta},
          {"scale_anchor", std::string(to_string(c.scale_anchor))},
          {"max_map_points", c.max_map_points},
          {"segment_colors", c.segment_colors},
          {"threads", c.threads},
          {"seed", c.seed},
          {"input_dir", c.input_dir},
          {"loops_dir", c.loops_dir},
          {"output_dir", c.output_dir}};
}

namespace {

using Setter = std::function<void(RunConfig&, const json&)>;

template <class T>
Setter field(T RunConfig::*member) {
  return [member](RunConfig& c, const json& v) { c.*member = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"segment_length", field(&RunConfig::segment_length)},
      {"overlap", field(&RunConfig::overlap)},
      {"group", [](RunConfig& c, const json& v) { c.group = parse_group(v.get<std::string>()); }},
      {"sigma_sim", field(&RunConfig::sigma_sim)},
      {"k_min", field(&RunConfig::k_min)},
      {"min_gap", field(&RunConfig::min_gap)},
      {"loop_window", field(&RunConfig::loop_window)},
      {"huber_delta", field(&RunConfig::huber_delta)},
      {"irls_max_iters", field(&RunConfig::irls_max_iters)},
      {"tau_c", field(&RunConfig::tau_c)},
      {"max_points", field(&RunConfig::max_points)},
      {"pointmap_edges", field(&RunConfig::pointmap_edges)},
      {"pose_edges", field(&RunConfig::pose_edges)},
      {"loop_closure", field(&RunConfig::loop_closure)},
      {"pointmap_weight", field(&RunConfig::pointmap_weight)},
      {"pose_weight", field(&RunConfig::pose_weight)},
      {"lm_max_iters", field(&RunConfig::lm_max_iters)},
      {"lm_tol", field(&RunConfig::lm_tol)},
      {"lm_rel", field(&RunConfig::lm_rel)},
      {"loop_huber_delta", field(&RunConfig::loop_huber_delta)},
      {"scale_anchor",
       [](RunConfig& c, const json& v) { c.scale_anchor = parse_scale_anchor(v.get<std::string>()); }},
      {"max_map_points", field(&RunConfig::max_map_points)},
      {"segment_colors", field(&RunConfig::segment_colors)},
      {"threads", field(&RunConfig::threads)},
      {"seed", field(&RunConfig::seed)},
      {"input_dir", field(&RunConfig::input_dir)},
      {"loops_dir", field(&RunConfig::loops_dir)},
      {"output_dir", field(&RunConfig::output_dir)},
  };
  return table;
}

std::string upper(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

json parse_env_value(const std::string& key, const json& like, const std::string& raw) {
  try {
    if (like.is_boolean()) {
      const std::string v = upper(raw);
      if (v == "1" || v == "TRUE" || v == "ON" || v == "YES") return true;
      if (v == "0" || v == "FALSE" || v == "OFF" || v == "NO") return false;
      throw std::invalid_argument("not a boolean");
    }
    if (like.is_number_unsigned()) return std::stoull(raw);
    if (like.is_number_integer()) return std::stoll(raw);
    if (like.is_number()) return std::stod(raw);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "environment SEAMSTITCH_" + upper(key) + "='" + raw + "' is invalid");
  }
  return raw;
}

}  // namespace

RunConfig from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw Error(ErrorCode::Parse, "unknown config key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, "config key '" + key + "': " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return from_json(j, std::move(base));
}

RunConfig apply_env(RunConfig cfg, const char* (*getenv_fn)(const char*)) {
  const json current = to_json(cfg);
  json patch = json::object();
  for (const auto& [key, value] : current.items()) {
    const std::string name = "SEAMSTITCH_" + upper(key);
    const char* raw = getenv_fn ? getenv_fn(name.c_str()) : std::getenv(name.c_str());
    if (raw) patch[key] = parse_env_value(key, value, raw);
  }
  return from_json(patch, std::move(cfg));
}

}  // namespace seamstitch
