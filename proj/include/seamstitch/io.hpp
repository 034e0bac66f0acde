#pragma once

#include <filesystem>
#include <string>

#include "seamstitch/graph.hpp"
#include "seamstitch/metrics.hpp"
#include "seamstitch/segmenter.hpp"

namespace seamstitch {

/// Bundle directory: manifest.json plus little-endian float32 blobs per frame.
/// Invalid pixels are stored with conf = 0 and read back as invalid.
void write_bundle(const SegmentBundle& bundle, const std::filesystem::path& dir);
SegmentBundle read_bundle(const std::filesystem::path& dir);

/// Sub-directories of `root` holding a manifest.json, sorted by name.
std::vector<std::filesystem::path> list_bundle_dirs(const std::filesystem::path& root);

/// TUM text format: `timestamp tx ty tz qx qy qz qw`.
void write_tum(const Trajectory& traj, const std::filesystem::path& path);
Trajectory read_tum(const std::filesystem::path& path);

enum class PlyColorMode { Rgb, Segment };

/// Fixed 12-entry palette used by the segment color mode.
const std::array<std::array<std::uint8_t, 3>, 12>& segment_palette();

void write_ply(const GlobalMap& map, const std::filesystem::path& path, PlyColorMode mode = PlyColorMode::Rgb);

/// Whole file into a string; throws Io on failure.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace seamstitch
