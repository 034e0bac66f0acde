#include "seamstitch/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace seamstitch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

[[noreturn]] void io_error(const fs::path& p, const std::string& what) {
  throw Error(ErrorCode::Io, p.string() + ": " + what);
}

[[noreturn]] void parse_error(const fs::path& p, const std::string& what) {
  throw Error(ErrorCode::Parse, p.string() + ": " + what);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

void write_floats(const fs::path& path, const std::vector<float>& values) {
  std::string buf(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(buf.data() + 4 * i, &le, 4);
  }
  write_text_file(path, buf);
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<float> read_floats(const fs::path& path, std::size_t expected) {
  const std::string buf = read_bytes(path);
  if (buf.size() != expected * 4)
    parse_error(path, "size mismatch: expected " + std::to_string(expected * 4) + " bytes, found " +
                          std::to_string(buf.size()));
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t le;
    std::memcpy(&le, buf.data() + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_le(le));
    if (!std::isfinite(out[i])) parse_error(path, "non-finite value at index " + std::to_string(i));
  }
  return out;
}

template <class T>
T get_field(const json& j, const char* key, const fs::path& manifest) {
  if (!j.contains(key)) parse_error(manifest, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    parse_error(manifest, std::string("bad field '") + key + "': " + e.what());
  }
}

std::string frame_file(const char* prefix, int fid) { return std::string(prefix) + "_" + std::to_string(fid) + ".bin"; }

}  // namespace

std::string read_text_file(const fs::path& path) { return read_bytes(path); }

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_error(path, "cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) io_error(path, "write failed");
}

void write_bundle(const SegmentBundle& b, const fs::path& dir) {
  if (b.frames.size() != b.frame_ids.size())
    throw Error(ErrorCode::InvalidArgument, "bundle frame_ids and frames differ in length");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) io_error(dir, "cannot create directory: " + ec.message());

  const std::size_t n_pix = static_cast<std::size_t>(b.width) * b.height;
  const int D = b.descriptor_dim();
  json files = json::array();
  std::vector<double> timestamps;
  for (std::size_t k = 0; k < b.frames.size(); ++k) {
    const FrameData& f = b.frames[k];
    const int fid = b.frame_ids[k];
    if (static_cast<std::size_t>(f.points.size()) != n_pix || static_cast<std::size_t>(f.confidence.values.size()) != n_pix ||
        static_cast<std::size_t>(f.depth.values.size()) != n_pix)
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(fid) + " grid does not match bundle size");
    if (f.descriptor.size() != D)
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(fid) + " descriptor length differs");

    std::vector<float> pts(n_pix * 3), conf(n_pix), depth(n_pix);
    for (std::size_t i = 0; i < n_pix; ++i) {
      const bool valid = f.points.valid[i] != 0;
      for (int c = 0; c < 3; ++c) pts[3 * i + c] = valid ? static_cast<float>(f.points.points(i, c)) : 0.0f;
      conf[i] = valid ? static_cast<float>(f.confidence.values(i)) : 0.0f;
      depth[i] = valid ? static_cast<float>(f.depth.values(i)) : 0.0f;
    }
    std::vector<float> pose(16);
    const Matrix4d m = f.pose.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose[4 * r + c] = static_cast<float>(m(r, c));
    std::vector<float> desc(static_cast<std::size_t>(D));
    for (std::size_t i = 0; i < desc.size(); ++i) desc[i] = static_cast<float>(f.descriptor(i));

    json entry = {{"frame_id", fid},
                  {"points", frame_file("points", fid)},
                  {"conf", frame_file("conf", fid)},
                  {"depth", frame_file("depth", fid)},
                  {"pose", frame_file("pose", fid)},
                  {"desc", frame_file("desc", fid)}};
    write_floats(dir / frame_file("points", fid), pts);
    write_floats(dir / frame_file("conf", fid), conf);
    write_floats(dir / frame_file("depth", fid), depth);
    write_floats(dir / frame_file("pose", fid), pose);
    write_floats(dir / frame_file("desc", fid), desc);
    if (!f.rgb.empty()) {
      if (f.rgb.size() != 3 * n_pix)
        throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(fid) + " rgb size differs");
      write_text_file(dir / frame_file("rgb", fid), std::string(f.rgb.begin(), f.rgb.end()));
      entry["rgb"] = frame_file("rgb", fid);
    }
    files.push_back(entry);
    timestamps.push_back(f.timestamp);
  }

  json manifest = {{"segment_id", b.segment_id}, {"frame_ids", b.frame_ids}, {"height", b.height},
                   {"width", b.width},           {"descriptor_dim", D},    {"dtype", "float32"},
                   {"endianness", "little"},     {"timestamps", timestamps}, {"files", files}};
  if (b.loop_pair) manifest["loop_pair"] = {b.loop_pair->first, b.loop_pair->second};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

SegmentBundle read_bundle(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) io_error(mpath, "missing manifest");
  json m;
  try {
    m = json::parse(read_bytes(mpath));
  } catch (const json::parse_error& e) {
    parse_error(mpath, e.what());
  }
  if (get_field<std::string>(m, "dtype", mpath) != "float32") parse_error(mpath, "dtype must be float32");
  if (get_field<std::string>(m, "endianness", mpath) != "little") parse_error(mpath, "endianness must be little");

  SegmentBundle b;
  b.segment_id = get_field<int>(m, "segment_id", mpath);
  b.frame_ids = get_field<std::vector<int>>(m, "frame_ids", mpath);
  b.height = get_field<int>(m, "height", mpath);
  b.width = get_field<int>(m, "width", mpath);
  const int D = get_field<int>(m, "descriptor_dim", mpath);
  if (b.width <= 0 || b.height <= 0 || D < 0) parse_error(mpath, "non-positive grid or negative descriptor size");
  if (m.contains("loop_pair")) {
    const auto lp = get_field<std::vector<int>>(m, "loop_pair", mpath);
    if (lp.size() != 2) parse_error(mpath, "loop_pair must have two entries");
    b.loop_pair = std::make_pair(lp[0], lp[1]);
  }
  std::vector<double> timestamps;
  if (m.contains("timestamps")) {
    timestamps = get_field<std::vector<double>>(m, "timestamps", mpath);
    if (timestamps.size() != b.frame_ids.size()) parse_error(mpath, "timestamps and frame_ids differ in length");
  }
  const json files = m.contains("files") ? m.at("files") : json();
  if (!files.is_array() || files.size() != b.frame_ids.size())
    parse_error(mpath, "file table must list one entry per frame id");

  const std::size_t n_pix = static_cast<std::size_t>(b.width) * b.height;
  for (std::size_t k = 0; k < b.frame_ids.size(); ++k) {
    const int fid = b.frame_ids[k];
    if (k > 0 && fid <= b.frame_ids[k - 1]) parse_error(mpath, "frame_ids must be strictly increasing");
    const json& e = files[k];
    if (get_field<int>(e, "frame_id", mpath) != fid)
      parse_error(mpath, "file table entry " + std::to_string(k) + " is out of order");

    FrameData f;
    f.points = Pointmap(b.width, b.height);
    f.confidence = ScalarMap(b.width, b.height, 0.0);
    f.depth = ScalarMap(b.width, b.height, 0.0);
    const auto pts = read_floats(dir / get_field<std::string>(e, "points", mpath), 3 * n_pix);
    const auto conf = read_floats(dir / get_field<std::string>(e, "conf", mpath), n_pix);
    const auto depth = read_floats(dir / get_field<std::string>(e, "depth", mpath), n_pix);
    const fs::path pose_path = dir / get_field<std::string>(e, "pose", mpath);
    const auto pose = read_floats(pose_path, 16);
    const auto desc = read_floats(dir / get_field<std::string>(e, "desc", mpath), static_cast<std::size_t>(D));
    for (std::size_t i = 0; i < n_pix; ++i) {
      if (conf[i] < 0) parse_error(dir / get_field<std::string>(e, "conf", mpath), "negative confidence");
      f.points.valid[i] = conf[i] > 0 ? 1 : 0;
      for (int c = 0; c < 3; ++c) f.points.points(i, c) = pts[3 * i + c];
      f.confidence.values(i) = conf[i];
      f.depth.values(i) = depth[i];
    }
    Matrix4d pm;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pm(r, c) = pose[4 * r + c];
    f.pose.rotation = pm.topLeftCorner<3, 3>();
    f.pose.translation = pm.topRightCorner<3, 1>();
    // float32 storage leaves ~1e-7 orthogonality error; snap near-rotations and
    // leave anything else for validate_bundle to report.
    if ((f.pose.rotation.transpose() * f.pose.rotation - Matrix3d::Identity()).norm() < 1e-4 &&
        f.pose.rotation.determinant() > 0)
      f.pose.rotation = project_to_so3<double>(f.pose.rotation);
    if ((pm.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-6) parse_error(pose_path, "last row is not 0 0 0 1");
    f.descriptor.resize(D);
    for (int i = 0; i < D; ++i) f.descriptor(i) = desc[i];
    if (e.contains("rgb")) {
      const fs::path rgb_path = dir / get_field<std::string>(e, "rgb", mpath);
      const std::string raw = read_bytes(rgb_path);
      if (raw.size() != 3 * n_pix)
        parse_error(rgb_path, "size mismatch: expected " + std::to_string(3 * n_pix) + " bytes, found " +
                                  std::to_string(raw.size()));
      f.rgb.assign(raw.begin(), raw.end());
    }
    f.timestamp = timestamps.empty() ? static_cast<double>(fid) : timestamps[k];
    b.frames.push_back(std::move(f));
  }
  return b;
}

std::vector<fs::path> list_bundle_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) io_error(root, "not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_tum(const Trajectory& traj, const fs::path& path) {
  std::ostringstream out;
  out << "# timestamp tx ty tz qx qy qz qw\n" << std::setprecision(17);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Posed& p = traj.poses[i];
    Eigen::Quaterniond q(p.rotation);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1;
    out << traj.timestamps[i] << ' ' << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z()
        << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  write_text_file(path, out.str());
}

Trajectory read_tum(const fs::path& path) {
  std::istringstream in(read_bytes(path));
  Trajectory t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v)
      if (!(ls >> x)) parse_error(path, "line " + std::to_string(lineno) + ": expected 8 numbers");
    std::string extra;
    if (ls >> extra) parse_error(path, "line " + std::to_string(lineno) + ": trailing content '" + extra + "'");
    for (double x : v)
      if (!std::isfinite(x)) parse_error(path, "line " + std::to_string(lineno) + ": non-finite value");
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-3)
      parse_error(path, "line " + std::to_string(lineno) + ": quaternion norm " + std::to_string(q.norm()) +
                            " is not unit");
    q.normalize();
    Posed p;
    p.rotation = q.toRotationMatrix();
    p.translation = Vector3d(v[1], v[2], v[3]);
    t.push_back(v[0], p);
  }
  return t;
}

const std::array<std::array<std::uint8_t, 3>, 12>& segment_palette() {
  static const std::array<std::array<std::uint8_t, 3>, 12> palette = {{{{31, 119, 180}},
                                                                        {{255, 127, 14}},
                                                                        {{44, 160, 44}},
                                                                        {{214, 39, 40}},
                                                                        {{148, 103, 189}},
                                                                        {{140, 86, 75}},
                                                                        {{227, 119, 194}},
                                                                        {{127, 127, 127}},
                                                                        {{188, 189, 34}},
                                                                        {{23, 190, 207}},
                                                                        {{174, 199, 232}},
                                                                        {{255, 187, 120}}}};
  return palette;
}

void write_ply(const GlobalMap& map, const fs::path& path, PlyColorMode mode) {
  const std::size_t n = map.points.size();
  if (map.colors.size() != n || map.segment_ids.size() != n)
    throw Error(ErrorCode::InvalidArgument, "map points, colors and segment ids differ in length");
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) +
                    "\nproperty float x\nproperty float y\nproperty float z\n"
                    "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  const std::size_t header = out.size();
  out.resize(header + 15 * n);
  char* p = out.data() + header;
  const auto& palette = segment_palette();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(map.points[i](c)));
      std::memcpy(p + 4 * c, &le, 4);
    }
    const auto& rgb = mode == PlyColorMode::Segment
                          ? palette[static_cast<std::size_t>(((map.segment_ids[i] % 12) + 12) % 12)]
                          : map.colors[i];
    std::memcpy(p + 12, rgb.data(), 3);
    p += 15;
  }
  write_text_file(path, out);
}

}  // namespace seamstitch
