#pragma once

#include <gsynth/error.hpp>
#include <gsynth/types.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gsynth {

struct Intrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double near = 0.01;
};

struct ToolPose {
  Label tool_id = 1;
  RigidTransform pose;
};

/// One frame to synthesise: a camera plus the world pose of each visible tool.
struct FrameSpec {
  std::uint64_t frame_id = 0;
  Camera camera;
  std::vector<ToolPose> tool_poses;
};

/// World-to-camera pose looking from `eye` at `target`; +z forward, +y down.
inline Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& k) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 side = forward.cross(up);
  if (side.norm() < 1e-9) {
    throw ParameterError("look_at: view direction is parallel to the up vector");
  }
  const Vec3 right = side.normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Camera cam;
  cam.fx = k.fx;
  cam.fy = k.fy;
  cam.cx = k.cx;
  cam.cy = k.cy;
  cam.width = k.width;
  cam.height = k.height;
  cam.near = k.near;
  cam.rotation = Quat(r).normalized();
  cam.translation = -(cam.rotation * eye);
  return cam;
}

/// `n` cameras evenly spaced in azimuth on a circle of the given elevation
/// around `target`, all looking at it with world up +z. Azimuth k is
/// azimuth_offset + 2 pi k / n.
inline std::vector<Camera> sample_orbit(int n, double radius, double elevation, const Vec3& target,
                                        const Intrinsics& k, double azimuth_offset = 0.0) {
  if (n < 1) {
    throw ParameterError("sample_orbit: n must be at least 1");
  }
  if (!(radius > 0.0)) {
    throw ParameterError("sample_orbit: radius must be positive");
  }
  if (std::abs(std::cos(elevation)) < 1e-9) {
    throw ParameterError("sample_orbit: degenerate up vector at elevation +-90 degrees");
  }
  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double az = azimuth_offset + 2.0 * std::numbers::pi * i / n;
    const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::cos(az), std::cos(elevation) * std::sin(az),
                                            std::sin(elevation));
    cams.push_back(look_at(eye, target, Vec3::UnitZ(), k));
  }
  return cams;
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) {
    out.push_back(tok);
  }
  return out;
}

inline double parse_double(const std::string& tok, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("invalid number '" + tok + "' for " + what);
  }
  if (pos != tok.size() || !std::isfinite(v)) {
    throw ParseError("invalid number '" + tok + "' for " + what);
  }
  return v;
}

inline long long parse_int(const std::string& tok, const std::string& what) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("invalid integer '" + tok + "' for " + what);
  }
  if (pos != tok.size()) {
    throw ParseError("invalid integer '" + tok + "' for " + what);
  }
  return v;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace detail

/// Parses one trajectory record (see load_trajectory for the layout).
inline FrameSpec parse_frame(const std::string& line, double near = 0.01) {
  std::vector<std::vector<std::string>> blocks;
  std::string::size_type start = 0;
  while (true) {
    const auto bar = line.find('|', start);
    blocks.push_back(detail::split_ws(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
    if (bar == std::string::npos) {
      break;
    }
    start = bar + 1;
  }
  const auto& cam_tok = blocks.front();
  if (cam_tok.size() != 14) {
    throw ParseError("camera block has " + std::to_string(cam_tok.size()) + " fields, expected 14");
  }
  FrameSpec f;
  const long long id = detail::parse_int(cam_tok[0], "frame_id");
  if (id < 0) {
    throw ParseError("frame_id must be non-negative");
  }
  f.frame_id = static_cast<std::uint64_t>(id);
  Camera& c = f.camera;
  c.fx = detail::parse_double(cam_tok[1], "fx");
  c.fy = detail::parse_double(cam_tok[2], "fy");
  c.cx = detail::parse_double(cam_tok[3], "cx");
  c.cy = detail::parse_double(cam_tok[4], "cy");
  c.width = static_cast<int>(detail::parse_int(cam_tok[5], "width"));
  c.height = static_cast<int>(detail::parse_int(cam_tok[6], "height"));
  const Quat q(detail::parse_double(cam_tok[7], "qw"), detail::parse_double(cam_tok[8], "qx"),
               detail::parse_double(cam_tok[9], "qy"), detail::parse_double(cam_tok[10], "qz"));
  try {
    c.rotation = normalized_or_throw(q);
  } catch (const InvalidPrimitiveError& e) {
    throw ParseError(std::string("camera rotation: ") + e.what());
  }
  c.translation = Vec3(detail::parse_double(cam_tok[11], "tx"), detail::parse_double(cam_tok[12], "ty"),
                       detail::parse_double(cam_tok[13], "tz"));
  c.near = near;
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ParseError(e.what());
  }
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    const auto& t = blocks[b];
    if (t.size() != 8) {
      throw ParseError("tool block " + std::to_string(b) + " has " + std::to_string(t.size()) +
                       " fields, expected 8");
    }
    ToolPose tp;
    const long long tid = detail::parse_int(t[0], "tool_id");
    if (tid < 1) {
      throw ParseError("tool_id must be at least 1");
    }
    tp.tool_id = static_cast<Label>(tid);
    const Quat tq(detail::parse_double(t[1], "qw"), detail::parse_double(t[2], "qx"),
                  detail::parse_double(t[3], "qy"), detail::parse_double(t[4], "qz"));
    try {
      tp.pose.rotation = normalized_or_throw(tq);
    } catch (const InvalidPrimitiveError& e) {
      throw ParseError(std::string("tool rotation: ") + e.what());
    }
    tp.pose.translation = Vec3(detail::parse_double(t[5], "tx"), detail::parse_double(t[6], "ty"),
                               detail::parse_double(t[7], "tz"));
    f.tool_poses.push_back(tp);
  }
  return f;
}

/// Reads a trajectory file:
///   frame_id fx fy cx cy width height qw qx qy qz tx ty tz | tool_id qw qx qy qz tx ty tz [| ...]
/// The camera block is world-to-camera; tool blocks are world-frame poses.
/// Blank lines and lines starting with '#' are skipped. When `known_tools` is
/// given, every referenced tool id must be in it.
inline std::vector<FrameSpec> parse_trajectory(std::istream& in, const std::string& source = "<trajectory>",
                                               const std::optional<std::set<Label>>& known_tools = std::nullopt,
                                               double near = 0.01) {
  std::vector<FrameSpec> frames;
  std::set<std::uint64_t> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    FrameSpec f;
    try {
      f = parse_frame(line, near);
    } catch (const ParseError& e) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(f.frame_id).second) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate frame_id " + std::to_string(f.frame_id));
    }
    if (known_tools) {
      for (const auto& tp : f.tool_poses) {
        if (known_tools->count(tp.tool_id) == 0) {
          throw ConfigError(source + ":" + std::to_string(lineno) + ": frame " + std::to_string(f.frame_id) +
                            " references unknown tool_id " + std::to_string(tp.tool_id));
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

inline std::vector<FrameSpec> load_trajectory(const std::filesystem::path& path,
                                              const std::optional<std::set<Label>>& known_tools = std::nullopt,
                                              double near = 0.01) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open trajectory " + path.string());
  }
  return parse_trajectory(in, path.string(), known_tools, near);
}

/// Serialises one frame in the trajectory format with round-trip precision.
inline std::string format_frame(const FrameSpec& f) {
  using detail::fmt17;
  const Camera& c = f.camera;
  std::string s = std::to_string(f.frame_id) + " " + fmt17(c.fx) + " " + fmt17(c.fy) + " " + fmt17(c.cx) + " " +
                  fmt17(c.cy) + " " + std::to_string(c.width) + " " + std::to_string(c.height) + " " +
                  fmt17(c.rotation.w()) + " " + fmt17(c.rotation.x()) + " " + fmt17(c.rotation.y()) + " " +
                  fmt17(c.rotation.z()) + " " + fmt17(c.translation.x()) + " " + fmt17(c.translation.y()) + " " +
                  fmt17(c.translation.z());
  for (const auto& tp : f.tool_poses) {
    const auto& p = tp.pose;
    s += " | " + std::to_string(tp.tool_id) + " " + fmt17(p.rotation.w()) + " " + fmt17(p.rotation.x()) + " " +
         fmt17(p.rotation.y()) + " " + fmt17(p.rotation.z()) + " " + fmt17(p.translation.x()) + " " +
         fmt17(p.translation.y()) + " " + fmt17(p.translation.z());
  }
  return s;
}

inline void save_trajectory(const std::vector<FrameSpec>& frames, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << "# frame_id fx fy cx cy width height qw qx qy qz tx ty tz | tool_id qw qx qy qz tx ty tz\n";
  for (const auto& f : frames) {
    out << format_frame(f) << '\n';
  }
}

} // namespace gsynth
