#pragma once

#include <gsynth/error.hpp>
#include <gsynth/scene_edit.hpp>
#include <gsynth/trajectory.hpp>
#include <gsynth/types.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gsynth {

enum class PivotMode { centroid, origin, explicit_point };

struct ToolConfig {
  Label id = 1;
  std::filesystem::path ply;
  /// Optional label sidecar for `ply`.
  std::filesystem::path labels;
  /// Run foreground extraction on `ply` (off for already-extracted tools).
  bool extract = true;
  ExtractionParams extraction;
  std::optional<Rgb> label_color;
  PivotMode pivot_mode = PivotMode::centroid;
  Vec3 pivot = Vec3::Zero();
  /// Pose used for every frame when cameras come from the orbit sampler.
  RigidTransform pose;
};

struct OrbitConfig {
  int n = 36;
  double radius = 1.0;
  double elevation = 0.5; // radians
  Vec3 target = Vec3::Zero();
  double azimuth_offset = 0.0; // radians
};

/// Everything one `generate` run needs. Exactly one of `trajectory` and
/// `orbit` is set.
struct JobConfig {
  std::filesystem::path background_ply;
  std::vector<ToolConfig> tools;
  std::optional<std::filesystem::path> trajectory;
  std::optional<OrbitConfig> orbit;
  Intrinsics intrinsics;
  std::filesystem::path output_dir = "out";
  Rgb background{0.0, 0.0, 0.0};
  double threshold = 0.1;
  std::size_t min_area = 16;
  std::uint64_t seed = 0;
  bool merge_components = false;
  ShRotationMode sh_rotation = ShRotationMode::exact;
  /// Per-frame random tool perturbation in orbit mode (drawn from `seed`).
  double jitter_translation = 0.0;
  double jitter_rotation_deg = 0.0;
  unsigned threads = 0;

  void validate() const {
    if (background_ply.empty()) {
      throw ConfigError("background_ply is required");
    }
    if (trajectory.has_value() == orbit.has_value()) {
      throw ConfigError("exactly one of 'trajectory' and 'orbit.*' must be configured");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw ConfigError("threshold must lie in (0, 1)");
    }
    if (intrinsics.width < 1 || intrinsics.height < 1) {
      throw ConfigError("image size must be at least 1x1");
    }
    if (jitter_translation < 0.0 || jitter_rotation_deg < 0.0) {
      throw ConfigError("jitter magnitudes must be non-negative");
    }
    std::set<Label> ids;
    for (const auto& t : tools) {
      if (t.id == kBackgroundLabel || !ids.insert(t.id).second) {
        throw ConfigError("tool ids must be unique and >= 1");
      }
      if (t.ply.empty()) {
        throw ConfigError("tool." + std::to_string(t.id) + ".ply is required");
      }
      t.extraction.validate();
    }
  }

  std::set<Label> tool_ids() const {
    std::set<Label> ids;
    for (const auto& t : tools) {
      ids.insert(t.id);
    }
    return ids;
  }

  const ToolConfig& tool(Label id) const {
    for (const auto& t : tools) {
      if (t.id == id) {
        return t;
      }
    }
    throw ConfigError("unknown tool id " + std::to_string(id));
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& value, std::size_t count) {
  const auto tok = split_ws(value);
  if (tok.size() != count) {
    throw ConfigError(key + ": expected " + std::to_string(count) + " numbers, got '" + value + "'");
  }
  std::vector<double> out;
  for (const auto& t : tok) {
    try {
      out.push_back(parse_double(t, key));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

inline double parse_one(const std::string& key, const std::string& value) { return parse_doubles(key, value, 1)[0]; }

inline long long parse_integer(const std::string& key, const std::string& value) {
  try {
    return parse_int(trim(value), key);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no") {
    return false;
  }
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

inline RigidTransform parse_pose(const std::string& key, const std::string& value) {
  const auto v = parse_doubles(key, value, 7);
  RigidTransform t;
  try {
    t.rotation = normalized_or_throw(Quat(v[0], v[1], v[2], v[3]));
  } catch (const InvalidPrimitiveError& e) {
    throw ConfigError(key + ": " + e.what());
  }
  t.translation = Vec3(v[4], v[5], v[6]);
  return t;
}

inline bool apply_extraction_key(ExtractionParams& p, const std::string& sub, const std::string& key,
                                 const std::string& value) {
  if (sub == "center_mode") {
    if (value == "median") {
      p.center_mode = CenterMode::median;
    } else if (value == "mean") {
      p.center_mode = CenterMode::mean;
    } else {
      throw ConfigError(key + ": expected median or mean");
    }
  } else if (sub == "radius_percentile") {
    p.radius_percentile = parse_one(key, value);
  } else if (sub == "knn_k") {
    p.knn_k = static_cast<int>(parse_integer(key, value));
  } else if (sub == "knn_distance_factor") {
    p.knn_distance_factor = parse_one(key, value);
  } else {
    return false;
  }
  return true;
}

} // namespace detail

/// Flat key-value view of a config file: `key = value`, '#' comments.
using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config_text(std::istream& in, const std::string& source = "<config>") {
  ConfigMap kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = detail::trim(t.substr(eq + 1));
  }
  return kv;
}

/// Builds a JobConfig from key-value pairs. Relative paths resolve against `base_dir`.
inline JobConfig config_from_map(const ConfigMap& kv, const std::filesystem::path& base_dir = {}) {
  JobConfig cfg;
  ExtractionParams shared_extraction;
  std::map<Label, ToolConfig> tools;
  std::map<Label, std::vector<std::pair<std::string, std::string>>> tool_extraction;
  OrbitConfig orbit;
  bool have_orbit = false;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  for (const auto& [key, value] : kv) {
    using namespace detail;
    if (key == "background_ply") {
      cfg.background_ply = resolve(value);
    } else if (key == "trajectory") {
      cfg.trajectory = resolve(value);
    } else if (key == "output_dir") {
      cfg.output_dir = resolve(value);
    } else if (key == "background") {
      const auto v = parse_doubles(key, value, 3);
      cfg.background = {v[0], v[1], v[2]};
    } else if (key == "threshold") {
      cfg.threshold = parse_one(key, value);
    } else if (key == "min_area") {
      const long long v = parse_integer(key, value);
      if (v < 0) {
        throw ConfigError("min_area must be non-negative");
      }
      cfg.min_area = static_cast<std::size_t>(v);
    } else if (key == "seed") {
      const long long v = parse_integer(key, value);
      cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "merge_components") {
      cfg.merge_components = parse_bool(key, value);
    } else if (key == "sh_rotation") {
      if (value == "exact") {
        cfg.sh_rotation = ShRotationMode::exact;
      } else if (value == "dc_only") {
        cfg.sh_rotation = ShRotationMode::dc_only;
      } else {
        throw ConfigError("sh_rotation: expected exact or dc_only");
      }
    } else if (key == "threads") {
      cfg.threads = static_cast<unsigned>(parse_integer(key, value));
    } else if (key == "jitter.translation") {
      cfg.jitter_translation = parse_one(key, value);
    } else if (key == "jitter.rotation_deg") {
      cfg.jitter_rotation_deg = parse_one(key, value);
    } else if (key == "camera.fx") {
      cfg.intrinsics.fx = parse_one(key, value);
    } else if (key == "camera.fy") {
      cfg.intrinsics.fy = parse_one(key, value);
    } else if (key == "camera.cx") {
      cfg.intrinsics.cx = parse_one(key, value);
    } else if (key == "camera.cy") {
      cfg.intrinsics.cy = parse_one(key, value);
    } else if (key == "camera.width") {
      cfg.intrinsics.width = static_cast<int>(parse_integer(key, value));
    } else if (key == "camera.height") {
      cfg.intrinsics.height = static_cast<int>(parse_integer(key, value));
    } else if (key == "camera.near") {
      cfg.intrinsics.near = parse_one(key, value);
    } else if (key.rfind("orbit.", 0) == 0) {
      have_orbit = true;
      const std::string sub = key.substr(6);
      if (sub == "n") {
        orbit.n = static_cast<int>(parse_integer(key, value));
      } else if (sub == "radius") {
        orbit.radius = parse_one(key, value);
      } else if (sub == "elevation_deg") {
        orbit.elevation = parse_one(key, value) * std::numbers::pi / 180.0;
      } else if (sub == "azimuth_offset_deg") {
        orbit.azimuth_offset = parse_one(key, value) * std::numbers::pi / 180.0;
      } else if (sub == "target") {
        const auto v = parse_doubles(key, value, 3);
        orbit.target = Vec3(v[0], v[1], v[2]);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } else if (key.rfind("extraction.", 0) == 0) {
      if (!apply_extraction_key(shared_extraction, key.substr(11), key, value)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    } else if (key.rfind("tool.", 0) == 0) {
      const auto dot = key.find('.', 5);
      if (dot == std::string::npos) {
        throw ConfigError("malformed tool key '" + key + "' (expected tool.<id>.<field>)");
      }
      const long long id = parse_integer(key, key.substr(5, dot - 5));
      if (id < 1) {
        throw ConfigError(key + ": tool id must be >= 1");
      }
      const auto tid = static_cast<Label>(id);
      ToolConfig& t = tools[tid];
      t.id = tid;
      const std::string sub = key.substr(dot + 1);
      if (sub == "ply") {
        t.ply = resolve(value);
      } else if (sub == "labels") {
        t.labels = resolve(value);
      } else if (sub == "extract") {
        t.extract = parse_bool(key, value);
      } else if (sub == "color") {
        const auto v = parse_doubles(key, value, 3);
        t.label_color = Rgb{v[0], v[1], v[2]};
      } else if (sub == "pose") {
        t.pose = parse_pose(key, value);
      } else if (sub == "pivot") {
        if (value == "centroid") {
          t.pivot_mode = PivotMode::centroid;
        } else if (value == "origin") {
          t.pivot_mode = PivotMode::origin;
        } else {
          const auto v = parse_doubles(key, value, 3);
          t.pivot_mode = PivotMode::explicit_point;
          t.pivot = Vec3(v[0], v[1], v[2]);
        }
      } else if (sub.rfind("extraction.", 0) == 0) {
        tool_extraction[tid].emplace_back(sub.substr(11), value);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  for (auto& [id, t] : tools) {
    t.extraction = shared_extraction;
    for (const auto& [sub, value] : tool_extraction[id]) {
      const std::string key = "tool." + std::to_string(id) + ".extraction." + sub;
      if (!detail::apply_extraction_key(t.extraction, sub, key, value)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    }
    cfg.tools.push_back(t);
  }
  if (have_orbit) {
    cfg.orbit = orbit;
  }
  cfg.validate();
  return cfg;
}

inline JobConfig load_config(const std::filesystem::path& path, const ConfigMap& overrides = {}) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  ConfigMap kv = parse_config_text(in, path.string());
  for (const auto& [k, v] : overrides) {
    kv[k] = v;
  }
  return config_from_map(kv, path.parent_path());
}

/// Canonical text form of a config; identical configs give identical text.
inline std::string canonical_config(const JobConfig& c) {
  using detail::fmt17;
  std::ostringstream o;
  auto rgb = [](const Rgb& v) { return fmt17(v.r) + " " + fmt17(v.g) + " " + fmt17(v.b); };
  auto vec = [](const Vec3& v) { return fmt17(v.x()) + " " + fmt17(v.y()) + " " + fmt17(v.z()); };
  auto pose = [&](const RigidTransform& t) {
    return fmt17(t.rotation.w()) + " " + fmt17(t.rotation.x()) + " " + fmt17(t.rotation.y()) + " " +
           fmt17(t.rotation.z()) + " " + vec(t.translation);
  };
  auto extraction = [](const ExtractionParams& p) {
    return std::string(p.center_mode == CenterMode::median ? "median" : "mean") + " " +
           fmt17(p.radius_percentile) + " " + std::to_string(p.knn_k) + " " + fmt17(p.knn_distance_factor);
  };
  o << "background_ply=" << c.background_ply.generic_string() << "\n";
  for (const auto& t : c.tools) {
    o << "tool." << t.id << "=" << t.ply.generic_string() << ";" << t.labels.generic_string() << ";" << t.extract
      << ";" << extraction(t.extraction) << ";" << (t.label_color ? rgb(*t.label_color) : "default") << ";"
      << static_cast<int>(t.pivot_mode) << " " << vec(t.pivot) << ";" << pose(t.pose) << "\n";
  }
  if (c.trajectory) {
    o << "trajectory=" << c.trajectory->generic_string() << "\n";
  }
  if (c.orbit) {
    o << "orbit=" << c.orbit->n << " " << fmt17(c.orbit->radius) << " " << fmt17(c.orbit->elevation) << " "
      << vec(c.orbit->target) << " " << fmt17(c.orbit->azimuth_offset) << "\n";
  }
  const auto& k = c.intrinsics;
  o << "camera=" << fmt17(k.fx) << " " << fmt17(k.fy) << " " << fmt17(k.cx) << " " << fmt17(k.cy) << " " << k.width
    << " " << k.height << " " << fmt17(k.near) << "\n";
  o << "background=" << rgb(c.background) << "\n";
  o << "threshold=" << fmt17(c.threshold) << "\n";
  o << "min_area=" << c.min_area << "\n";
  o << "seed=" << c.seed << "\n";
  o << "merge_components=" << c.merge_components << "\n";
  o << "sh_rotation=" << (c.sh_rotation == ShRotationMode::exact ? "exact" : "dc_only") << "\n";
  o << "jitter=" << fmt17(c.jitter_translation) << " " << fmt17(c.jitter_rotation_deg) << "\n";
  return o.str();
}

} // namespace gsynth
