#pragma once

#include <gsynth/error.hpp>
#include <gsynth/types.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace gsynth {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

inline constexpr double kOpacityClamp = 1e-6;

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) {
  p = std::clamp(p, kOpacityClamp, 1.0 - kOpacityClamp);
  return std::log(p / (1.0 - p));
}

/// Number of f_rest_* properties for a given degree (three channels, no DC).
constexpr int sh_rest_count(int degree) { return 3 * (sh_basis_count(degree) - 1); }

inline bool read_header_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.rfind("comment", 0) == 0 || line.rfind("obj_info", 0) == 0) {
      continue;
    }
    return true;
  }
  return false;
}

/// Property names of the reference layout, in file order, for degree `degree`.
inline std::vector<std::string> ply_property_names(int degree) {
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < sh_rest_count(degree); ++i) {
    names.push_back("f_rest_" + std::to_string(i));
  }
  names.insert(names.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});
  return names;
}

} // namespace detail

/// Header text written by save_ply for `count` vertices of SH degree `degree`.
inline std::string ply_header(std::size_t count, int degree) {
  std::ostringstream out;
  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "element vertex " << count << "\n";
  for (const auto& name : detail::ply_property_names(degree)) {
    out << "property float " << name << "\n";
  }
  out << "end_header\n";
  return out.str();
}

/// Loads a binary little-endian 3DGS checkpoint. Activations are applied:
/// opacity = logistic(raw), scale = exp(raw), rotation normalised. Labels are 0.
inline GaussianCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string line;
  if (!detail::read_header_line(in, line) || line != "ply") {
    throw FormatError(path.string() + ": not a PLY file");
  }
  if (!detail::read_header_line(in, line) || line != "format binary_little_endian 1.0") {
    throw FormatError(path.string() + ": only binary_little_endian 1.0 is supported, got '" + line + "'");
  }

  std::size_t count = 0;
  bool have_vertex = false;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t num_props = 0;
  while (true) {
    if (!detail::read_header_line(in, line)) {
      throw FormatError(path.string() + ": header ended before end_header");
    }
    if (line == "end_header") {
      break;
    }
    std::istringstream tok(line);
    std::string kind;
    tok >> kind;
    if (kind == "element") {
      std::string name;
      long long n = -1;
      tok >> name >> n;
      if (have_vertex || name != "vertex" || n < 0) {
        throw FormatError(path.string() + ": expected a single 'element vertex <n>', got '" + line + "'");
      }
      have_vertex = true;
      count = static_cast<std::size_t>(n);
    } else if (kind == "property") {
      std::string type;
      std::string name;
      tok >> type >> name;
      if (!have_vertex) {
        throw FormatError(path.string() + ": property before element vertex");
      }
      if (type != "float" && type != "float32") {
        throw FormatError(path.string() + ": property '" + name + "' has type '" + type + "', expected float");
      }
      index[name] = num_props++;
    } else {
      throw FormatError(path.string() + ": unexpected header line '" + line + "'");
    }
  }
  if (!have_vertex) {
    throw FormatError(path.string() + ": missing element vertex");
  }

  auto require = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) {
      throw FormatError(path.string() + ": missing required property '" + name + "'");
    }
    return it->second;
  };

  const std::size_t ix = require("x"), iy = require("y"), iz = require("z");
  const std::size_t idc[3] = {require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
  const std::size_t iop = require("opacity");
  const std::size_t isc[3] = {require("scale_0"), require("scale_1"), require("scale_2")};
  const std::size_t irot[4] = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};

  int rest = 0;
  while (index.count("f_rest_" + std::to_string(rest)) != 0) {
    ++rest;
  }
  int degree = -1;
  for (int d = 0; d <= kMaxShDegree; ++d) {
    if (detail::sh_rest_count(d) == rest) {
      degree = d;
    }
  }
  if (degree < 0) {
    throw FormatError(path.string() + ": " + std::to_string(rest) +
                      " f_rest properties do not match any SH degree (expected 0, 9, 24 or 45)");
  }
  std::vector<std::size_t> irest(static_cast<std::size_t>(rest));
  for (int i = 0; i < rest; ++i) {
    irest[static_cast<std::size_t>(i)] = index.at("f_rest_" + std::to_string(i));
  }

  std::vector<float> row(num_props);
  const std::size_t row_bytes = num_props * sizeof(float);
  const int basis = sh_basis_count(degree);

  GaussianCloud cloud;
  cloud.sh_degree = degree;
  cloud.gaussians.reserve(count);
  for (std::size_t v = 0; v < count; ++v) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    if (static_cast<std::size_t>(in.gcount()) != row_bytes) {
      const std::size_t got = static_cast<std::size_t>(std::max<std::streamsize>(in.gcount(), 0)) / sizeof(float);
      std::string prop = "?";
      for (const auto& [name, i] : index) {
        if (i == got) {
          prop = name;
        }
      }
      throw FormatError(path.string() + ": truncated payload at vertex " + std::to_string(v) + ", property '" +
                        prop + "'");
    }
    Gaussian g;
    g.mean = Vec3(row[ix], row[iy], row[iz]);
    g.sh.assign(static_cast<std::size_t>(3 * basis), 0.0);
    for (int c = 0; c < 3; ++c) {
      g.sh[static_cast<std::size_t>(c)] = row[idc[c]];
    }
    // f_rest is stored channel-major: f_rest_{c*(K-1) + (b-1)}.
    for (int c = 0; c < 3; ++c) {
      for (int b = 1; b < basis; ++b) {
        g.sh_at(b, c) = row[irest[static_cast<std::size_t>(c * (basis - 1) + (b - 1))]];
      }
    }
    g.opacity = detail::logistic(row[iop]);
    g.scale = Vec3(std::exp(double(row[isc[0]])), std::exp(double(row[isc[1]])), std::exp(double(row[isc[2]])));
    const Quat q(row[irot[0]], row[irot[1]], row[irot[2]], row[irot[3]]);
    try {
      g.rotation = normalized_or_throw(q);
    } catch (const InvalidPrimitiveError&) {
      throw FormatError(path.string() + ": vertex " + std::to_string(v) + " has a zero-norm quaternion (rot_0..3)");
    }
    cloud.gaussians.push_back(std::move(g));
  }
  return cloud;
}

/// Writes `cloud` in the reference layout with inverse activations applied.
inline void save_ply(const GaussianCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  const int degree = cloud.sh_degree;
  const int basis = sh_basis_count(degree);
  const std::string header = ply_header(cloud.size(), degree);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  const std::size_t num_props = detail::ply_property_names(degree).size();
  std::vector<float> row(num_props);
  for (const auto& g : cloud.gaussians) {
    if (static_cast<int>(g.sh.size()) != sh_coeff_count(degree)) {
      throw InvalidPrimitiveError("save_ply: SH length does not match cloud degree");
    }
    std::size_t k = 0;
    row[k++] = static_cast<float>(g.mean.x());
    row[k++] = static_cast<float>(g.mean.y());
    row[k++] = static_cast<float>(g.mean.z());
    row[k++] = 0.0f;
    row[k++] = 0.0f;
    row[k++] = 0.0f;
    for (int c = 0; c < 3; ++c) {
      row[k++] = static_cast<float>(g.sh_at(0, c));
    }
    for (int c = 0; c < 3; ++c) {
      for (int b = 1; b < basis; ++b) {
        row[k++] = static_cast<float>(g.sh_at(b, c));
      }
    }
    row[k++] = static_cast<float>(detail::logit(g.opacity));
    for (int a = 0; a < 3; ++a) {
      row[k++] = static_cast<float>(std::log(g.scale[a]));
    }
    row[k++] = static_cast<float>(g.rotation.w());
    row[k++] = static_cast<float>(g.rotation.x());
    row[k++] = static_cast<float>(g.rotation.y());
    row[k++] = static_cast<float>(g.rotation.z());
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

/// Reads a label sidecar (one non-negative integer per line) and checks its length.
inline std::vector<Label> load_labels(const std::filesystem::path& path, std::size_t expected_count) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<Label> labels;
  labels.reserve(expected_count);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      if (line.empty() || line[0] == '-') {
        throw std::invalid_argument("bad label");
      }
      v = std::stoull(line, &pos);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected a non-negative integer label");
    }
    if (pos != line.size() || v > 0xffffffffULL) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected a non-negative integer label");
    }
    labels.push_back(static_cast<Label>(v));
  }
  if (labels.size() != expected_count) {
    throw FormatError(path.string() + ": " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(expected_count) + " gaussians");
  }
  return labels;
}

inline void save_labels(const GaussianCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  for (const auto& g : cloud.gaussians) {
    out << g.label << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

/// Copies sidecar labels onto a loaded cloud.
inline void apply_labels(GaussianCloud& cloud, const std::vector<Label>& labels) {
  if (labels.size() != cloud.size()) {
    throw FormatError("label count does not match gaussian count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cloud.gaussians[i].label = labels[i];
  }
}

} // namespace gsynth
