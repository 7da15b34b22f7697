#pragma once

#include <gsynth/error.hpp>
#include <gsynth/image.hpp>
#include <gsynth/parallel.hpp>
#include <gsynth/scene_edit.hpp>
#include <gsynth/sh.hpp>
#include <gsynth/types.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace gsynth {

// Fixed pipeline constants.
inline constexpr double kLowPassDilation = 0.3;      // px^2 added to the 2D covariance diagonal
inline constexpr double kFootprintSigmas = 3.0;      // splat support radius in standard deviations
inline constexpr double kMinAlpha = 1.0 / 255.0;     // contributions below this are skipped
inline constexpr double kMinTransmittance = 1e-4;    // blending stops once T falls below this
inline constexpr int kTileSize = 16;

/// Screen-space footprint of one Gaussian.
struct Splat2D {
  Vec2 uv = Vec2::Zero();
  /// Inverse 2D covariance [[a, b], [b, c]], px^-2.
  double conic_a = 0.0;
  double conic_b = 0.0;
  double conic_c = 0.0;
  double depth = 0.0;
  Rgb color;
  double alpha_scale = 0.0;
  std::uint32_t source_index = 0;
  Label label = kBackgroundLabel;
  /// Inclusive pixel bounds of the 3-sigma ellipse, clamped to the image.
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  Mat2 conic() const { return (Mat2() << conic_a, conic_b, conic_b, conic_c).finished(); }
};

/// Result of projecting a Gaussian before clipping against the image.
struct Projection {
  Vec3 camera_point;
  Vec2 uv;
  Mat2 covariance; // includes the low-pass dilation
};

/// Projects the mean and covariance with the local affine (EWA) approximation:
/// cov2d = J W Sigma W^T J^T + 0.3 I. Returns nullopt behind the near plane.
inline std::optional<Projection> project_covariance(const Gaussian& g, const Camera& cam) {
  const Vec3 p = cam.to_camera(g.mean);
  if (!(p.z() > cam.near)) {
    return std::nullopt;
  }
  const double z = p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * p.x() / (z * z), 0.0, cam.fy / z, -cam.fy * p.y() / (z * z);
  const Mat3 w = cam.rotation_matrix();
  const Mat3 cov_cam = w * covariance_of(g) * w.transpose();
  Projection out;
  out.camera_point = p;
  out.uv = Vec2(cam.fx * p.x() / z + cam.cx, cam.fy * p.y() / z + cam.cy);
  out.covariance = j * cov_cam * j.transpose();
  out.covariance(0, 1) = out.covariance(1, 0) = 0.5 * (out.covariance(0, 1) + out.covariance(1, 0));
  out.covariance(0, 0) += kLowPassDilation;
  out.covariance(1, 1) += kLowPassDilation;
  return out;
}

/// Projects `g` to a splat with colour `color`, or nullopt when culled (behind
/// the near plane, degenerate, or 3-sigma footprint entirely off-image).
inline std::optional<Splat2D> project(const Gaussian& g, const Camera& cam, const Rgb& color,
                                      std::uint32_t source_index = 0) {
  const auto proj = project_covariance(g, cam);
  if (!proj) {
    return std::nullopt;
  }
  const Mat2& cov = proj->covariance;
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  if (!(det > 0.0) || !std::isfinite(det)) {
    return std::nullopt;
  }
  Splat2D s;
  s.uv = proj->uv;
  s.conic_a = cov(1, 1) / det;
  s.conic_b = -cov(0, 1) / det;
  s.conic_c = cov(0, 0) / det;
  s.depth = proj->camera_point.z();
  s.color = color;
  s.alpha_scale = g.opacity;
  s.source_index = source_index;
  s.label = g.label;

  // Tight bounding box of the ellipse d^T cov^-1 d <= 9, in pixel-centre terms.
  const double rx = kFootprintSigmas * std::sqrt(cov(0, 0));
  const double ry = kFootprintSigmas * std::sqrt(cov(1, 1));
  const double fx0 = std::ceil(s.uv.x() - rx - 0.5);
  const double fx1 = std::floor(s.uv.x() + rx - 0.5);
  const double fy0 = std::ceil(s.uv.y() - ry - 0.5);
  const double fy1 = std::floor(s.uv.y() + ry - 0.5);
  if (!(fx1 >= 0.0 && fy1 >= 0.0 && fx0 <= cam.width - 1 && fy0 <= cam.height - 1)) {
    return std::nullopt;
  }
  s.x0 = static_cast<int>(std::max(fx0, 0.0));
  s.y0 = static_cast<int>(std::max(fy0, 0.0));
  s.x1 = static_cast<int>(std::min(fx1, double(cam.width - 1)));
  s.y1 = static_cast<int>(std::min(fy1, double(cam.height - 1)));
  return s;
}

/// Projects `g` with its SH colour seen from the camera centre.
inline std::optional<Splat2D> project(const Gaussian& g, int sh_degree, const Camera& cam,
                                      std::uint32_t source_index = 0) {
  const Vec3 dir = (g.mean - cam.position()).normalized();
  return project(g, cam, evaluate_sh_color(g, sh_degree, dir), source_index);
}

enum class RenderKind { color, label, tool_mask };

struct RenderMode {
  RenderKind kind = RenderKind::color;
  Label tool_id = 0;

  static RenderMode color() { return {RenderKind::color, 0}; }
  static RenderMode labels() { return {RenderKind::label, 0}; }
  static RenderMode tool_mask(Label id) { return {RenderKind::tool_mask, id}; }
};

/// Flat colours used for labels in label and tool-mask renders.
inline Rgb default_label_color(Label label) {
  static constexpr std::array<Rgb, 8> palette = {{{1.0, 0.0, 0.0},
                                                  {0.0, 1.0, 0.0},
                                                  {0.0, 0.0, 1.0},
                                                  {1.0, 1.0, 0.0},
                                                  {1.0, 0.0, 1.0},
                                                  {0.0, 1.0, 1.0},
                                                  {1.0, 0.5, 0.0},
                                                  {0.5, 0.0, 1.0}}};
  if (label == kBackgroundLabel) {
    return {0.0, 0.0, 0.0};
  }
  return palette[(label - 1) % palette.size()];
}

struct RenderOptions {
  /// Colour behind all splats in colour mode. Label and tool-mask modes always use black.
  Rgb background{0.0, 0.0, 0.0};
  /// Overrides for label colours; missing labels use default_label_color.
  std::map<Label, Rgb> label_colors;
  /// Worker count for the tiled path (0 = hardware concurrency).
  unsigned threads = 0;

  Rgb label_color(Label label) const {
    if (label == kBackgroundLabel) {
      return {0.0, 0.0, 0.0};
    }
    auto it = label_colors.find(label);
    return it != label_colors.end() ? it->second : default_label_color(label);
  }
};

struct RenderOutput {
  ImageF color; // H x W x 3
  ImageF alpha; // H x W
  Image16 label; // H x W, label mode only
};

/// Projects every Gaussian relevant to `mode` and returns the surviving
/// splats sorted front to back (camera z, then cloud index).
inline std::vector<Splat2D> project_scene(const CompositeScene& scene, const Camera& cam, const RenderMode& mode,
                                          const RenderOptions& options = {}) {
  const auto& gs = scene.cloud.gaussians;
  std::vector<std::optional<Splat2D>> slots(gs.size());
  const Vec3 eye = cam.position();
  parallel_for((gs.size() + 1023) / 1024, options.threads, [&](std::size_t block) {
    const std::size_t end = std::min(gs.size(), (block + 1) * 1024);
    for (std::size_t i = block * 1024; i < end; ++i) {
      const Gaussian& g = gs[i];
      const auto idx = static_cast<std::uint32_t>(i);
      switch (mode.kind) {
      case RenderKind::color:
        if (cam.to_camera(g.mean).z() > cam.near) {
          slots[i] = project(g, cam, evaluate_sh_color(g, scene.cloud.sh_degree, (g.mean - eye).normalized()), idx);
        }
        break;
      case RenderKind::label:
        slots[i] = project(g, cam, options.label_color(g.label), idx);
        break;
      case RenderKind::tool_mask:
        if (g.label == mode.tool_id) {
          slots[i] = project(g, cam, options.label_color(g.label), idx);
        }
        break;
      }
    }
  });
  std::vector<Splat2D> splats;
  splats.reserve(gs.size());
  for (auto& s : slots) {
    if (s) {
      splats.push_back(*s);
    }
  }
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.source_index < b.source_index);
  });
  return splats;
}

namespace detail {

struct PixelResult {
  double rgb[3] = {0.0, 0.0, 0.0};
  double transmittance = 1.0;
  Label label = kBackgroundLabel;
};

/// Front-to-back compositing at pixel (px, py) over `order` (indices into
/// `splats`, already depth-sorted). Shared by the tiled and reference paths so
/// both apply identical arithmetic.
template <typename IndexRange>
PixelResult blend_pixel(int px, int py, std::span<const Splat2D> splats, const IndexRange& order) {
  PixelResult r;
  double best_weight = 0.0;
  const double cx = px + 0.5;
  const double cy = py + 0.5;
  for (const auto idx : order) {
    const Splat2D& s = splats[static_cast<std::size_t>(idx)];
    if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) {
      continue;
    }
    const double dx = cx - s.uv.x();
    const double dy = cy - s.uv.y();
    const double q = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
    if (q > kFootprintSigmas * kFootprintSigmas) {
      continue;
    }
    const double alpha = std::min(1.0, s.alpha_scale * std::exp(-0.5 * q));
    if (alpha < kMinAlpha) {
      continue;
    }
    const double w = alpha * r.transmittance;
    r.rgb[0] += w * s.color.r;
    r.rgb[1] += w * s.color.g;
    r.rgb[2] += w * s.color.b;
    if (w > best_weight) {
      best_weight = w;
      r.label = s.label;
    }
    r.transmittance *= 1.0 - alpha;
    if (r.transmittance < kMinTransmittance) {
      break;
    }
  }
  return r;
}

inline RenderOutput make_output(const Camera& cam, const RenderMode& mode) {
  RenderOutput out;
  out.color = ImageF(cam.width, cam.height, 3);
  out.alpha = ImageF(cam.width, cam.height, 1);
  if (mode.kind == RenderKind::label) {
    out.label = Image16(cam.width, cam.height, 1);
  }
  return out;
}

inline void store_pixel(RenderOutput& out, int x, int y, const PixelResult& r, const Rgb& bg, const RenderMode& mode) {
  out.color.at(x, y, 0) = r.rgb[0] + r.transmittance * bg.r;
  out.color.at(x, y, 1) = r.rgb[1] + r.transmittance * bg.g;
  out.color.at(x, y, 2) = r.rgb[2] + r.transmittance * bg.b;
  out.alpha.at(x, y) = 1.0 - r.transmittance;
  if (mode.kind == RenderKind::label) {
    out.label.at(x, y) = static_cast<std::uint16_t>(std::min<Label>(r.label, 0xffff));
  }
}

inline Rgb effective_background(const RenderMode& mode, const RenderOptions& options) {
  return mode.kind == RenderKind::color ? options.background : Rgb{0.0, 0.0, 0.0};
}

} // namespace detail

/// Tiled renderer. Splats are binned into 16x16 tiles by their bounding boxes;
/// each tile list keeps the global depth order, and tiles are rendered in parallel.
inline RenderOutput render(const CompositeScene& scene, const Camera& cam, const RenderMode& mode,
                           const RenderOptions& options = {}) {
  cam.validate();
  const auto splats = project_scene(scene, cam, mode, options);
  RenderOutput out = detail::make_output(cam, mode);
  const Rgb bg = detail::effective_background(mode, options);

  const int tiles_x = (cam.width + kTileSize - 1) / kTileSize;
  const int tiles_y = (cam.height + kTileSize - 1) / kTileSize;
  const auto num_tiles = static_cast<std::size_t>(tiles_x) * static_cast<std::size_t>(tiles_y);

  // Counting sort of (tile, splat) pairs; splats are visited in depth order so
  // each bucket ends up depth-sorted.
  std::vector<std::uint32_t> offsets(num_tiles + 1, 0);
  for (const auto& s : splats) {
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty) {
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx) {
        ++offsets[static_cast<std::size_t>(ty * tiles_x + tx) + 1];
      }
    }
  }
  for (std::size_t t = 0; t < num_tiles; ++t) {
    offsets[t + 1] += offsets[t];
  }
  std::vector<std::uint32_t> lists(offsets.back());
  std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const auto& s = splats[i];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty) {
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx) {
        lists[cursor[static_cast<std::size_t>(ty * tiles_x + tx)]++] = static_cast<std::uint32_t>(i);
      }
    }
  }

  const std::span<const Splat2D> all(splats);
  parallel_for(num_tiles, options.threads, [&](std::size_t t) {
    const int tx = static_cast<int>(t % static_cast<std::size_t>(tiles_x));
    const int ty = static_cast<int>(t / static_cast<std::size_t>(tiles_x));
    const std::span<const std::uint32_t> bucket(lists.data() + offsets[t], offsets[t + 1] - offsets[t]);
    const int xe = std::min(cam.width, (tx + 1) * kTileSize);
    const int ye = std::min(cam.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < ye; ++y) {
      for (int x = tx * kTileSize; x < xe; ++x) {
        detail::store_pixel(out, x, y, detail::blend_pixel(x, y, all, bucket), bg, mode);
      }
    }
  });
  return out;
}

inline RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const RenderMode& mode,
                           const RenderOptions& options = {}) {
  return render(as_scene(cloud), cam, mode, options);
}

/// Untiled single-threaded oracle: every pixel walks the full sorted splat list.
inline RenderOutput render_reference(const CompositeScene& scene, const Camera& cam, const RenderMode& mode,
                                     const RenderOptions& options = {}) {
  cam.validate();
  RenderOptions serial = options;
  serial.threads = 1;
  const auto splats = project_scene(scene, cam, mode, serial);
  RenderOutput out = detail::make_output(cam, mode);
  const Rgb bg = detail::effective_background(mode, options);
  std::vector<std::uint32_t> all(splats.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = static_cast<std::uint32_t>(i);
  }
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      detail::store_pixel(out, x, y, detail::blend_pixel(x, y, std::span<const Splat2D>(splats), all), bg, mode);
    }
  }
  return out;
}

inline RenderOutput render_reference(const GaussianCloud& cloud, const Camera& cam, const RenderMode& mode,
                                     const RenderOptions& options = {}) {
  return render_reference(as_scene(cloud), cam, mode, options);
}

} // namespace gsynth
