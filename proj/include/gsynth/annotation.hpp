#pragma once

#include <gsynth/error.hpp>
#include <gsynth/image.hpp>
#include <gsynth/rasterizer.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace gsynth {

inline constexpr double kDefaultMaskThreshold = 0.1;
inline constexpr std::size_t kDefaultMinArea = 16;

/// 0/1 foreground mask.
using Mask = Image<std::uint8_t>;

enum class MaskSource {
  /// Foreground where the brightest colour channel exceeds the threshold.
  color,
  /// Foreground where the label image is non-zero (label-mode renders).
  label,
};

inline Mask binarize(const RenderOutput& render, double threshold, MaskSource source = MaskSource::color) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ParameterError("binarize: threshold must lie in (0, 1)");
  }
  const ImageF& c = render.color;
  Mask mask(c.width, c.height, 1);
  if (source == MaskSource::label) {
    if (render.label.width != c.width || render.label.height != c.height) {
      throw ParameterError("binarize: render has no label image");
    }
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
      mask.data[i] = render.label.data[i] != 0 ? 1 : 0;
    }
    return mask;
  }
  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      const double m = std::max({c.at(x, y, 0), c.at(x, y, 1), c.at(x, y, 2)});
      mask.at(x, y) = m > threshold ? 1 : 0;
    }
  }
  return mask;
}

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// One connected foreground region. `pixels[0]` is its first pixel in row-major order.
struct Component {
  std::vector<PixelCoord> pixels;
  int min_x = 0, min_y = 0, max_x = -1, max_y = -1;

  std::size_t area() const { return pixels.size(); }
};

/// 8-connected components ordered by descending area, then by first pixel
/// (row-major). Components smaller than `min_area` are dropped.
inline std::vector<Component> components(const Mask& mask, std::size_t min_area = kDefaultMinArea) {
  const int w = mask.width;
  const int h = mask.height;
  std::vector<std::uint8_t> seen(mask.data.size(), 0);
  std::vector<Component> out;
  std::vector<PixelCoord> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = mask.index(x, y);
      if (mask.data[i] == 0 || seen[i] != 0) {
        continue;
      }
      Component comp;
      comp.min_x = comp.max_x = x;
      comp.min_y = comp.max_y = y;
      seen[i] = 1;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const PixelCoord p = stack.back();
        stack.pop_back();
        comp.pixels.push_back(p);
        comp.min_x = std::min(comp.min_x, p.x);
        comp.max_x = std::max(comp.max_x, p.x);
        comp.min_y = std::min(comp.min_y, p.y);
        comp.max_y = std::max(comp.max_y, p.y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx;
            const int ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
              continue;
            }
            const std::size_t j = mask.index(nx, ny);
            if (mask.data[j] != 0 && seen[j] == 0) {
              seen[j] = 1;
              stack.push_back({nx, ny});
            }
          }
        }
      }
      if (comp.area() >= min_area) {
        // Row-major sort keeps pixels[0] as the discovery (top-left) pixel.
        std::sort(comp.pixels.begin(), comp.pixels.end(),
                  [](const PixelCoord& a, const PixelCoord& b) { return a.y < b.y || (a.y == b.y && a.x < b.x); });
        out.push_back(std::move(comp));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Component& a, const Component& b) {
    if (a.area() != b.area()) {
      return a.area() > b.area();
    }
    const PixelCoord pa = a.pixels.front();
    const PixelCoord pb = b.pixels.front();
    return pa.y < pb.y || (pa.y == pb.y && pa.x < pb.x);
  });
  return out;
}

/// Union of several components (used when one tool should yield one box).
inline Component merge_components(const std::vector<Component>& parts) {
  Component out;
  bool first = true;
  for (const auto& c : parts) {
    out.pixels.insert(out.pixels.end(), c.pixels.begin(), c.pixels.end());
    out.min_x = first ? c.min_x : std::min(out.min_x, c.min_x);
    out.min_y = first ? c.min_y : std::min(out.min_y, c.min_y);
    out.max_x = first ? c.max_x : std::max(out.max_x, c.max_x);
    out.max_y = first ? c.max_y : std::max(out.max_y, c.max_y);
    first = false;
  }
  std::sort(out.pixels.begin(), out.pixels.end(),
            [](const PixelCoord& a, const PixelCoord& b) { return a.y < b.y || (a.y == b.y && a.x < b.x); });
  return out;
}

/// One detection label: normalised centre/size box plus the component's pixel count.
struct AnnotationRecord {
  int class_id = 0;
  double x_center = 0.0;
  double y_center = 0.0;
  double width = 0.0;
  double height = 0.0;
  std::size_t pixel_area = 0;

  /// Inclusive pixel bounds of the box in an image of the given size.
  void pixel_box(int image_w, int image_h, int& x0, int& y0, int& x1, int& y1) const {
    x0 = static_cast<int>(std::lround((x_center - width / 2.0) * image_w));
    x1 = static_cast<int>(std::lround((x_center + width / 2.0) * image_w)) - 1;
    y0 = static_cast<int>(std::lround((y_center - height / 2.0) * image_h));
    y1 = static_cast<int>(std::lround((y_center + height / 2.0) * image_h)) - 1;
  }
};

/// Tight box over the component with pixel-edge convention: a pixel column c
/// spans [c, c+1), so x_center = (min + max + 1) / 2W and width = (max - min + 1) / W.
inline AnnotationRecord to_annotation(const Component& comp, int image_w, int image_h, int class_id) {
  if (comp.pixels.empty()) {
    throw ParameterError("to_annotation: empty component");
  }
  if (image_w < 1 || image_h < 1) {
    throw ParameterError("to_annotation: image size must be positive");
  }
  AnnotationRecord r;
  r.class_id = class_id;
  r.x_center = static_cast<double>(comp.min_x + comp.max_x + 1) / (2.0 * image_w);
  r.y_center = static_cast<double>(comp.min_y + comp.max_y + 1) / (2.0 * image_h);
  r.width = static_cast<double>(comp.max_x - comp.min_x + 1) / image_w;
  r.height = static_cast<double>(comp.max_y - comp.min_y + 1) / image_h;
  r.pixel_area = comp.pixels.size();
  return r;
}

/// "class x_center y_center width height\n" per record, six decimals.
inline std::string format_annotations(const std::vector<AnnotationRecord>& records) {
  std::string out;
  char line[160];
  for (const auto& r : records) {
    const int n = std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f\n", r.class_id, r.x_center, r.y_center,
                                r.width, r.height);
    out.append(line, static_cast<std::size_t>(n));
  }
  return out;
}

inline void write_annotations(const std::vector<AnnotationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  const std::string text = format_annotations(records);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

/// Mask render -> components -> records for one tool.
inline std::vector<AnnotationRecord> annotate_mask(const Mask& mask, int class_id, std::size_t min_area,
                                                   bool merge) {
  auto comps = components(mask, min_area);
  std::vector<AnnotationRecord> out;
  if (comps.empty()) {
    return out;
  }
  if (merge) {
    out.push_back(to_annotation(merge_components(comps), mask.width, mask.height, class_id));
    return out;
  }
  for (const auto& c : comps) {
    out.push_back(to_annotation(c, mask.width, mask.height, class_id));
  }
  return out;
}

} // namespace gsynth
