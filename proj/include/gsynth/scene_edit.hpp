#pragma once

#include <gsynth/error.hpp>
#include <gsynth/kdtree.hpp>
#include <gsynth/parallel.hpp>
#include <gsynth/sh.hpp>
#include <gsynth/types.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace gsynth {

enum class CenterMode { median, mean };

/// Parameters of the centre-density foreground extraction.
///
/// A Gaussian is kept when (a) its distance to the robust centroid is at most
/// the `radius_percentile` distance plus `knn_distance_factor` median
/// neighbour spacings, and (b) its mean distance to its `knn_k` nearest
/// neighbours is at most `knn_distance_factor` times the median of that
/// quantity over the cloud.
struct ExtractionParams {
  CenterMode center_mode = CenterMode::median;
  double radius_percentile = 95.0;
  int knn_k = 8;
  double knn_distance_factor = 4.0;
  unsigned threads = 0;

  void validate() const {
    if (!(radius_percentile > 0.0 && radius_percentile <= 100.0)) {
      throw ParameterError("radius_percentile must lie in (0, 100]");
    }
    if (knn_k < 1) {
      throw ParameterError("knn_k must be at least 1");
    }
    if (!(knn_distance_factor > 0.0)) {
      throw ParameterError("knn_distance_factor must be positive");
    }
  }
};

struct ExtractionResult {
  GaussianCloud tool;
  GaussianCloud residual;
  Vec3 center = Vec3::Zero();
  /// Final keep-radius around `center`.
  double radius = 0.0;
  /// Median mean-k-NN distance over the input cloud.
  double knn_scale = 0.0;
};

/// Linear-interpolated percentile (p in [0,100]) of `values`. Reorders `values`.
inline double percentile(std::vector<double>& values, double p) {
  if (values.empty()) {
    throw ParameterError("percentile of an empty set");
  }
  std::sort(values.begin(), values.end());
  const double pos = (p / 100.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

/// Component-wise median (or mean) of the Gaussian means.
inline Vec3 robust_centroid(const GaussianCloud& cloud, CenterMode mode = CenterMode::median) {
  if (cloud.empty()) {
    throw ParameterError("centroid of an empty cloud");
  }
  if (mode == CenterMode::mean) {
    Vec3 sum = Vec3::Zero();
    for (const auto& g : cloud.gaussians) {
      sum += g.mean;
    }
    return sum / static_cast<double>(cloud.size());
  }
  Vec3 c;
  std::vector<double> axis(cloud.size());
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      axis[i] = cloud.gaussians[i].mean[a];
    }
    c[a] = percentile(axis, 50.0);
  }
  return c;
}

/// Splits `cloud` into the densely centred foreground and the sparse remainder.
/// Both parts keep the input's relative order.
inline ExtractionResult extract_foreground(const GaussianCloud& cloud, const ExtractionParams& params = {}) {
  params.validate();
  if (cloud.empty()) {
    throw ParameterError("extract_foreground: empty input cloud");
  }
  const std::size_t n = cloud.size();
  if (static_cast<std::size_t>(params.knn_k) >= n) {
    throw ParameterError("extract_foreground: knn_k (" + std::to_string(params.knn_k) +
                         ") must be smaller than the cloud size (" + std::to_string(n) + ")");
  }

  ExtractionResult out;
  out.center = robust_centroid(cloud, params.center_mode);

  std::vector<Vec3> means(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    means[i] = cloud.gaussians[i].mean;
    dist[i] = (means[i] - out.center).norm();
  }

  const detail::KdTree tree(means);
  std::vector<double> knn(n);
  const auto k = static_cast<std::size_t>(params.knn_k);
  parallel_for(n, params.threads, [&](std::size_t i) {
    const auto d = tree.knn_distances(i, k);
    knn[i] = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  });

  std::vector<double> scratch = knn;
  out.knn_scale = percentile(scratch, 50.0);
  scratch = dist;
  const double core = percentile(scratch, params.radius_percentile);
  out.radius = core + params.knn_distance_factor * out.knn_scale;
  const double knn_limit = params.knn_distance_factor * out.knn_scale;

  out.tool.sh_degree = cloud.sh_degree;
  out.residual.sh_degree = cloud.sh_degree;
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = dist[i] <= out.radius && knn[i] <= knn_limit;
    (keep ? out.tool : out.residual).gaussians.push_back(cloud.gaussians[i]);
  }
  return out;
}

/// A tool cloud with its label set, plus the flat-coloured copy used only for masks.
struct LabeledTool {
  GaussianCloud tool;
  GaussianCloud label_repr;
};

/// Tags every Gaussian with `label` and builds the secondary representation
/// whose SH evaluates to `label_color` from every direction.
inline LabeledTool assign_label(const GaussianCloud& cloud, Label label, const Rgb& label_color) {
  if (label == kBackgroundLabel) {
    throw ParameterError("assign_label: label 0 is reserved for background");
  }
  const double dc[3] = {dc_for_color(label_color.r), dc_for_color(label_color.g), dc_for_color(label_color.b)};
  LabeledTool out{cloud, cloud};
  for (auto& g : out.tool.gaussians) {
    g.label = label;
  }
  for (auto& g : out.label_repr.gaussians) {
    g.label = label;
    std::fill(g.sh.begin(), g.sh.end(), 0.0);
    for (int c = 0; c < 3; ++c) {
      g.sh[static_cast<std::size_t>(c)] = dc[c];
    }
  }
  return out;
}

enum class ShRotationMode {
  exact,
  /// Drops view dependence (bands >= 1 zeroed) instead of rotating it.
  dc_only,
};

/// Applies x -> R (x - pivot) + pivot + t to every mean and R to every
/// orientation (Sigma' = R Sigma R^T). SH lobes co-rotate.
inline GaussianCloud transform_cloud(const GaussianCloud& cloud, const RigidTransform& t,
                                     ShRotationMode sh_mode = ShRotationMode::exact) {
  GaussianCloud out = cloud;
  const Quat q = t.rotation.normalized();
  const bool rotates = !q.vec().isZero(0.0);
  std::array<Eigen::MatrixXd, 4> bands;
  if (rotates && sh_mode == ShRotationMode::exact && cloud.sh_degree > 0) {
    bands = sh_band_rotations(q.toRotationMatrix(), cloud.sh_degree);
  }
  for (auto& g : out.gaussians) {
    g.mean = t.apply(g.mean);
    if (!rotates) {
      continue;
    }
    g.rotation = (q * g.rotation).normalized();
    if (cloud.sh_degree == 0) {
      continue;
    }
    if (sh_mode == ShRotationMode::exact) {
      apply_sh_rotation(g.sh, cloud.sh_degree, bands);
    } else {
      std::fill(g.sh.begin() + 3, g.sh.end(), 0.0);
    }
  }
  return out;
}

/// Zero-pads SH coefficients up to `degree`; padding contributes nothing.
inline GaussianCloud promote_sh_degree(const GaussianCloud& cloud, int degree) {
  if (degree < cloud.sh_degree || degree > kMaxShDegree) {
    throw ParameterError("promote_sh_degree: cannot convert degree " + std::to_string(cloud.sh_degree) + " to " +
                         std::to_string(degree));
  }
  GaussianCloud out = cloud;
  out.sh_degree = degree;
  for (auto& g : out.gaussians) {
    g.sh.resize(static_cast<std::size_t>(sh_coeff_count(degree)), 0.0);
  }
  return out;
}

/// Fused scene: background followed by each placed tool. `sources[i]` is 0 for
/// background Gaussians and the tool id otherwise.
struct CompositeScene {
  GaussianCloud cloud;
  std::vector<Label> sources;

  void validate() const {
    if (sources.size() != cloud.size()) {
      throw InvalidPrimitiveError("composite scene: sources length differs from cloud length");
    }
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (sources[i] != kBackgroundLabel && cloud.gaussians[i].label != sources[i]) {
        throw InvalidPrimitiveError("composite scene: tool gaussian label differs from its source id");
      }
    }
  }
};

/// Wraps a plain cloud as a scene whose sources are all background.
inline CompositeScene as_scene(GaussianCloud cloud) {
  CompositeScene scene;
  scene.sources.assign(cloud.size(), kBackgroundLabel);
  scene.cloud = std::move(cloud);
  return scene;
}

struct ToolPlacement {
  std::reference_wrapper<const GaussianCloud> cloud;
  RigidTransform pose;
  /// Tool id (>= 1). Zero means "position in the list, counting from 1".
  Label id = 0;
};

/// Appends each transformed tool after the background. Tool Gaussians are
/// labelled with their tool id; clouds of lower SH degree are zero-padded.
inline CompositeScene fuse(const GaussianCloud& background, const std::vector<ToolPlacement>& tools,
                           ShRotationMode sh_mode = ShRotationMode::exact) {
  int degree = background.sh_degree;
  std::size_t total = background.size();
  for (const auto& t : tools) {
    degree = std::max(degree, t.cloud.get().sh_degree);
    total += t.cloud.get().size();
  }

  CompositeScene scene;
  scene.cloud.sh_degree = degree;
  scene.cloud.gaussians.reserve(total);
  scene.sources.reserve(total);
  auto append = [&](GaussianCloud part, Label source) {
    if (part.sh_degree < degree) {
      part = promote_sh_degree(part, degree);
    }
    for (auto& g : part.gaussians) {
      if (source != kBackgroundLabel) {
        g.label = source;
      }
      scene.cloud.gaussians.push_back(std::move(g));
      scene.sources.push_back(source);
    }
  };
  append(background, kBackgroundLabel);
  for (std::size_t i = 0; i < tools.size(); ++i) {
    const Label id = tools[i].id != 0 ? tools[i].id : static_cast<Label>(i + 1);
    append(transform_cloud(tools[i].cloud.get(), tools[i].pose, sh_mode), id);
  }
  return scene;
}

} // namespace gsynth
