#pragma once

#include <gsynth/annotation.hpp>
#include <gsynth/config.hpp>
#include <gsynth/error.hpp>
#include <gsynth/image.hpp>
#include <gsynth/ply.hpp>
#include <gsynth/rasterizer.hpp>
#include <gsynth/scene_edit.hpp>
#include <gsynth/trajectory.hpp>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace gsynth {

/// Hex SHA-256 of `text`.
inline std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

/// Per-tool state prepared once per job.
struct PreparedTool {
  Label id = 1;
  GaussianCloud cloud; // extracted and labelled
  Vec3 pivot = Vec3::Zero();
  Rgb label_color;
  std::size_t source_count = 0; // Gaussians in the input checkpoint
};

/// Loads, extracts and labels one tool checkpoint.
inline PreparedTool prepare_tool(const ToolConfig& t) {
  GaussianCloud cloud = load_ply(t.ply);
  if (!t.labels.empty()) {
    apply_labels(cloud, load_labels(t.labels, cloud.size()));
  }
  PreparedTool out;
  out.id = t.id;
  out.source_count = cloud.size();
  if (t.extract) {
    cloud = extract_foreground(cloud, t.extraction).tool;
  }
  out.label_color = t.label_color.value_or(default_label_color(t.id));
  out.cloud = assign_label(cloud, t.id, out.label_color).tool;
  switch (t.pivot_mode) {
  case PivotMode::centroid:
    out.pivot = out.cloud.empty() ? Vec3::Zero() : robust_centroid(out.cloud, t.extraction.center_mode);
    break;
  case PivotMode::origin: out.pivot = Vec3::Zero(); break;
  case PivotMode::explicit_point: out.pivot = t.pivot; break;
  }
  return out;
}

/// Frames of an orbit job; tool poses are the configured pose, optionally
/// perturbed by seeded random jitter.
inline std::vector<FrameSpec> orbit_frames(const JobConfig& cfg) {
  const OrbitConfig& o = *cfg.orbit;
  const auto cams = sample_orbit(o.n, o.radius, o.elevation, o.target, cfg.intrinsics, o.azimuth_offset);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<FrameSpec> frames;
  frames.reserve(cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    FrameSpec f;
    f.frame_id = i;
    f.camera = cams[i];
    for (const auto& t : cfg.tools) {
      ToolPose tp{t.id, t.pose};
      if (cfg.jitter_translation > 0.0 || cfg.jitter_rotation_deg > 0.0) {
        const Vec3 dt(unit(rng), unit(rng), unit(rng));
        Vec3 axis(unit(rng), unit(rng), unit(rng));
        const double angle = unit(rng) * cfg.jitter_rotation_deg * std::numbers::pi / 180.0;
        if (axis.norm() < 1e-12) {
          axis = Vec3::UnitZ();
        }
        RigidTransform jitter;
        jitter.rotation = Quat(Eigen::AngleAxisd(angle, axis.normalized()));
        jitter.translation = cfg.jitter_translation * dt;
        tp.pose.rotation = (jitter.rotation * tp.pose.rotation).normalized();
        tp.pose.translation += jitter.translation;
      }
      f.tool_poses.push_back(tp);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

struct GenerateOptions {
  /// Skip frames already marked complete in an existing manifest whose files exist.
  bool resume = false;
  /// Record failing frames and continue instead of aborting.
  bool keep_going = false;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Output of one job. `manifest` is what is written to manifest.json.
struct GenerateResult {
  nlohmann::json manifest;
  std::size_t rendered = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Everything in the manifest except wall-clock timings.
inline nlohmann::json manifest_without_timings(nlohmann::json m) {
  m.erase("timings");
  return m;
}

namespace detail {

inline std::string frame_stem(std::uint64_t id) { return std::to_string(id); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    return nullptr;
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return nullptr;
  }
}

} // namespace detail

/// Runs a dataset job: for every frame, fuse the posed tools into the
/// background, render the colour image, one mask per tool and the detection
/// labels, then write manifest.json.
///
/// Layout under output_dir: images/<id>.png, masks/<id>_<tool>.png (0/255
/// binary mask), labels/<id>.txt, manifest.json.
inline GenerateResult generate(const JobConfig& cfg, const GenerateOptions& opts = {}) {
  using Clock = std::chrono::steady_clock;
  using nlohmann::json;
  cfg.validate();
  const auto job_start = Clock::now();

  namespace fs = std::filesystem;
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / "labels");
  const fs::path manifest_path = out_dir / "manifest.json";
  const std::string config_hash = sha256_hex(canonical_config(cfg));

  std::map<std::uint64_t, json> previous;
  if (opts.resume) {
    const json old = detail::read_manifest(manifest_path);
    if (old.is_object() && old.value("config_hash", "") == config_hash && old.contains("frames")) {
      for (const auto& f : old["frames"]) {
        if (f.value("status", "") == "complete") {
          previous[f["frame_id"].get<std::uint64_t>()] = f;
        }
      }
    }
  }

  const auto prep_start = Clock::now();
  const GaussianCloud background = load_ply(cfg.background_ply);
  std::vector<PreparedTool> tools;
  for (const auto& t : cfg.tools) {
    tools.push_back(prepare_tool(t));
  }
  const double prep_ms = std::chrono::duration<double, std::milli>(Clock::now() - prep_start).count();

  const std::vector<FrameSpec> frames = cfg.trajectory
                                            ? load_trajectory(*cfg.trajectory, cfg.tool_ids(), cfg.intrinsics.near)
                                            : orbit_frames(cfg);

  RenderOptions ropts;
  ropts.background = cfg.background;
  ropts.threads = cfg.threads;
  for (const auto& t : tools) {
    ropts.label_colors[t.id] = t.label_color;
  }

  GenerateResult result;
  json frame_entries = json::array();
  json timing_entries = json::array();
  bool partial = false;

  auto finish = [&](std::size_t done) {
    json manifest;
    manifest["format"] = "gsynth-manifest/1";
    manifest["config_hash"] = config_hash;
    manifest["seed"] = cfg.seed;
    manifest["image_size"] = {cfg.intrinsics.width, cfg.intrinsics.height};
    json tool_info = json::array();
    for (const auto& t : tools) {
      tool_info.push_back({{"tool_id", t.id},
                           {"class_id", t.id - 1},
                           {"source_gaussians", t.source_count},
                           {"extracted_gaussians", t.cloud.size()},
                           {"label_color", {t.label_color.r, t.label_color.g, t.label_color.b}}});
    }
    manifest["background_gaussians"] = background.size();
    manifest["tools"] = tool_info;
    manifest["frame_count"] = frame_entries.size();
    manifest["trajectory_frame_count"] = frames.size();
    manifest["partial"] = partial || done < frames.size();
    manifest["frames"] = frame_entries;
    manifest["timings"] = {
        {"prepare_ms", prep_ms},
        {"total_ms", std::chrono::duration<double, std::milli>(Clock::now() - job_start).count()},
        {"frames", timing_entries}};
    detail::write_text(manifest_path, manifest.dump(2) + "\n");
    result.manifest = std::move(manifest);
  };

  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const FrameSpec& frame = frames[fi];
    const std::string stem = detail::frame_stem(frame.frame_id);
    const fs::path image_rel = fs::path("images") / (stem + ".png");
    const fs::path labels_rel = fs::path("labels") / (stem + ".txt");

    if (auto it = previous.find(frame.frame_id); it != previous.end()) {
      bool files_ok = fs::exists(out_dir / image_rel) && fs::exists(out_dir / labels_rel);
      for (const auto& [tool, mask] : it->second["masks"].items()) {
        files_ok = files_ok && fs::exists(out_dir / mask.get<std::string>());
      }
      if (files_ok) {
        frame_entries.push_back(it->second);
        timing_entries.push_back({{"frame_id", frame.frame_id}, {"skipped", true}});
        ++result.skipped;
        if (opts.progress) {
          opts.progress(fi + 1, frames.size());
        }
        continue;
      }
    }

    const auto t0 = Clock::now();
    try {
      std::vector<ToolPlacement> placements;
      for (const auto& tp : frame.tool_poses) {
        const PreparedTool* tool = nullptr;
        for (const auto& t : tools) {
          if (t.id == tp.tool_id) {
            tool = &t;
          }
        }
        if (tool == nullptr) {
          throw ConfigError("frame " + stem + " references unknown tool_id " + std::to_string(tp.tool_id));
        }
        RigidTransform pose = tp.pose;
        pose.pivot = tool->pivot;
        placements.push_back({std::cref(tool->cloud), pose, tool->id});
      }
      Camera cam = frame.camera;
      cam.near = cfg.intrinsics.near;
      const CompositeScene scene = fuse(background, placements, cfg.sh_rotation);
      const auto t_fused = Clock::now();

      const RenderOutput color = render(scene, cam, RenderMode::color(), ropts);
      write_png(quantize(color.color), out_dir / image_rel);
      const auto t_color = Clock::now();

      json masks = json::object();
      json annotations_per_tool = json::object();
      std::vector<AnnotationRecord> records;
      for (const auto& p : placements) {
        const RenderOutput m = render(scene, cam, RenderMode::tool_mask(p.id), ropts);
        const Mask mask = binarize(m, cfg.threshold);
        Image8 mask_png(mask.width, mask.height, 1);
        for (std::size_t i = 0; i < mask.data.size(); ++i) {
          mask_png.data[i] = mask.data[i] != 0 ? 255 : 0;
        }
        const fs::path mask_rel = fs::path("masks") / (stem + "_" + std::to_string(p.id) + ".png");
        write_png(mask_png, out_dir / mask_rel);
        masks[std::to_string(p.id)] = mask_rel.generic_string();
        auto recs = annotate_mask(mask, static_cast<int>(p.id) - 1, cfg.min_area, cfg.merge_components);
        annotations_per_tool[std::to_string(p.id)] = recs.size();
        records.insert(records.end(), recs.begin(), recs.end());
      }
      write_annotations(records, out_dir / labels_rel);
      const auto t_done = Clock::now();

      std::size_t tool_gaussians = 0;
      for (const auto& p : placements) {
        tool_gaussians += p.cloud.get().size();
      }
      frame_entries.push_back({{"frame_id", frame.frame_id},
                               {"status", "complete"},
                               {"image", image_rel.generic_string()},
                               {"masks", masks},
                               {"labels", labels_rel.generic_string()},
                               {"gaussians", {{"background", background.size()},
                                              {"tools", tool_gaussians},
                                              {"total", scene.cloud.size()}}},
                               {"annotations", records.size()},
                               {"annotations_per_tool", annotations_per_tool}});
      using ms = std::chrono::duration<double, std::milli>;
      timing_entries.push_back({{"frame_id", frame.frame_id},
                                {"fuse_ms", ms(t_fused - t0).count()},
                                {"color_ms", ms(t_color - t_fused).count()},
                                {"masks_ms", ms(t_done - t_color).count()}});
      ++result.rendered;
    } catch (const std::exception& e) {
      partial = true;
      ++result.failed;
      frame_entries.push_back({{"frame_id", frame.frame_id}, {"status", "failed"}, {"error", e.what()}});
      if (!opts.keep_going) {
        finish(fi + 1);
        throw Error("frame " + stem + " failed: " + e.what());
      }
    }
    if (opts.progress) {
      opts.progress(fi + 1, frames.size());
    }
  }
  finish(frames.size());
  return result;
}

} // namespace gsynth
