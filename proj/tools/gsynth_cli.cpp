// gsynth command-line front end: extract, fuse, render, generate, eval.

#include <gsynth/gsynth.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gsynth;

namespace {

std::vector<double> numbers(const std::string& what, const std::string& text, std::size_t count) {
  const auto tok = detail::split_ws(text);
  if (tok.size() != count) {
    throw ParameterError(what + ": expected " + std::to_string(count) + " numbers, got '" + text + "'");
  }
  std::vector<double> out;
  for (const auto& t : tok) {
    out.push_back(detail::parse_double(t, what));
  }
  return out;
}

Rgb parse_rgb(const std::string& what, const std::string& text) {
  const auto v = numbers(what, text, 3);
  return {v[0], v[1], v[2]};
}

Vec3 parse_vec3(const std::string& what, const std::string& text) {
  const auto v = numbers(what, text, 3);
  return {v[0], v[1], v[2]};
}

RigidTransform parse_pose(const std::string& what, const std::string& text) {
  const auto v = numbers(what, text, 7);
  RigidTransform t;
  t.rotation = normalized_or_throw(Quat(v[0], v[1], v[2], v[3]));
  t.translation = Vec3(v[4], v[5], v[6]);
  return t;
}

ExtractionParams extraction_from(const std::string& center, double pct, int k, double factor, unsigned threads) {
  ExtractionParams p;
  if (center == "median") {
    p.center_mode = CenterMode::median;
  } else if (center == "mean") {
    p.center_mode = CenterMode::mean;
  } else {
    throw ParameterError("--center must be median or mean");
  }
  p.radius_percentile = pct;
  p.knn_k = k;
  p.knn_distance_factor = factor;
  p.threads = threads;
  return p;
}

void add_extraction_flags(CLI::App* cmd, std::string& center, double& pct, int& k, double& factor) {
  cmd->add_option("--center", center, "Centroid estimator: median or mean")->capture_default_str();
  cmd->add_option("--radius-percentile", pct, "Distance percentile of the core radius")->capture_default_str();
  cmd->add_option("--knn-k", k, "Neighbours per density estimate")->capture_default_str();
  cmd->add_option("--knn-factor", factor, "Outlier factor on the median neighbour distance")->capture_default_str();
}

void add_intrinsics_flags(CLI::App* cmd, Intrinsics& k) {
  cmd->add_option("--width", k.width, "Image width")->capture_default_str();
  cmd->add_option("--height", k.height, "Image height")->capture_default_str();
  cmd->add_option("--fx", k.fx)->capture_default_str();
  cmd->add_option("--fy", k.fy)->capture_default_str();
  cmd->add_option("--cx", k.cx)->capture_default_str();
  cmd->add_option("--cy", k.cy)->capture_default_str();
  cmd->add_option("--near", k.near)->capture_default_str();
}

GaussianCloud load_with_labels(const fs::path& ply, const std::string& labels) {
  GaussianCloud c = load_ply(ply);
  if (!labels.empty()) {
    apply_labels(c, load_labels(labels, c.size()));
  }
  return c;
}

// Collects sorted image file names (png) directly inside `dir`.
std::vector<std::string> image_names(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      out.push_back(e.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) {
    return "inf";
  }
  return v;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compose Gaussian-splatting scenes and synthesise annotated detection datasets"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "Extract the dense foreground (tool) from a checkpoint");
  std::string ex_in, ex_out, ex_labels, ex_residual, ex_color, ex_center = "median";
  Label ex_label = 1;
  double ex_pct = 95.0, ex_factor = 4.0;
  int ex_k = 8;
  extract->add_option("input", ex_in, "Input PLY")->required();
  extract->add_option("-o,--output", ex_out, "Tool PLY to write")->required();
  extract->add_option("--labels", ex_labels, "Label sidecar to write (default: <output>.labels.txt)");
  extract->add_option("--residual", ex_residual, "Also write the rejected Gaussians to this PLY");
  extract->add_option("--label", ex_label, "Tool label (>= 1)")->capture_default_str();
  extract->add_option("--color", ex_color, "Label colour \"r g b\" in [0,1] (default: palette entry)");
  add_extraction_flags(extract, ex_center, ex_pct, ex_k, ex_factor);

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "Place tool clouds into a background and save the composite");
  std::string fu_bg, fu_out, fu_labels, fu_sh = "exact";
  std::vector<std::string> fu_tools, fu_poses, fu_tool_labels;
  fuse_cmd->add_option("background", fu_bg, "Background PLY")->required();
  fuse_cmd->add_option("-t,--tool", fu_tools, "Tool PLY (repeatable; ids are 1, 2, ... in order)")->required();
  fuse_cmd->add_option("--pose", fu_poses, "\"qw qx qy qz tx ty tz\" per tool, about the tool centroid");
  fuse_cmd->add_option("-o,--output", fu_out, "Composite PLY")->required();
  fuse_cmd->add_option("--labels", fu_labels, "Label sidecar to write (default: <output>.labels.txt)");
  fuse_cmd->add_option("--sh-rotation", fu_sh, "exact or dc_only")->capture_default_str();

  // render
  auto* render_cmd = app.add_subcommand("render", "Render one frame of a PLY scene");
  std::string re_scene, re_labels, re_out, re_mode = "color", re_bg = "0 0 0", re_eye, re_target = "0 0 0";
  std::string re_traj, re_up = "0 0 1", re_alpha_out, re_colors_json;
  std::uint64_t re_frame = 0;
  Label re_tool = 1;
  bool re_reference = false;
  Intrinsics re_k;
  render_cmd->add_option("scene", re_scene, "Scene PLY")->required();
  render_cmd->add_option("--scene-labels", re_labels, "Label sidecar for the scene");
  render_cmd->add_option("-o,--output", re_out, "PNG to write")->required();
  render_cmd->add_option("--mode", re_mode, "color, label or mask")->capture_default_str();
  render_cmd->add_option("--tool-id", re_tool, "Tool id for --mode mask")->capture_default_str();
  render_cmd->add_option("--background", re_bg, "Background colour \"r g b\"")->capture_default_str();
  render_cmd->add_option("--eye", re_eye, "Camera position \"x y z\" (look-at mode)");
  render_cmd->add_option("--target", re_target, "Look-at target")->capture_default_str();
  render_cmd->add_option("--up", re_up, "World up")->capture_default_str();
  render_cmd->add_option("--trajectory", re_traj, "Take the camera from this trajectory file");
  render_cmd->add_option("--frame", re_frame, "Frame id within --trajectory")->capture_default_str();
  render_cmd->add_option("--alpha", re_alpha_out, "Also write the accumulated opacity as a gray PNG");
  render_cmd->add_flag("--reference", re_reference, "Use the untiled reference renderer");
  add_intrinsics_flags(render_cmd, re_k);

  // generate
  auto* gen = app.add_subcommand("generate", "Batch-produce images, masks, labels and a manifest");
  std::string ge_config, ge_out;
  std::vector<std::string> ge_set;
  std::uint64_t ge_seed = 0;
  bool ge_resume = false, ge_keep = false, ge_quiet = false;
  gen->add_option("-c,--config", ge_config, "Job config file (key = value)")->required();
  gen->add_option("--set", ge_set, "Override a config key: key=value (repeatable)");
  gen->add_option("--seed", ge_seed, "Random seed")->capture_default_str();
  gen->add_option("--output-dir", ge_out, "Output directory (overrides output_dir)");
  gen->add_flag("--resume", ge_resume, "Skip frames already completed by an identical job");
  gen->add_flag("--keep-going", ge_keep, "Record failed frames and continue");
  gen->add_flag("-q,--quiet", ge_quiet, "No progress output");

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM between same-named images in two directories");
  std::string ev_a, ev_b, ev_report, ev_overlays;
  eval->add_option("synthetic", ev_a, "Directory of synthetic images")->required()->check(CLI::ExistingDirectory);
  eval->add_option("reference", ev_b, "Directory of ground-truth images")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", ev_report, "Write the JSON report here (default: stdout after the table)");
  eval->add_option("--overlays", ev_overlays, "Write difference overlays into this directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) {
      const GaussianCloud cloud = load_ply(ex_in);
      const ExtractionParams params = extraction_from(ex_center, ex_pct, ex_k, ex_factor, threads);
      const ExtractionResult r = extract_foreground(cloud, params);
      const Rgb color = ex_color.empty() ? default_label_color(ex_label) : parse_rgb("--color", ex_color);
      const LabeledTool tool = assign_label(r.tool, ex_label, color);
      save_ply(tool.tool, ex_out);
      save_labels(tool.tool, ex_labels.empty() ? ex_out + ".labels.txt" : ex_labels);
      if (!ex_residual.empty()) {
        save_ply(r.residual, ex_residual);
      }
      std::printf("kept %zu of %zu gaussians (radius %.6g, knn scale %.6g)\n", r.tool.size(), cloud.size(), r.radius,
                  r.knn_scale);
      return 0;
    }

    if (*fuse_cmd) {
      if (!fu_poses.empty() && fu_poses.size() != fu_tools.size()) {
        throw ParameterError("--pose must be given once per --tool");
      }
      const GaussianCloud background = load_ply(fu_bg);
      std::vector<GaussianCloud> clouds;
      for (const auto& t : fu_tools) {
        clouds.push_back(load_ply(t));
      }
      std::vector<ToolPlacement> placements;
      for (std::size_t i = 0; i < clouds.size(); ++i) {
        RigidTransform pose = fu_poses.empty() ? RigidTransform{} : parse_pose("--pose", fu_poses[i]);
        pose.pivot = clouds[i].empty() ? Vec3::Zero() : robust_centroid(clouds[i]);
        placements.push_back({std::cref(clouds[i]), pose, static_cast<Label>(i + 1)});
      }
      if (fu_sh != "exact" && fu_sh != "dc_only") {
        throw ParameterError("--sh-rotation must be exact or dc_only");
      }
      const CompositeScene scene =
          fuse(background, placements, fu_sh == "exact" ? ShRotationMode::exact : ShRotationMode::dc_only);
      save_ply(scene.cloud, fu_out);
      save_labels(scene.cloud, fu_labels.empty() ? fu_out + ".labels.txt" : fu_labels);
      std::printf("wrote %zu gaussians (%zu background)\n", scene.cloud.size(), background.size());
      return 0;
    }

    if (*render_cmd) {
      const GaussianCloud cloud = load_with_labels(re_scene, re_labels);
      Camera cam;
      if (!re_traj.empty()) {
        bool found = false;
        for (const auto& f : load_trajectory(re_traj, std::nullopt, re_k.near)) {
          if (f.frame_id == re_frame) {
            cam = f.camera;
            found = true;
          }
        }
        if (!found) {
          throw ParameterError("frame " + std::to_string(re_frame) + " not in " + re_traj);
        }
      } else {
        if (re_eye.empty()) {
          throw ParameterError("give either --eye or --trajectory");
        }
        cam = look_at(parse_vec3("--eye", re_eye), parse_vec3("--target", re_target), parse_vec3("--up", re_up), re_k);
      }
      RenderMode mode;
      if (re_mode == "color") {
        mode = RenderMode::color();
      } else if (re_mode == "label") {
        mode = RenderMode::labels();
      } else if (re_mode == "mask") {
        mode = RenderMode::tool_mask(re_tool);
      } else {
        throw ParameterError("--mode must be color, label or mask");
      }
      // Scene labels are taken as source ids.
      CompositeScene scene;
      scene.sources.reserve(cloud.size());
      for (const auto& g : cloud.gaussians) {
        scene.sources.push_back(g.label);
      }
      scene.cloud = cloud;
      RenderOptions opts;
      opts.background = parse_rgb("--background", re_bg);
      opts.threads = threads;
      const RenderOutput out = re_reference ? render_reference(scene, cam, mode, opts) : render(scene, cam, mode, opts);
      write_png(quantize(out.color), re_out);
      if (!re_alpha_out.empty()) {
        write_png(quantize(out.alpha), re_alpha_out);
      }
      return 0;
    }

    if (*gen) {
      ConfigMap overrides;
      for (const auto& kv : ge_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
          throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        overrides[detail::trim(kv.substr(0, eq))] = detail::trim(kv.substr(eq + 1));
      }
      if (gen->count("--seed") > 0) {
        overrides["seed"] = std::to_string(ge_seed);
      }
      if (app.count("--threads") > 0) {
        overrides["threads"] = std::to_string(threads);
      }
      JobConfig cfg = load_config(ge_config, overrides);
      if (!ge_out.empty()) {
        cfg.output_dir = ge_out;
      }
      GenerateOptions opts;
      opts.resume = ge_resume;
      opts.keep_going = ge_keep;
      if (!ge_quiet) {
        opts.progress = [](std::size_t done, std::size_t total) {
          std::fprintf(stderr, "\rframe %zu/%zu", done, total);
          if (done == total) {
            std::fprintf(stderr, "\n");
          }
        };
      }
      const GenerateResult r = generate(cfg, opts);
      std::printf("rendered %zu, skipped %zu, failed %zu -> %s\n", r.rendered, r.skipped, r.failed,
                  (cfg.output_dir / "manifest.json").string().c_str());
      return r.failed > 0 ? 2 : 0;
    }

    if (*eval) {
      const auto names = image_names(ev_a);
      std::vector<PairQuality> pairs;
      if (!ev_overlays.empty()) {
        fs::create_directories(ev_overlays);
      }
      for (const auto& name : names) {
        const fs::path other = fs::path(ev_b) / name;
        if (!fs::exists(other)) {
          std::fprintf(stderr, "skipping %s: no counterpart in %s\n", name.c_str(), ev_b.c_str());
          continue;
        }
        const ImageF a = to_float(read_png_rgb8(fs::path(ev_a) / name));
        const ImageF b = to_float(read_png_rgb8(other));
        pairs.push_back({name, psnr(a, b), ssim(a, b)});
        if (!ev_overlays.empty()) {
          write_png(quantize(diff_overlay(a, b).image), fs::path(ev_overlays) / name);
        }
      }
      if (pairs.empty()) {
        throw ParameterError("no same-named PNG pairs found");
      }
      const QualityReport rep = summarize(pairs);

      std::printf("%-32s %12s %10s\n", "image", "PSNR [dB]", "SSIM");
      for (const auto& p : rep.per_pair) {
        std::printf("%-32s %12s %10.4f\n", p.name.c_str(), format_psnr(p.psnr).c_str(), p.ssim);
      }
      std::printf("%-32s %5.3f+-%-5.3f %6.4f+-%.4f\n", "mean+-std", rep.mean_psnr, rep.std_psnr, rep.mean_ssim,
                  rep.std_ssim);
      if (rep.infinite_psnr_count > 0) {
        std::printf("note: %zu identical pair(s) have infinite PSNR and are excluded from the PSNR mean\n",
                    rep.infinite_psnr_count);
      }
      std::printf("note: LPIPS unavailable (needs a pretrained perceptual network)\n");

      nlohmann::json j;
      j["pairs"] = nlohmann::json::array();
      for (const auto& p : rep.per_pair) {
        j["pairs"].push_back({{"name", p.name}, {"psnr", number_or_inf(p.psnr)}, {"ssim", p.ssim}});
      }
      j["mean_psnr"] = rep.mean_psnr;
      j["std_psnr"] = rep.std_psnr;
      j["mean_ssim"] = rep.mean_ssim;
      j["std_ssim"] = rep.std_ssim;
      j["infinite_psnr_count"] = rep.infinite_psnr_count;
      j["lpips"] = "unavailable";
      if (!ev_overlays.empty()) {
        j["overlay_mapping"] = DiffOverlay::mapping;
      }
      if (ev_report.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::ofstream(ev_report) << j.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
