// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "naive_oracle.hpp"
#include "scene_fixture.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace gsynth;
using namespace gsynth::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Gaussian flat(const Vec3& mean, double s, double opacity, const Rgb& color) {
  Gaussian g;
  g.mean = mean;
  g.scale = Vec3::Constant(s);
  g.opacity = opacity;
  g.sh = {dc_for_color(color.r), dc_for_color(color.g), dc_for_color(color.b)};
  return g;
}

Outcome oracle_equivalence() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> count(1, 100), deg(0, 3), size(16, 96);
  double worst_ref = 0.0, worst_naive = 0.0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 200; ++i) {
    const GaussianCloud c = random_cloud(rng, static_cast<std::size_t>(count(rng)), deg(rng));
    const Camera cam = random_camera(rng, size(rng), size(rng));
    RenderOptions opt;
    opt.background = {0.05, 0.1, 0.2};
    const ImageF tiled = render(c, cam, RenderMode::color(), opt).color;
    worst_ref = std::max(worst_ref, max_abs_diff(tiled, render_reference(c, cam, RenderMode::color(), opt).color));
    worst_naive = std::max(worst_naive, max_abs_diff(tiled, naive_render(c, cam, opt.background)));
  }
  const double secs = seconds_since(t0);
  o.check(worst_ref <= 1e-5, "tiled vs reference " + fmt("%.3g", worst_ref));
  o.check(worst_naive <= 1e-5, "tiled vs naive " + fmt("%.3g", worst_naive));
  o.check(secs < 60.0, "runtime " + fmt("%.1f s", secs));
  o.detail = "200 scenes, max err vs reference " + fmt("%.3g", worst_ref) + ", vs naive compositor " +
             fmt("%.3g", worst_naive) + ", " + fmt("%.2f s", secs) + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome closed_form_render() {
  Outcome o;
  Camera cam;
  cam.fx = cam.fy = 60.0;
  cam.width = 40;
  cam.height = 30;
  cam.cx = 19.3;
  cam.cy = 14.1;
  Gaussian g = flat(Vec3(0.02, -0.03, 2.0), 0.08, 0.7, {0.2, 0.6, 0.9});
  g.scale = Vec3(0.12, 0.05, 0.07);
  g.rotation = Quat(Eigen::AngleAxisd(0.6, Vec3(0.3, 0.2, 1.0).normalized()));
  GaussianCloud c;
  c.gaussians.push_back(g);
  // Analytic: alpha = sigma exp(-0.5 d^T (J W Sigma W^T J^T + 0.3 I)^-1 d), W = I.
  const Vec3 p = g.mean;
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / p.z(), 0, -cam.fx * p.x() / (p.z() * p.z()), 0, cam.fy / p.z(), -cam.fy * p.y() / (p.z() * p.z());
  const Mat3 r = g.rotation.toRotationMatrix();
  const Mat3 sigma = r * Vec3(g.scale.array().square()).asDiagonal() * r.transpose();
  const Mat2 cov = j * sigma * j.transpose() + 0.3 * Mat2::Identity();
  const Mat2 inv = cov.inverse();
  const Vec2 uv(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
  const Rgb col = evaluate_sh_color(g, 0, Vec3::UnitZ());
  for (const bool tiled : {true, false}) {
    const ImageF img = tiled ? render(c, cam, RenderMode::color()).color : render_reference(c, cam, RenderMode::color()).color;
    double worst = 0.0;
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const Vec2 d = Vec2(x + 0.5, y + 0.5) - uv;
        const double q = d.dot(inv * d);
        double a = std::min(1.0, g.opacity * std::exp(-0.5 * q));
        if (q > 9.0 || a < 1.0 / 255.0) {
          a = 0.0;
        }
        worst = std::max({worst, std::abs(img.at(x, y, 0) - a * col.r), std::abs(img.at(x, y, 1) - a * col.g),
                          std::abs(img.at(x, y, 2) - a * col.b)});
      }
    }
    o.check(worst <= 1e-6, std::string(tiled ? "tiled" : "reference") + " single-splat err " + fmt("%.3g", worst));
  }

  Camera c2;
  c2.fx = c2.fy = 10.0;
  c2.width = c2.height = 8;
  c2.cx = c2.cy = 4.5;
  GaussianCloud two;
  two.gaussians.push_back(flat(Vec3(0, 0, 3), 0.5, 0.5, {0, 1, 0}));
  two.gaussians.push_back(flat(Vec3(0, 0, 2), 0.5, 0.5, {1, 0, 0}));
  const ImageF px = render(two, c2, RenderMode::color()).color;
  o.check(px.at(4, 4, 0) == 0.5 && px.at(4, 4, 1) == 0.25 && px.at(4, 4, 2) == 0.0, "two-splat pixel not (0.5,0.25,0)");
  if (o.pass) {
    o.detail = "single splat within 1e-6 at all 1200 pixels; two-splat pixel = (0.5, 0.25, 0) exactly";
  }
  return o;
}

Outcome transform_round_trip() {
  Outcome o;
  std::mt19937_64 rng(3);
  double worst = 0.0, worst_cov = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GaussianCloud c = random_cloud(rng, 50, i % 4, 3.0);
    const RigidTransform t = random_transform(rng);
    const GaussianCloud moved = transform_cloud(c, t);
    const GaussianCloud back = transform_cloud(moved, t.inverse());
    const Mat3 rm = t.rotation.toRotationMatrix();
    for (std::size_t k = 0; k < c.size(); ++k) {
      const Gaussian& a = c.gaussians[k];
      const Gaussian& b = back.gaussians[k];
      worst = std::max(worst, (a.mean - b.mean).cwiseAbs().maxCoeff());
      worst = std::max(worst, (covariance_of(a) - covariance_of(b)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.scale - b.scale).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(a.opacity - b.opacity));
      for (std::size_t s = 0; s < a.sh.size(); ++s) {
        worst = std::max(worst, std::abs(a.sh[s] - b.sh[s]));
      }
      const Mat3 expected = rm * covariance_of(a) * rm.transpose();
      worst_cov = std::max(worst_cov, (covariance_of(moved.gaussians[k]) - expected).cwiseAbs().maxCoeff());
    }
  }
  o.check(worst <= 1e-5, "round trip err " + fmt("%.3g", worst));
  o.check(worst_cov <= 1e-6, "equivariance err " + fmt("%.3g", worst_cov));
  o.detail = "round trip max err " + fmt("%.3g", worst) + ", covariance equivariance max err " + fmt("%.3g", worst_cov) +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome sh_rotation() {
  Outcome o;
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Gaussian g = random_gaussian(rng, 3);
    const Quat q = random_quat(rng);
    const std::vector<double> rotated = rotate_sh(g.sh, q, 3);
    for (int k = 0; k < 100; ++k) {
      const Vec3 v = random_quat(rng) * Vec3::UnitZ();
      const Rgb a = evaluate_sh_color(g.sh, 3, v);
      const Rgb b = evaluate_sh_color(rotated, 3, q * v);
      worst = std::max({worst, std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
    }
  }
  o.check(worst <= 1e-5, "max colour err " + fmt("%.3g", worst));
  o.detail = "20 degree-3 lobes x 100 directions, max colour err " + fmt("%.3g", worst);
  return o;
}

Outcome extraction_fixture() {
  Outcome o;
  std::size_t wrong = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), far(10.5, 20.0);
    GaussianCloud c;
    while (c.size() < 1000) {
      const Vec3 p(u(rng), u(rng), u(rng));
      if (p.norm() <= 1.0) {
        Gaussian g;
        g.mean = p;
        c.gaussians.push_back(g);
      }
    }
    for (int i = 0; i < 50; ++i) {
      Gaussian g;
      g.mean = far(rng) * random_quat(rng).toRotationMatrix().col(0);
      c.gaussians.push_back(g);
    }
    const ExtractionResult r = extract_foreground(c);
    for (const auto& g : r.tool.gaussians) {
      wrong += g.mean.norm() > 1.0;
    }
    for (const auto& g : r.residual.gaussians) {
      wrong += g.mean.norm() <= 1.0;
    }
  }
  o.check(wrong == 0, std::to_string(wrong) + " misclassified");
  o.detail = "5 fixtures of 1000 inner + 50 outer Gaussians, " + std::to_string(wrong) + " misclassified";
  return o;
}

Outcome fusion_neutrality() {
  Outcome o;
  std::mt19937_64 rng(6);
  const GaussianCloud bg = random_cloud(rng, 400, 2, 1.5);
  GaussianCloud tool = random_cloud(rng, 60, 0, 0.5);
  for (auto& g : tool.gaussians) {
    g.opacity = 0.0;
  }
  int identical = 0;
  for (int i = 0; i < 10; ++i) {
    const Camera cam = random_camera(rng, 120, 90);
    const Image8 base = quantize(render(bg, cam, RenderMode::color()).color);
    const Image8 empty = quantize(render(fuse(bg, {}), cam, RenderMode::color()).color);
    const Image8 ghost = quantize(render(fuse(bg, {{tool, random_transform(rng, 0.5)}}), cam, RenderMode::color()).color);
    identical += (base == empty && base == ghost);
  }
  o.check(identical == 10, std::to_string(10 - identical) + " cameras differ");
  o.detail = std::to_string(identical) + "/10 cameras bit-identical after quantisation";
  return o;
}

Outcome annotation_correctness() {
  Outcome o;
  const fs::path golden = fs::path(GSYNTH_GOLDEN_DIR) / "annotation";
  JobConfig cfg = load_config(golden / "job.cfg");
  const fs::path out = temp_dir("acceptance_annotation");
  cfg.output_dir = out;
  const GenerateResult r = generate(cfg);
  std::size_t frames = 0, mismatched = 0, boxes = 0, unenclosed = 0;
  for (const auto& f : r.manifest["frames"]) {
    ++frames;
    const std::string labels = f["labels"].get<std::string>();
    if (read_file(out / labels) != read_file(golden / labels)) {
      ++mismatched;
    }
    // Every record must enclose every pixel of its component in the written mask.
    std::istringstream in(read_file(out / labels));
    std::vector<AnnotationRecord> recs;
    AnnotationRecord rec;
    while (in >> rec.class_id >> rec.x_center >> rec.y_center >> rec.width >> rec.height) {
      recs.push_back(rec);
    }
    std::size_t next = 0;
    for (const auto& [tool, mask_rel] : f["masks"].items()) {
      const Image8 png = read_png_rgb8(out / mask_rel.get<std::string>());
      Mask mask(png.width, png.height, 1);
      for (int y = 0; y < png.height; ++y) {
        for (int x = 0; x < png.width; ++x) {
          mask.at(x, y) = png.at(x, y, 0) > 127;
        }
      }
      for (const Component& comp : components(mask, cfg.min_area)) {
        if (next >= recs.size()) {
          ++unenclosed;
          continue;
        }
        const AnnotationRecord& box = recs[next++];
        ++boxes;
        int x0, y0, x1, y1;
        box.pixel_box(png.width, png.height, x0, y0, x1, y1);
        for (const PixelCoord& p : comp.pixels) {
          if (p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1) {
            ++unenclosed;
            break;
          }
        }
      }
    }
    if (next != recs.size()) {
      ++unenclosed;
    }
  }
  fs::remove_all(out);

  Component worked;
  for (int y = 10; y <= 19; ++y) {
    for (int x = 20; x <= 39; ++x) {
      worked.pixels.push_back({x, y});
    }
  }
  worked.min_x = 20;
  worked.max_x = 39;
  worked.min_y = 10;
  worked.max_y = 19;
  const std::string line = format_annotations({to_annotation(worked, 100, 100, 0)});

  o.check(frames == 50, std::to_string(frames) + " frames generated");
  o.check(mismatched == 0, std::to_string(mismatched) + " label files differ from golden");
  o.check(unenclosed == 0, std::to_string(unenclosed) + " boxes do not enclose their component");
  o.check(line == "0 0.300000 0.150000 0.200000 0.100000\n", "worked example gave '" + line + "'");
  o.detail = std::to_string(frames) + " frames, " + std::to_string(boxes) + " boxes enclose their components, " +
             std::to_string(frames - mismatched) + "/" + std::to_string(frames) +
             " label files byte-match golden, worked example exact" + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome metrics_values() {
  Outcome o;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 0.8);
  ImageF a(64, 48, 3);
  for (auto& v : a.data) {
    v = u(rng);
  }
  ImageF b = a;
  for (auto& v : b.data) {
    v += 0.1;
  }
  const double p = psnr(a, b);
  ImageF c1(32, 32, 3), c2(32, 32, 3);
  std::fill(c1.data.begin(), c1.data.end(), 0.2);
  std::fill(c2.data.begin(), c2.data.end(), 0.8);
  const double s = ssim(c1, c2);
  const bool inf_ok = std::isinf(psnr(a, a)) && format_psnr(psnr(a, a)) == "inf";
  const bool one_ok = std::abs(ssim(a, a) - 1.0) < 1e-12;
  const QualityReport rep = summarize({{"same", psnr(a, a), ssim(a, a)}, {"offset", p, ssim(a, b)}});
  o.check(std::abs(p - 20.0) <= 1e-9, "PSNR " + fmt("%.12f", p));
  o.check(std::abs(s - 0.4707) <= 1e-4, "SSIM " + fmt("%.6f", s));
  o.check(inf_ok && one_ok && rep.infinite_psnr_count == 1 && rep.mean_psnr == p, "identical-pair sentinels");
  o.detail = "PSNR " + fmt("%.12f", p) + " dB, constant-image SSIM " + fmt("%.6f", s) +
             ", identical pair -> inf / 1.0 (excluded from PSNR mean)" + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome ply_interop() {
  Outcome o;
  const fs::path dir = temp_dir("acceptance_ply");
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int degree = 0; degree <= 3; ++degree) {
    const GaussianCloud c = random_cloud(rng, 200, degree, 4.0);
    save_ply(c, dir / "a.ply");
    const GaussianCloud first = load_ply(dir / "a.ply");
    save_ply(first, dir / "b.ply");
    const GaussianCloud second = load_ply(dir / "b.ply");
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Gaussian& x = first.gaussians[i];
      const Gaussian& y = second.gaussians[i];
      worst = std::max({worst, (x.mean - y.mean).cwiseAbs().maxCoeff(), (x.scale - y.scale).cwiseAbs().maxCoeff(),
                        (x.rotation.coeffs() - y.rotation.coeffs()).cwiseAbs().maxCoeff(),
                        std::abs(x.opacity - y.opacity)});
      for (std::size_t k = 0; k < x.sh.size(); ++k) {
        worst = std::max(worst, std::abs(x.sh[k] - y.sh[k]));
      }
    }
  }
  o.check(worst <= 1e-6, "round trip err " + fmt("%.3g", worst));

  std::string expected = "ply\nformat binary_little_endian 1.0\nelement vertex 200\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
    expected += std::string("property float ") + p + "\n";
  }
  for (int i = 0; i < 45; ++i) {
    expected += "property float f_rest_" + std::to_string(i) + "\n";
  }
  for (const char* p : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    expected += std::string("property float ") + p + "\n";
  }
  expected += "end_header\n";
  const std::string bytes = read_file(dir / "b.ply");
  o.check(bytes.compare(0, expected.size(), expected) == 0, "degree-3 header differs from reference layout");
  o.check(bytes.size() == expected.size() + 200 * 62 * 4, "payload size");
  fs::remove_all(dir);
  o.detail = "load.save.load max err " + fmt("%.3g", worst) + " over degrees 0-3; degree-3 header matches golden" +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome determinism_and_performance() {
  Outcome o;
  const fs::path dir = temp_dir("acceptance_perf");
  std::mt19937_64 rng(10);
  save_ply(make_background(rng, 49000, 1, 1.5, 0.008, 0.03), dir / "bg.ply");
  save_ply(make_tool_checkpoint(rng, 1000, 0, 1), dir / "tool.ply");
  std::ofstream(dir / "job.cfg") << "background_ply = bg.ply\n"
                                    "tool.1.ply = tool.ply\n"
                                    "tool.1.extract = false\n"
                                    "orbit.n = 100\n"
                                    "orbit.radius = 1.5\n"
                                    "orbit.elevation_deg = 30\n"
                                    "jitter.translation = 0.05\n"
                                    "jitter.rotation_deg = 15\n"
                                    "seed = 11\n";
  JobConfig cfg = load_config(dir / "job.cfg");
  cfg.output_dir = dir / "run1";
  auto t0 = Clock::now();
  const GenerateResult first = generate(cfg);
  const double job_secs = seconds_since(t0);
  cfg.output_dir = dir / "run2";
  const GenerateResult second = generate(cfg);

  std::size_t differing = 0, compared = 0;
  for (const auto& f : first.manifest["frames"]) {
    std::vector<std::string> files{f["image"].get<std::string>(), f["labels"].get<std::string>()};
    for (const auto& [tool, m] : f["masks"].items()) {
      files.push_back(m.get<std::string>());
    }
    for (const auto& rel : files) {
      ++compared;
      differing += read_file(dir / "run1" / rel) != read_file(dir / "run2" / rel);
    }
  }
  const bool manifest_same =
      manifest_without_timings(first.manifest).dump() == manifest_without_timings(second.manifest).dump();
  const std::size_t total = first.manifest["frames"][0]["gaussians"]["total"].get<std::size_t>();

  // Tiled vs reference on frame 0 of the same fused scene.
  const GaussianCloud bg = load_ply(cfg.background_ply);
  const PreparedTool tool = prepare_tool(cfg.tools[0]);
  const auto frames = orbit_frames(cfg);
  RigidTransform pose = frames[0].tool_poses[0].pose;
  pose.pivot = tool.pivot;
  const CompositeScene scene = fuse(bg, {{tool.cloud, pose, 1}});
  t0 = Clock::now();
  const RenderOutput tiled = render(scene, frames[0].camera, RenderMode::color());
  const double tiled_secs = seconds_since(t0);
  t0 = Clock::now();
  const RenderOutput ref = render_reference(scene, frames[0].camera, RenderMode::color());
  const double ref_secs = seconds_since(t0);
  const double speedup = ref_secs / tiled_secs;
  fs::remove_all(dir);

  o.check(first.rendered == 100 && second.rendered == 100, "not all frames rendered");
  o.check(differing == 0, std::to_string(differing) + " of " + std::to_string(compared) + " files differ");
  o.check(manifest_same, "manifests differ beyond timings");
  o.check(total == 50000, "scene has " + std::to_string(total) + " gaussians");
  o.check(job_secs < 600.0, "job took " + fmt("%.1f s", job_secs));
  o.check(speedup >= 5.0, "speedup " + fmt("%.1fx", speedup));
  o.check(max_abs_diff(tiled.color, ref.color) <= 1e-5, "tiled and reference disagree");
  o.detail = "2x100 frames 640x480, " + std::to_string(total) + " gaussians: " + std::to_string(compared) +
             " files + manifest byte-identical, job " + fmt("%.1f s", job_secs) + " on " +
             std::to_string(default_thread_count()) + " thread(s); tiled " + fmt("%.3f s", tiled_secs) +
             " vs reference " + fmt("%.1f s", ref_secs) + " (" + fmt("%.0fx", speedup) + ")" +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"closed-form render checks", closed_form_render},
      {"transform round trip", transform_round_trip},
      {"SH rotation", sh_rotation},
      {"extraction fixture", extraction_fixture},
      {"fusion neutrality", fusion_neutrality},
      {"annotation correctness", annotation_correctness},
      {"metrics", metrics_values},
      {"PLY interoperability", ply_interop},
      {"end-to-end determinism and performance", determinism_and_performance},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
