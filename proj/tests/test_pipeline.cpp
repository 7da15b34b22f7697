#include "scene_fixture.hpp"

#include <gtest/gtest.h>

using namespace gsynth;
using namespace gsynth::testing;
namespace fs = std::filesystem;

TEST(Orbit, SingleCameraLooksAtTarget) {
  Intrinsics k;
  const Vec3 target(0.5, -0.2, 1.0);
  const double r = 2.0, e = 0.4;
  const auto cams = sample_orbit(1, r, e, target, k);
  ASSERT_EQ(cams.size(), 1u);
  const Vec3 expected = target + Vec3(r * std::cos(e), 0.0, r * std::sin(e));
  EXPECT_LT((cams[0].position() - expected).norm(), 1e-9);
  const Vec3 forward = cams[0].rotation_matrix().row(2).transpose();
  EXPECT_NEAR(forward.dot((target - expected).normalized()), 1.0, 1e-9);
  // Target projects to the principal point.
  const Vec3 p = cams[0].to_camera(target);
  EXPECT_NEAR(k.fx * p.x() / p.z() + k.cx, k.cx, 1e-9);
  EXPECT_NEAR(k.fy * p.y() / p.z() + k.cy, k.cy, 1e-9);
}

TEST(Orbit, EvenAzimuthsOnSphere) {
  Intrinsics k;
  const auto cams = sample_orbit(4, 3.0, 0.0, Vec3::Zero(), k);
  ASSERT_EQ(cams.size(), 4u);
  const Vec3 expected[4] = {{3, 0, 0}, {0, 3, 0}, {-3, 0, 0}, {0, -3, 0}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT((cams[i].position() - expected[i]).norm(), 1e-9) << i;
  }
  std::mt19937_64 rng(1);
  for (const auto& c : sample_orbit(17, 1.7, 0.9, Vec3(1, 2, 3), k)) {
    EXPECT_NEAR((c.position() - Vec3(1, 2, 3)).norm(), 1.7, 1e-9);
    const Mat3 r = c.rotation_matrix();
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    // World up maps to image "up" (negative y): the horizon is level.
    EXPECT_LT((r * Vec3::UnitZ()).y(), 0.0);
  }
}

TEST(Orbit, Errors) {
  Intrinsics k;
  EXPECT_THROW(sample_orbit(0, 1.0, 0.0, Vec3::Zero(), k), ParameterError);
  EXPECT_THROW(sample_orbit(3, 0.0, 0.0, Vec3::Zero(), k), ParameterError);
  EXPECT_THROW(sample_orbit(3, 1.0, std::numbers::pi / 2, Vec3::Zero(), k), ParameterError);
}

TEST(Trajectory, RoundTrip) {
  std::mt19937_64 rng(2);
  std::vector<FrameSpec> frames;
  for (std::uint64_t i = 0; i < 10; ++i) {
    FrameSpec f;
    f.frame_id = i * 7 + 3;
    f.camera = random_camera(rng, 64 + static_cast<int>(i), 48);
    for (Label t = 1; t <= i % 3; ++t) {
      f.tool_poses.push_back({t, random_transform(rng)});
    }
    frames.push_back(f);
  }
  const auto dir = temp_dir("trajectory_rt");
  save_trajectory(frames, dir / "t.txt");
  const auto back = load_trajectory(dir / "t.txt");
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& a = frames[i];
    const auto& b = back[i];
    EXPECT_EQ(a.frame_id, b.frame_id);
    EXPECT_EQ(a.camera.width, b.camera.width);
    EXPECT_NEAR(a.camera.fx, b.camera.fx, 1e-9);
    EXPECT_LT((a.camera.rotation.coeffs() - b.camera.rotation.coeffs()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((a.camera.translation - b.camera.translation).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_EQ(a.tool_poses.size(), b.tool_poses.size());
    for (std::size_t t = 0; t < a.tool_poses.size(); ++t) {
      EXPECT_EQ(a.tool_poses[t].tool_id, b.tool_poses[t].tool_id);
      EXPECT_LT((a.tool_poses[t].pose.translation - b.tool_poses[t].pose.translation).norm(), 1e-9);
      EXPECT_LT((a.tool_poses[t].pose.rotation.coeffs() - b.tool_poses[t].pose.rotation.coeffs()).norm(), 1e-9);
    }
  }
  fs::remove_all(dir);
}

TEST(Trajectory, IdentityRecordAndComments) {
  std::istringstream in("# header\n\n5 500 500 320 240 640 480 1 0 0 0 0 0 0 | 1 1 0 0 0 0 0 0\n");
  const auto frames = parse_trajectory(in);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].frame_id, 5u);
  EXPECT_EQ(frames[0].camera.rotation.w(), 1.0);
  EXPECT_EQ(frames[0].camera.translation, Vec3::Zero());
  ASSERT_EQ(frames[0].tool_poses.size(), 1u);
  EXPECT_EQ(frames[0].tool_poses[0].pose.translation, Vec3::Zero());
  std::istringstream empty("");
  EXPECT_TRUE(parse_trajectory(empty).empty());
}

TEST(Trajectory, ErrorsNameTheLine) {
  auto message = [](const std::string& text, std::optional<std::set<Label>> known = std::nullopt) {
    std::istringstream in(text);
    try {
      parse_trajectory(in, "traj.txt", known);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string good = "0 500 500 320 240 640 480 1 0 0 0 0 0 0\n";
  EXPECT_NE(message(good + "1 500 500 320 240 640 480 1 0 0\n").find("traj.txt:2"), std::string::npos);
  EXPECT_NE(message(good + good).find("duplicate"), std::string::npos);
  EXPECT_NE(message("0 500 500 320 240 640 480 0 0 0 0 0 0 0\n").find("traj.txt:1"), std::string::npos);
  EXPECT_NE(message("0 500 abc 320 240 640 480 1 0 0 0 0 0 0\n").find("fy"), std::string::npos);
  std::istringstream unknown("0 500 500 320 240 640 480 1 0 0 0 0 0 0 | 4 1 0 0 0 0 0 0\n");
  EXPECT_THROW(parse_trajectory(unknown, "t", std::set<Label>{1, 2}), ConfigError);
}

TEST(Config, ParsesKeysAndResolvesPaths) {
  std::istringstream in(
      "# job\n"
      "background_ply = scene/bg.ply\n"
      "tool.1.ply = /abs/tool.ply\n"
      "tool.1.color = 1 0 0\n"
      "tool.1.pose = 1 0 0 0 0.1 0.2 0.3\n"
      "tool.1.extraction.knn_k = 5\n"
      "extraction.radius_percentile = 90\n"
      "orbit.n = 12\n"
      "orbit.radius = 2.5\n"
      "orbit.elevation_deg = 30\n"
      "camera.width = 320\n"
      "seed = 7\n");
  const JobConfig cfg = config_from_map(parse_config_text(in), "/base");
  EXPECT_EQ(cfg.background_ply, fs::path("/base/scene/bg.ply"));
  ASSERT_EQ(cfg.tools.size(), 1u);
  EXPECT_EQ(cfg.tools[0].ply, fs::path("/abs/tool.ply"));
  EXPECT_EQ(cfg.tools[0].extraction.knn_k, 5);
  EXPECT_EQ(cfg.tools[0].extraction.radius_percentile, 90.0);
  EXPECT_EQ(*cfg.tools[0].label_color, (Rgb{1, 0, 0}));
  EXPECT_EQ(cfg.tools[0].pose.translation, Vec3(0.1, 0.2, 0.3));
  ASSERT_TRUE(cfg.orbit);
  EXPECT_EQ(cfg.orbit->n, 12);
  EXPECT_NEAR(cfg.orbit->elevation, std::numbers::pi / 6, 1e-15);
  EXPECT_EQ(cfg.intrinsics.width, 320);
  EXPECT_EQ(cfg.seed, 7u);
}

TEST(Config, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return config_from_map(parse_config_text(in));
  };
  EXPECT_THROW(parse("background_ply = a.ply\norbit.n = 3\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse("orbit.n = 3\n"), ConfigError);
  EXPECT_THROW(parse("background_ply = a.ply\n"), ConfigError);
  EXPECT_THROW(parse("background_ply = a.ply\norbit.n = 3\ntrajectory = t.txt\n"), ConfigError);
  EXPECT_THROW(parse("background_ply = a.ply\norbit.n = 3\nthreshold = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("background_ply = a.ply\norbit.n = 3\ntool.0.ply = x.ply\n"), ConfigError);
  EXPECT_THROW(parse("background_ply = a.ply\norbit.n = 3\ntool.1.color = 1 0\n"), ConfigError);
  EXPECT_THROW(parse("no equals sign\n"), ConfigError);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return config_from_map(parse_config_text(in));
  };
  const std::string base = "background_ply = a.ply\norbit.n = 3\n";
  const auto a = canonical_config(parse(base + "output_dir = x\n"));
  const auto b = canonical_config(parse(base + "output_dir = y\n"));
  const auto c = canonical_config(parse(base + "seed = 1\n"));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

class GenerateTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = temp_dir(std::string("gen_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::mt19937_64 rng(77);
    save_ply(make_background(rng, 3000), dir_ / "bg.ply");
    save_ply(make_tool_checkpoint(rng, 600, 30), dir_ / "tool.ply");
    cfg_.background_ply = dir_ / "bg.ply";
    ToolConfig t;
    t.id = 1;
    t.ply = dir_ / "tool.ply";
    cfg_.tools.push_back(t);
    OrbitConfig o;
    o.n = 4;
    o.radius = 1.5;
    o.elevation = 0.5;
    cfg_.orbit = o;
    cfg_.intrinsics.width = 96;
    cfg_.intrinsics.height = 72;
    cfg_.intrinsics.fx = cfg_.intrinsics.fy = 90;
    cfg_.intrinsics.cx = 48;
    cfg_.intrinsics.cy = 36;
    cfg_.output_dir = dir_ / "out";
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  JobConfig cfg_;
};

TEST_F(GenerateTest, WritesLayoutAndManifest) {
  const GenerateResult r = generate(cfg_);
  EXPECT_EQ(r.rendered, 4u);
  const auto& m = r.manifest;
  EXPECT_EQ(m["frame_count"], 4);
  EXPECT_EQ(m["partial"], false);
  EXPECT_EQ(m["background_gaussians"], 3000);
  EXPECT_EQ(m["tools"][0]["source_gaussians"], 630);
  EXPECT_EQ(m["tools"][0]["extracted_gaussians"], 600);
  for (int i = 0; i < 4; ++i) {
    const auto& f = m["frames"][i];
    EXPECT_EQ(f["status"], "complete");
    EXPECT_TRUE(fs::exists(cfg_.output_dir / f["image"].get<std::string>()));
    EXPECT_TRUE(fs::exists(cfg_.output_dir / f["masks"]["1"].get<std::string>()));
    EXPECT_EQ(f["gaussians"]["total"], 3600);
    // The tool sits at the orbit target, so every frame sees it.
    EXPECT_GE(f["annotations"].get<int>(), 1);
    const Image8 img = read_png_rgb8(cfg_.output_dir / f["image"].get<std::string>());
    EXPECT_EQ(img.width, 96);
    EXPECT_EQ(img.height, 72);
  }
  const std::string labels = read_file(cfg_.output_dir / "labels" / "0.txt");
  EXPECT_EQ(labels.substr(0, 2), "0 ");
  EXPECT_TRUE(fs::exists(cfg_.output_dir / "manifest.json"));
}

TEST_F(GenerateTest, ZeroFrameTrajectory) {
  cfg_.orbit.reset();
  std::ofstream(dir_ / "empty.txt") << "# nothing\n";
  cfg_.trajectory = dir_ / "empty.txt";
  const GenerateResult r = generate(cfg_);
  EXPECT_EQ(r.manifest["frame_count"], 0);
  EXPECT_TRUE(fs::is_empty(cfg_.output_dir / "images"));
}

TEST_F(GenerateTest, ToolBehindCameraGivesBackgroundOnly) {
  cfg_.orbit.reset();
  Intrinsics k = cfg_.intrinsics;
  const Camera cam = look_at(Vec3(2, 0, 1), Vec3::Zero(), Vec3::UnitZ(), k);
  FrameSpec f;
  f.camera = cam;
  RigidTransform pose;
  pose.translation = cam.position() + (cam.position() - Vec3::Zero()).normalized();
  f.tool_poses.push_back({1, pose});
  save_trajectory({f}, dir_ / "t.txt");
  cfg_.trajectory = dir_ / "t.txt";
  generate(cfg_);
  EXPECT_EQ(fs::file_size(cfg_.output_dir / "labels" / "0.txt"), 0u);
  const Image8 img = read_png_rgb8(cfg_.output_dir / "images" / "0.png");
  RenderOptions opt;
  const Image8 bg = quantize(render(load_ply(dir_ / "bg.ply"), cam, RenderMode::color(), opt).color);
  EXPECT_EQ(img.data, bg.data);
}

TEST_F(GenerateTest, DeterministicAcrossRuns) {
  cfg_.jitter_translation = 0.05;
  cfg_.jitter_rotation_deg = 10;
  cfg_.seed = 3;
  const auto first = generate(cfg_).manifest;
  const fs::path a = cfg_.output_dir;
  cfg_.output_dir = dir_ / "second";
  cfg_.threads = 3;
  const auto second = generate(cfg_).manifest;
  EXPECT_EQ(manifest_without_timings(first).dump(), manifest_without_timings(second).dump());
  for (const auto& f : first["frames"]) {
    for (const std::string rel : {f["image"].get<std::string>(), f["labels"].get<std::string>(),
                                  f["masks"]["1"].get<std::string>()}) {
      EXPECT_EQ(read_file(a / rel), read_file(cfg_.output_dir / rel)) << rel;
    }
  }
  cfg_.seed = 4;
  cfg_.output_dir = dir_ / "third";
  const auto third = generate(cfg_).manifest;
  EXPECT_NE(first["config_hash"], third["config_hash"]);
}

TEST_F(GenerateTest, ResumeSkipsCompletedFrames) {
  generate(cfg_);
  fs::remove(cfg_.output_dir / "images" / "2.png");
  GenerateOptions opts;
  opts.resume = true;
  const GenerateResult r = generate(cfg_, opts);
  EXPECT_EQ(r.skipped, 3u);
  EXPECT_EQ(r.rendered, 1u);
  EXPECT_TRUE(fs::exists(cfg_.output_dir / "images" / "2.png"));
  cfg_.seed = 99;
  EXPECT_EQ(generate(cfg_, opts).skipped, 0u);
}

TEST_F(GenerateTest, FailingFrameAbortsOrIsRecorded) {
  // A directory squatting on frame 1's image path makes that frame's write fail.
  fs::create_directories(cfg_.output_dir / "images" / "1.png");
  try {
    generate(cfg_);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1 failed"), std::string::npos) << e.what();
  }
  GenerateOptions opts;
  opts.keep_going = true;
  const GenerateResult r = generate(cfg_, opts);
  EXPECT_EQ(r.rendered, 3u);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_EQ(r.manifest["partial"], true);
  EXPECT_EQ(r.manifest["frames"][1]["status"], "failed");
  EXPECT_EQ(r.manifest["frames"][2]["status"], "complete");
}

TEST_F(GenerateTest, PreparationErrorsPropagate) {
  GaussianCloud tiny;
  tiny.gaussians.resize(3);
  save_ply(tiny, dir_ / "tool.ply");
  EXPECT_THROW(generate(cfg_), ParameterError);
}
