#pragma once

#include "test_helpers.hpp"

namespace gsynth::testing {

// Per-pixel compositing written directly from the blending definition, with
// no bounding boxes, tiles or shared helpers.
inline ImageF naive_render(const GaussianCloud& cloud, const Camera& cam, const Rgb& bg) {
  struct Item {
    double depth;
    std::size_t index;
    Vec2 uv;
    Mat2 inv;
    Rgb color;
    double opacity;
  };
  std::vector<Item> items;
  const Mat3 w = cam.rotation.toRotationMatrix();
  const Vec3 eye = -(w.transpose() * cam.translation);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    const Vec3 p = w * g.mean + cam.translation;
    if (p.z() <= cam.near) {
      continue;
    }
    Eigen::Matrix<double, 2, 3> j = Eigen::Matrix<double, 2, 3>::Zero();
    j(0, 0) = cam.fx / p.z();
    j(0, 2) = -cam.fx * p.x() / (p.z() * p.z());
    j(1, 1) = cam.fy / p.z();
    j(1, 2) = -cam.fy * p.y() / (p.z() * p.z());
    const Mat3 r = g.rotation.normalized().toRotationMatrix();
    const Mat3 s = g.scale.asDiagonal();
    const Mat3 sigma = r * s * s * r.transpose();
    Mat2 cov = j * w * sigma * w.transpose() * j.transpose();
    cov(0, 0) += 0.3;
    cov(1, 1) += 0.3;
    const Vec2 uv(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
    const Vec3 dir = (g.mean - eye).normalized();
    items.push_back({p.z(), i, uv, cov.inverse(), evaluate_sh_color(g, cloud.sh_degree, dir), g.opacity});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
  });
  ImageF img(cam.width, cam.height, 3);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0;
      double c[3] = {0, 0, 0};
      for (const Item& it : items) {
        const Vec2 d = Vec2(x + 0.5, y + 0.5) - it.uv;
        const double q = d.dot(it.inv * d);
        if (q > 9.0) {
          continue;
        }
        const double a = std::min(1.0, it.opacity * std::exp(-0.5 * q));
        if (a < 1.0 / 255.0) {
          continue;
        }
        c[0] += a * t * it.color.r;
        c[1] += a * t * it.color.g;
        c[2] += a * t * it.color.b;
        t *= 1.0 - a;
        if (t < 1e-4) {
          break;
        }
      }
      img.at(x, y, 0) = c[0] + t * bg.r;
      img.at(x, y, 1) = c[1] + t * bg.g;
      img.at(x, y, 2) = c[2] + t * bg.b;
    }
  }
  return img;
}

} // namespace gsynth::testing
