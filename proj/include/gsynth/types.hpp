#pragma once

#include <gsynth/error.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gsynth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Highest spherical harmonics degree carried by a checkpoint.
inline constexpr int kMaxShDegree = 3;

/// Number of SH basis functions for degree `degree`: (d+1)^2.
constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Scalar SH coefficients per Gaussian (three colour channels).
constexpr int sh_coeff_count(int degree) { return 3 * sh_basis_count(degree); }

using Label = std::uint32_t;
inline constexpr Label kBackgroundLabel = 0;

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// One splat primitive.
///
/// `sh` holds 3*(d+1)^2 coefficients interleaved per basis function:
/// sh[3*b + c] is channel c of basis b. Basis 0 is the view-independent
/// (DC) colour term.
struct Gaussian {
  Vec3 mean = Vec3::Zero();
  Quat rotation = Quat::Identity();
  Vec3 scale = Vec3::Ones();
  double opacity = 1.0;
  std::vector<double> sh = std::vector<double>(3, 0.0);
  Label label = kBackgroundLabel;

  double sh_at(int basis, int channel) const { return sh[static_cast<std::size_t>(3 * basis + channel)]; }
  double& sh_at(int basis, int channel) { return sh[static_cast<std::size_t>(3 * basis + channel)]; }
};

/// Throws InvalidPrimitiveError when `g` breaks a Gaussian invariant for degree `sh_degree`.
inline void validate(const Gaussian& g, int sh_degree) {
  if (!g.mean.allFinite()) {
    throw InvalidPrimitiveError("gaussian mean is not finite");
  }
  if (!g.scale.allFinite() || (g.scale.array() <= 0.0).any()) {
    throw InvalidPrimitiveError("gaussian scale must be finite and strictly positive");
  }
  if (!g.rotation.coeffs().allFinite() || std::abs(g.rotation.norm() - 1.0) > 1e-6) {
    throw InvalidPrimitiveError("gaussian rotation is not a unit quaternion");
  }
  if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
    throw InvalidPrimitiveError("gaussian opacity outside [0,1]");
  }
  if (static_cast<int>(g.sh.size()) != sh_coeff_count(sh_degree)) {
    throw InvalidPrimitiveError("gaussian carries " + std::to_string(g.sh.size()) +
                                " SH coefficients, expected " + std::to_string(sh_coeff_count(sh_degree)));
  }
}

/// Ordered collection of Gaussians sharing one SH degree. Storage order is
/// the iteration order and is used for deterministic tie-breaking.
struct GaussianCloud {
  std::vector<Gaussian> gaussians;
  int sh_degree = 0;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  void validate() const {
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
      throw InvalidPrimitiveError("SH degree " + std::to_string(sh_degree) + " outside [0,3]");
    }
    for (const auto& g : gaussians) {
      gsynth::validate(g, sh_degree);
    }
  }
};

/// Returns a copy of `q` with unit norm; a zero or non-finite quaternion is an error.
inline Quat normalized_or_throw(const Quat& q) {
  const double n = q.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw InvalidPrimitiveError("degenerate quaternion (zero or non-finite norm)");
  }
  return Quat(q.coeffs() / n);
}

/// Rigid motion x -> R (x - pivot) + pivot + translation.
struct RigidTransform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();
  Vec3 pivot = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

  Vec3 apply(const Vec3& x) const { return rotation * (x - pivot) + pivot + translation; }

  /// Equivalent affine offset b such that apply(x) = R x + b.
  Vec3 offset() const { return pivot - rotation * pivot + translation; }

  RigidTransform inverse() const {
    // x = R^T (y - (pivot + t)) + (pivot + t) - t
    return {rotation.conjugate(), -translation, pivot + translation};
  }

  /// (outer * inner).apply(x) == outer.apply(inner.apply(x)); the result has a zero pivot.
  friend RigidTransform operator*(const RigidTransform& outer, const RigidTransform& inner) {
    RigidTransform out;
    out.rotation = (outer.rotation * inner.rotation).normalized();
    out.translation = outer.rotation * inner.offset() + outer.offset();
    return out;
  }
};

/// Pinhole camera with an OpenCV-style frame (x right, y down, z forward).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  /// World -> camera. Only rotation and translation are used (pivot ignored).
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();
  double near = 0.01;

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  /// Camera centre in world coordinates.
  Vec3 position() const { return -(rotation.conjugate() * translation); }

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) {
      throw ParameterError("camera focal lengths must be positive");
    }
    if (width < 1 || height < 1) {
      throw ParameterError("camera image size must be at least 1x1");
    }
    if (!(near > 0.0)) {
      throw ParameterError("camera near plane must be positive");
    }
    const Mat3 r = rotation_matrix();
    if (!(r * r.transpose()).isApprox(Mat3::Identity(), 1e-6) || std::abs(rotation.norm() - 1.0) > 1e-6) {
      throw ParameterError("camera rotation is not orthonormal");
    }
  }
};

/// Sigma = R S S^T R^T.
inline Mat3 covariance_of(const Gaussian& g) {
  if (!g.scale.allFinite() || (g.scale.array() <= 0.0).any()) {
    throw InvalidPrimitiveError("covariance_of: scale must be finite and positive");
  }
  const double n = g.rotation.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw InvalidPrimitiveError("covariance_of: degenerate quaternion");
  }
  const Mat3 r = Quat(g.rotation.coeffs() / n).toRotationMatrix();
  const Mat3 rs = r * g.scale.asDiagonal();
  const Mat3 cov = rs * rs.transpose();
  return 0.5 * (cov + cov.transpose());
}

} // namespace gsynth
