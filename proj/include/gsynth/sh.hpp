#pragma once

#include <gsynth/error.hpp>
#include <gsynth/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace gsynth {

// Real SH constants in the sign convention used by standard 3DGS checkpoints.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525251999,
                                                -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                                0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                                -0.5900435899266435};

/// Colour offset added after SH evaluation (checkpoint convention).
inline constexpr double kShColorOffset = 0.5;

/// Evaluates all (degree+1)^2 real SH basis functions at unit direction `d`.
inline std::array<double, 16> sh_basis(const Vec3& d, int degree) {
  std::array<double, 16> y{};
  y[0] = kShC0;
  if (degree < 1) {
    return y;
  }
  const double x = d.x();
  const double yy_ = d.y();
  const double z = d.z();
  y[1] = -kShC1 * yy_;
  y[2] = kShC1 * z;
  y[3] = -kShC1 * x;
  if (degree < 2) {
    return y;
  }
  const double xx = x * x;
  const double yy = yy_ * yy_;
  const double zz = z * z;
  const double xy = x * yy_;
  const double yz = yy_ * z;
  const double xz = x * z;
  y[4] = kShC2[0] * xy;
  y[5] = kShC2[1] * yz;
  y[6] = kShC2[2] * (2.0 * zz - xx - yy);
  y[7] = kShC2[3] * xz;
  y[8] = kShC2[4] * (xx - yy);
  if (degree < 3) {
    return y;
  }
  y[9] = kShC3[0] * yy_ * (3.0 * xx - yy);
  y[10] = kShC3[1] * xy * z;
  y[11] = kShC3[2] * yy_ * (4.0 * zz - xx - yy);
  y[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  y[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
  y[14] = kShC3[5] * z * (xx - yy);
  y[15] = kShC3[6] * x * (xx - 3.0 * yy);
  return y;
}

/// Unclamped colour 0.5 + sum_b Y_b(d) sh_b.
inline Rgb evaluate_sh_raw(std::span<const double> sh, int degree, const Vec3& view_dir) {
  const auto y = sh_basis(view_dir, degree);
  double acc[3] = {0.0, 0.0, 0.0};
  const int n = sh_basis_count(degree);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) {
      acc[c] += y[static_cast<std::size_t>(b)] * sh[static_cast<std::size_t>(3 * b + c)];
    }
  }
  return {acc[0] + kShColorOffset, acc[1] + kShColorOffset, acc[2] + kShColorOffset};
}

inline Rgb clamp01(const Rgb& c) {
  return {std::clamp(c.r, 0.0, 1.0), std::clamp(c.g, 0.0, 1.0), std::clamp(c.b, 0.0, 1.0)};
}

inline Rgb evaluate_sh_color(std::span<const double> sh, int degree, const Vec3& view_dir) {
  return clamp01(evaluate_sh_raw(sh, degree, view_dir));
}

/// Colour of `g` seen along unit `view_dir`, for a cloud of SH degree `degree`.
inline Rgb evaluate_sh_color(const Gaussian& g, int degree, const Vec3& view_dir) {
  return evaluate_sh_color(std::span<const double>(g.sh), degree, view_dir);
}

/// DC coefficient whose evaluation reproduces `value` exactly (0.5 + C0 * dc == value).
inline double dc_for_color(double value) {
  double dc = (value - kShColorOffset) / kShC0;
  for (int step = 0; step < 8; ++step) {
    const double got = kShColorOffset + kShC0 * dc;
    if (got == value) {
      break;
    }
    dc = std::nextafter(dc, got < value ? HUGE_VAL : -HUGE_VAL);
  }
  return dc;
}

namespace detail {

// Directions used to fit the per-band rotation matrices. Fibonacci sphere
// points give a well-conditioned basis matrix for every band up to 3.
inline const std::vector<Vec3>& sh_fit_directions() {
  static const std::vector<Vec3> dirs = [] {
    constexpr int count = 32;
    constexpr double golden = 2.39996322972865332;
    std::vector<Vec3> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      const double t = (i + 0.5) / count;
      const double z = 1.0 - 2.0 * t;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * i;
      out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return out;
  }();
  return dirs;
}

} // namespace detail

/// Per-band matrices M_l with Y_l(R^T w) = M_l Y_l(w). Each band of real SH
/// spans a rotation-invariant subspace, so M_l is recovered exactly (to
/// round-off) from a least-squares fit over sample directions.
inline std::array<Eigen::MatrixXd, 4> sh_band_rotations(const Mat3& rotation, int degree) {
  std::array<Eigen::MatrixXd, 4> out;
  out[0] = Eigen::MatrixXd::Identity(1, 1);
  const auto& dirs = detail::sh_fit_directions();
  const Mat3 rt = rotation.transpose();
  const int n = static_cast<int>(dirs.size());
  for (int l = 1; l <= degree; ++l) {
    const int m = 2 * l + 1;
    const int first = l * l;
    Eigen::MatrixXd a(m, n);
    Eigen::MatrixXd b(m, n);
    for (int k = 0; k < n; ++k) {
      const auto y = sh_basis(dirs[static_cast<std::size_t>(k)], l);
      const auto yr = sh_basis(rt * dirs[static_cast<std::size_t>(k)], l);
      for (int i = 0; i < m; ++i) {
        a(i, k) = y[static_cast<std::size_t>(first + i)];
        b(i, k) = yr[static_cast<std::size_t>(first + i)];
      }
    }
    // M A = B  =>  A^T M^T = B^T
    out[static_cast<std::size_t>(l)] =
        a.transpose().colPivHouseholderQr().solve(b.transpose()).transpose();
  }
  return out;
}

/// Applies precomputed band matrices to one coefficient array in place.
inline void apply_sh_rotation(std::span<double> sh, int degree, const std::array<Eigen::MatrixXd, 4>& bands) {
  std::array<double, 7> tmp{};
  for (int l = 1; l <= degree; ++l) {
    const auto& mat = bands[static_cast<std::size_t>(l)];
    const int m = 2 * l + 1;
    const int first = l * l;
    for (int c = 0; c < 3; ++c) {
      // f'(w) = sum_i c_i Y_i(R^T w) = sum_j (sum_i c_i M_ij) Y_j(w)
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) {
          acc += sh[static_cast<std::size_t>(3 * (first + i) + c)] * mat(i, j);
        }
        tmp[static_cast<std::size_t>(j)] = acc;
      }
      for (int j = 0; j < m; ++j) {
        sh[static_cast<std::size_t>(3 * (first + j) + c)] = tmp[static_cast<std::size_t>(j)];
      }
    }
  }
}

/// Rotates SH coefficients so that the rotated lobe seen along R v equals the
/// original lobe seen along v. Band 0 is untouched.
inline std::vector<double> rotate_sh(std::span<const double> sh, const Quat& rotation, int degree) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw ParameterError("rotate_sh: unsupported SH degree " + std::to_string(degree));
  }
  if (static_cast<int>(sh.size()) != sh_coeff_count(degree)) {
    throw ParameterError("rotate_sh: coefficient count does not match degree");
  }
  std::vector<double> out(sh.begin(), sh.end());
  if (degree == 0 || rotation.vec().isZero(0.0)) {
    return out;
  }
  apply_sh_rotation(out, degree, sh_band_rotations(rotation.normalized().toRotationMatrix(), degree));
  return out;
}

} // namespace gsynth
