#pragma once

#include <gsynth/error.hpp>
#include <gsynth/image.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace gsynth {

/// Peak signal-to-noise ratio with peak 1.0 over all channels; +inf when identical.
inline double psnr(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b)) {
    throw ParameterError("psnr: image dimensions differ");
  }
  if (a.data.empty()) {
    throw ParameterError("psnr: empty image");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(1.0 / mse);
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - c;
    k[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) {
    v /= sum;
  }
  return k;
}

/// Separable 'valid' filtering of one channel: output is (w-k+1) x (h-k+1).
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += k[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y * w + x + i)];
      }
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      }
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

} // namespace detail

/// Mean SSIM over all valid window positions, computed per channel and averaged.
inline double ssim(const ImageF& a, const ImageF& b, const SsimParams& p = {}) {
  if (!a.same_shape(b)) {
    throw ParameterError("ssim: image dimensions differ");
  }
  if (a.width < p.window || a.height < p.window) {
    throw ParameterError("ssim: image smaller than the " + std::to_string(p.window) + "x" +
                         std::to_string(p.window) + " window");
  }
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const auto kernel = detail::gaussian_kernel(p.window, p.sigma);
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> xa(n), xb(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double va = a.data[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c)];
      const double vb = b.data[i * static_cast<std::size_t>(b.channels) + static_cast<std::size_t>(c)];
      xa[i] = va;
      xb[i] = vb;
      aa[i] = va * va;
      bb[i] = vb * vb;
      ab[i] = va * vb;
    }
    const auto mu_a = detail::filter_valid(xa, w, h, kernel);
    const auto mu_b = detail::filter_valid(xb, w, h, kernel);
    const auto e_aa = detail::filter_valid(aa, w, h, kernel);
    const auto e_bb = detail::filter_valid(bb, w, h, kernel);
    const auto e_ab = detail::filter_valid(ab, w, h, kernel);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i];
      const double mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma;
      const double var_b = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

/// Difference visualisation: the grey level of `a` tinted red by per-pixel
/// heat h = ||a - b||_2 / max ||a - b||_2, i.e. out = (g(1-h) + h, g(1-h), g(1-h)).
struct DiffOverlay {
  ImageF image; // 3 channels
  ImageF heat;  // 1 channel, [0,1]
  double max_l2 = 0.0;

  static constexpr const char* mapping =
      "gray=mean(a); heat=||a-b||_2/max||a-b||_2 (0 if max=0); rgb=(gray*(1-heat)+heat, gray*(1-heat), "
      "gray*(1-heat))";
};

inline DiffOverlay diff_overlay(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b)) {
    throw ParameterError("diff_overlay: image dimensions differ");
  }
  DiffOverlay out;
  out.image = ImageF(a.width, a.height, 3);
  out.heat = ImageF(a.width, a.height, 1);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double d2 = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        d2 += d * d;
      }
      out.heat.at(x, y) = std::sqrt(d2);
      out.max_l2 = std::max(out.max_l2, out.heat.at(x, y));
    }
  }
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double gray = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        gray += a.at(x, y, c);
      }
      gray /= a.channels;
      double& h = out.heat.at(x, y);
      h = out.max_l2 > 0.0 ? h / out.max_l2 : 0.0;
      const double base = gray * (1.0 - h);
      out.image.at(x, y, 0) = base + h;
      out.image.at(x, y, 1) = base;
      out.image.at(x, y, 2) = base;
    }
  }
  return out;
}

struct PairQuality {
  std::string name;
  double psnr = 0.0; // +inf for identical images
  double ssim = 0.0;
};

/// Per-pair scores plus mean and sample standard deviation (n-1).
/// Infinite PSNR values are excluded from the PSNR statistics and counted.
struct QualityReport {
  std::vector<PairQuality> per_pair;
  double mean_psnr = 0.0;
  double std_psnr = 0.0;
  double mean_ssim = 0.0;
  double std_ssim = 0.0;
  std::size_t infinite_psnr_count = 0;
};

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& stddev) {
  mean = 0.0;
  stddev = 0.0;
  if (v.empty()) {
    return;
  }
  for (double x : v) {
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) {
    return;
  }
  double ss = 0.0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
  }
  stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace detail

inline QualityReport summarize(std::vector<PairQuality> pairs) {
  QualityReport r;
  std::vector<double> ps;
  std::vector<double> ss;
  for (const auto& p : pairs) {
    if (std::isinf(p.psnr)) {
      ++r.infinite_psnr_count;
    } else {
      ps.push_back(p.psnr);
    }
    ss.push_back(p.ssim);
  }
  detail::mean_std(ps, r.mean_psnr, r.std_psnr);
  detail::mean_std(ss, r.mean_ssim, r.std_ssim);
  r.per_pair = std::move(pairs);
  return r;
}

/// Formats a PSNR value, writing the sentinel "inf" for identical images.
inline std::string format_psnr(double v) {
  if (std::isinf(v)) {
    return "inf";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

} // namespace gsynth
