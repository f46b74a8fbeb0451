#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dipli/error.hpp"
#include "dipli/image.hpp"
#include "dipli/kernels.hpp"

namespace dipli {

// Sharpness / focus measure: mean squared response to the 4-neighbor
// Laplacian stencil, replicate boundary. Color inputs are reduced to
// luminance first.
inline double laplacian_energy(const Image& img) {
  const Image gray = luminance(img);
  Kernel lap;
  lap.radius = 1;
  lap.weights = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  const Image resp = convolve2d(gray, lap, BoundaryMode::Replicate);
  double acc = 0.0;
  for (double v : resp.data) acc += v * v;
  return acc / static_cast<double>(resp.size());
}

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  require_same_shape(a, b, "psnr");
  require(peak > 0.0, ErrorCode::InvalidConfig, "psnr peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

inline double mae(const Image& a, const Image& b) {
  require_same_shape(a, b, "mae");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.size());
}

namespace detail {

// Separable 11-tap Gaussian (sigma 1.5) with replicate boundary; only the
// interior (margin 5) of the result is consumed, where replicate equals a
// valid-window filter.
inline void ssim_window_blur(const double* src, int h, int w, double* dst) {
  static const std::vector<double> taps = gaussian_taps_1d(1.5, 5);
  const int r = 5;
  std::vector<double> tmp(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double* srow = src + static_cast<size_t>(y) * w;
    double* trow = tmp.data() + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += taps[i + r] * srow[std::clamp(x + i, 0, w - 1)];
      trow[x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    double* drow = dst + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += taps[i + r] *
               tmp[static_cast<size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      drow[x] = acc;
    }
  }
}

}  // namespace detail

// Single-scale SSIM with the reference constants: 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1. The statistic is
// averaged over all fully-valid window positions and over channels.
inline double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  require(std::min(a.height, a.width) >= 11, ErrorCode::TooSmall,
          "ssim needs min(H,W) >= 11, got " + std::to_string(a.height) + "x" +
              std::to_string(a.width));
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const int h = a.height, w = a.width, margin = 5;
  const size_t n = a.plane_size();

  std::vector<double> mu_a(n), mu_b(n), m_aa(n), m_bb(n), m_ab(n), buf(n);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const double* pa = a.plane(c);
    const double* pb = b.plane(c);
    detail::ssim_window_blur(pa, h, w, mu_a.data());
    detail::ssim_window_blur(pb, h, w, mu_b.data());
    for (size_t i = 0; i < n; ++i) buf[i] = pa[i] * pa[i];
    detail::ssim_window_blur(buf.data(), h, w, m_aa.data());
    for (size_t i = 0; i < n; ++i) buf[i] = pb[i] * pb[i];
    detail::ssim_window_blur(buf.data(), h, w, m_bb.data());
    for (size_t i = 0; i < n; ++i) buf[i] = pa[i] * pb[i];
    detail::ssim_window_blur(buf.data(), h, w, m_ab.data());

    double acc = 0.0;
    long count = 0;
    for (int y = margin; y < h - margin; ++y) {
      for (int x = margin; x < w - margin; ++x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = m_aa[i] - ma * ma;
        const double vb = m_bb[i] - mb * mb;
        const double cov = m_ab[i] - ma * mb;
        const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        acc += num / den;
        ++count;
      }
    }
    total += acc / static_cast<double>(count);
  }
  return total / a.channels;
}

}  // namespace dipli
