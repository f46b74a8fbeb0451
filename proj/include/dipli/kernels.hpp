#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dipli/error.hpp"
#include "dipli/image.hpp"

namespace dipli {

enum class BoundaryMode { Replicate, Reflect, Zero };

// Square (2r+1)^2 stencil. Smoothing kernels are normalized to unit sum.
struct Kernel {
  int radius = 0;
  std::vector<double> weights;  // (2r+1) x (2r+1), row-major

  int side() const { return 2 * radius + 1; }
  double at(int dy, int dx) const {
    return weights[static_cast<size_t>(dy + radius) * side() + (dx + radius)];
  }
};

inline Kernel gaussian_kernel(double sigma, int radius) {
  require(sigma > 0.0, ErrorCode::NonPositiveSigma,
          "sigma = " + std::to_string(sigma));
  Kernel k;
  k.radius = radius;
  k.weights.resize(static_cast<size_t>(k.side()) * k.side());
  double sum = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const double w =
          std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k.weights[static_cast<size_t>(dy + radius) * k.side() + (dx + radius)] =
          w;
      sum += w;
    }
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

namespace detail {

inline int wrap_index(int i, int n, BoundaryMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case BoundaryMode::Replicate: return std::clamp(i, 0, n - 1);
    case BoundaryMode::Reflect: {
      // symmetric reflection without edge repetition: -1 -> 0, n -> n-1
      while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
      }
      return i;
    }
    case BoundaryMode::Zero: return -1;
  }
  return -1;
}

inline void conv2d_plane(const double* src, int h, int w, const Kernel& k,
                         BoundaryMode boundary, double* dst) {
  const int r = k.radius;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = wrap_index(y + dy, h, boundary);
        if (sy < 0) continue;
        const double* row = src + static_cast<size_t>(sy) * w;
        const double* kw =
            k.weights.data() + static_cast<size_t>(dy + r) * k.side();
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = wrap_index(x + dx, w, boundary);
          if (sx < 0) continue;
          acc += kw[dx + r] * row[sx];
        }
      }
      dst[static_cast<size_t>(y) * w + x] = acc;
    }
  }
}

// Precomputed 1-D resampling taps for one axis. Taps are clamped to the
// valid range (replicate) and renormalized to unit sum, so constants are
// preserved exactly at any scale.
struct ResamplePlan {
  int in_size = 0;
  int out_size = 0;
  int taps = 0;                 // taps per output sample
  std::vector<int> index;       // out_size * taps source indices
  std::vector<double> weight;   // out_size * taps weights, each row sums to 1
};

inline double lanczos_window(double t, int a) {
  t = std::abs(t);
  if (t >= static_cast<double>(a)) return 0.0;
  if (t < 1e-12) return 1.0;
  const double pt = M_PI * t;
  return (std::sin(pt) / pt) * (std::sin(pt / a) / (pt / a));
}

inline ResamplePlan make_lanczos_plan(int in_size, int out_size, int a) {
  ResamplePlan plan;
  plan.in_size = in_size;
  plan.out_size = out_size;
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(1.0, scale);  // widen when minifying
  const double support = a * filter_scale;
  plan.taps = static_cast<int>(std::ceil(support)) * 2 + 1;
  plan.index.resize(static_cast<size_t>(out_size) * plan.taps);
  plan.weight.assign(static_cast<size_t>(out_size) * plan.taps, 0.0);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int first = static_cast<int>(std::floor(center - support)) + 1;
    double sum = 0.0;
    for (int t = 0; t < plan.taps; ++t) {
      const int i = first + t;
      const double wgt = lanczos_window((center - i) / filter_scale, a);
      plan.index[static_cast<size_t>(o) * plan.taps + t] =
          std::clamp(i, 0, in_size - 1);
      plan.weight[static_cast<size_t>(o) * plan.taps + t] = wgt;
      sum += wgt;
    }
    for (int t = 0; t < plan.taps; ++t)
      plan.weight[static_cast<size_t>(o) * plan.taps + t] /= sum;
  }
  return plan;
}

// Resample the second (contiguous) axis of an h x in rows buffer.
inline void resample_rows(const ResamplePlan& plan, const double* src, int h,
                          double* dst) {
  for (int y = 0; y < h; ++y) {
    const double* srow = src + static_cast<size_t>(y) * plan.in_size;
    double* drow = dst + static_cast<size_t>(y) * plan.out_size;
    for (int o = 0; o < plan.out_size; ++o) {
      const size_t base = static_cast<size_t>(o) * plan.taps;
      double acc = 0.0;
      for (int t = 0; t < plan.taps; ++t)
        acc += plan.weight[base + t] * srow[plan.index[base + t]];
      drow[o] = acc;
    }
  }
}

// Resample the first (strided) axis of an in x w buffer.
inline void resample_cols(const ResamplePlan& plan, const double* src, int w,
                          double* dst) {
  for (int o = 0; o < plan.out_size; ++o) {
    const size_t base = static_cast<size_t>(o) * plan.taps;
    double* drow = dst + static_cast<size_t>(o) * w;
    for (int x = 0; x < w; ++x) drow[x] = 0.0;
    for (int t = 0; t < plan.taps; ++t) {
      const double wgt = plan.weight[base + t];
      const double* srow = src + static_cast<size_t>(plan.index[base + t]) * w;
      for (int x = 0; x < w; ++x) drow[x] += wgt * srow[x];
    }
  }
}

inline void lanczos_resize_plane(const double* src, int h, int w, int out_h,
                                 int out_w, int a, double* dst) {
  const ResamplePlan px = make_lanczos_plan(w, out_w, a);
  const ResamplePlan py = make_lanczos_plan(h, out_h, a);
  std::vector<double> tmp(static_cast<size_t>(h) * out_w);
  resample_rows(px, src, h, tmp.data());
  resample_cols(py, tmp.data(), out_w, dst);
}

inline std::vector<double> gaussian_taps_1d(double sigma, int radius) {
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable Gaussian smoothing with replicate boundary.
inline void gaussian_blur_plane(const double* src, int h, int w, double sigma,
                                double* dst) {
  if (sigma <= 0.0) {
    std::copy(src, src + static_cast<size_t>(h) * w, dst);
    return;
  }
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const auto taps = gaussian_taps_1d(sigma, r);
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

inline Image convolve2d(const Image& img, const Kernel& k,
                        BoundaryMode boundary = BoundaryMode::Replicate) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    detail::conv2d_plane(img.plane(c), img.height, img.width, k, boundary,
                         out.plane(c));
  return out;
}

inline Image lanczos_resize(const Image& img, int out_h, int out_w,
                            int lobes = 3) {
  require(out_h >= 1 && out_w >= 1, ErrorCode::ZeroOutputSize,
          std::to_string(out_h) + "x" + std::to_string(out_w));
  require(lobes == 2 || lobes == 3, ErrorCode::InvalidConfig,
          "lanczos lobes must be 2 or 3");
  Image out(img.channels, out_h, out_w);
  for (int c = 0; c < img.channels; ++c)
    detail::lanczos_resize_plane(img.plane(c), img.height, img.width, out_h,
                                 out_w, lobes, out.plane(c));
  return out;
}

}  // namespace dipli
