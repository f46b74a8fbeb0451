#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dipli/error.hpp"

namespace dipli {

// Dense C x H x W raster, row-major per channel, nominal range [0,1].
// Samples are stored as double; file formats quantize on write.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, fill) {}

  size_t size() const { return data.size(); }
  size_t plane_size() const { return static_cast<size_t>(height) * width; }

  double* plane(int c) { return data.data() + plane_size() * c; }
  const double* plane(int c) const { return data.data() + plane_size() * c; }

  double& at(int c, int y, int x) {
    return data[plane_size() * c + static_cast<size_t>(y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[plane_size() * c + static_cast<size_t>(y) * width + x];
  }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

inline void require_same_shape(const Image& a, const Image& b,
                               const char* where) {
  require(a.same_shape(b), ErrorCode::ShapeMismatch,
          std::string(where) + ": " + std::to_string(a.channels) + "x" +
              std::to_string(a.height) + "x" + std::to_string(a.width) +
              " vs " + std::to_string(b.channels) + "x" +
              std::to_string(b.height) + "x" + std::to_string(b.width));
}

inline Image clamp01(Image img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// ITU-601 luma weights; single-channel images pass through unchanged.
inline Image luminance(const Image& img) {
  if (img.channels == 1) return img;
  require(img.channels == 3, ErrorCode::ShapeMismatch,
          "luminance: expected 1 or 3 channels, got " +
              std::to_string(img.channels));
  Image out(1, img.height, img.width);
  const double* r = img.plane(0);
  const double* g = img.plane(1);
  const double* b = img.plane(2);
  for (size_t i = 0; i < out.plane_size(); ++i)
    out.data[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

inline bool all_finite(const Image& img) {
  for (double v : img.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace dipli
