#pragma once

// Motion estimation and warping. The dense estimator is the duality-based
// TV-L1 of Zach, Pock and Bischof (DAGM 2007) in its classical coarse-to-fine
// form (Sanchez et al., IPOL 2013), with 5x5 median filtering of the flow
// between warp iterations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dipli/autodiff.hpp"
#include "dipli/error.hpp"
#include "dipli/image.hpp"
#include "dipli/kernels.hpp"

namespace dipli {

// Per-pixel backward-warp displacements in pixels: u is the column (x)
// displacement, v the row (y) displacement. A zero field is the identity.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w),
        u(static_cast<size_t>(h) * w, 0.0),
        v(static_cast<size_t>(h) * w, 0.0) {}

  size_t size() const { return u.size(); }

  double mean_magnitude() const {
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i) acc += std::hypot(u[i], v[i]);
    return acc / static_cast<double>(u.size());
  }
};

struct TvL1Params {
  double lambda_data = 0.15;
  double theta = 0.3;
  double tau = 0.25;
  int n_scales = 5;
  double zoom = 0.5;
  int n_warps = 5;
  int n_iters = 50;
  double stop_eps = 0.01;
};

namespace detail {

// Shared bilinear sampler; both the plain and the differentiable warp go
// through this exact code path so the two agree bitwise.
inline void warp_plane(const double* src, int h, int w, const FlowField& flow,
                       BoundaryMode boundary, double* dst) {
  const bool zero_outside = boundary == BoundaryMode::Zero;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const double sx = x + flow.u[i];
      const double sy = y + flow.v[i];
      if (zero_outside &&
          (sx < 0.0 || sy < 0.0 || sx > w - 1.0 || sy > h - 1.0)) {
        dst[i] = 0.0;
        continue;
      }
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const int x0c = std::clamp(x0, 0, w - 1);
      const int x1c = std::clamp(x0 + 1, 0, w - 1);
      const int y0c = std::clamp(y0, 0, h - 1);
      const int y1c = std::clamp(y0 + 1, 0, h - 1);
      const double a = src[static_cast<size_t>(y0c) * w + x0c];
      const double b = src[static_cast<size_t>(y0c) * w + x1c];
      const double c = src[static_cast<size_t>(y1c) * w + x0c];
      const double d = src[static_cast<size_t>(y1c) * w + x1c];
      dst[i] = (1.0 - fy) * ((1.0 - fx) * a + fx * b) +
               fy * ((1.0 - fx) * c + fx * d);
    }
  }
}

}  // namespace detail

// Backward warping: out(p) = bilinear sample of img at p + flow(p).
inline Image warp_bilinear(const Image& img, const FlowField& flow,
                           BoundaryMode boundary = BoundaryMode::Replicate) {
  require(img.height == flow.height && img.width == flow.width,
          ErrorCode::ShapeMismatch, "warp_bilinear image vs flow dims");
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    detail::warp_plane(img.plane(c), img.height, img.width, flow, boundary,
                       out.plane(c));
  return out;
}

// Differentiable warp; the flow is a constant (no gradient w.r.t. it). The
// vector-Jacobian product scatters through the four bilinear weights.
inline ad::Tensor warp_bilinear_diff(const ad::Tensor& x,
                                     const FlowField& flow) {
  const ad::Shape xs = x.shape();
  require(xs.h == flow.height && xs.w == flow.width, ErrorCode::ShapeMismatch,
          "warp_bilinear_diff tensor vs flow dims");
  const bool rec = ad::detail::recording({&x});
  ad::Tensor out = ad::Tensor::leaf(xs, rec);
  const size_t plane = static_cast<size_t>(xs.h) * xs.w;
  for (int nc = 0; nc < xs.n * xs.c; ++nc)
    detail::warp_plane(x.data() + static_cast<size_t>(nc) * plane, xs.h, xs.w,
                       flow, BoundaryMode::Replicate,
                       out.data() + static_cast<size_t>(nc) * plane);
  if (rec) {
    ad::NodePtr xn = x.node(), on = out.node();
    auto fl = std::make_shared<FlowField>(flow);
    ad::Tape::active()->record(on, [xn, on, fl] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const ad::Shape xs = xn->shape;
      const int h = xs.h, w = xs.w;
      const size_t plane = static_cast<size_t>(h) * w;
      for (int nc = 0; nc < xs.n * xs.c; ++nc) {
        double* gx = xn->grad.data() + static_cast<size_t>(nc) * plane;
        const double* go = on->grad.data() + static_cast<size_t>(nc) * plane;
        for (int y = 0; y < h; ++y) {
          for (int x2 = 0; x2 < w; ++x2) {
            const size_t i = static_cast<size_t>(y) * w + x2;
            const double g = go[i];
            if (g == 0.0) continue;
            const double sx = x2 + fl->u[i];
            const double sy = y + fl->v[i];
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            const int x0c = std::clamp(x0, 0, w - 1);
            const int x1c = std::clamp(x0 + 1, 0, w - 1);
            const int y0c = std::clamp(y0, 0, h - 1);
            const int y1c = std::clamp(y0 + 1, 0, h - 1);
            gx[static_cast<size_t>(y0c) * w + x0c] += g * (1.0 - fy) * (1.0 - fx);
            gx[static_cast<size_t>(y0c) * w + x1c] += g * (1.0 - fy) * fx;
            gx[static_cast<size_t>(y1c) * w + x0c] += g * fy * (1.0 - fx);
            gx[static_cast<size_t>(y1c) * w + x1c] += g * fy * fx;
          }
        }
      }
    });
  }
  return out;
}

// Constant flow from intensity-weighted first moments:
// centroid(source) - centroid(target).
inline FlowField centroid_shift(const Image& target, const Image& source) {
  require_same_shape(target, source, "centroid_shift");
  const Image t = luminance(target);
  const Image s = luminance(source);
  auto centroid = [](const Image& img, double& cx, double& cy) {
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v = img.at(0, y, x);
        mass += v;
        mx += v * x;
        my += v * y;
      }
    require(mass > 0.0, ErrorCode::ZeroMass, "centroid of a zero-mass image");
    cx = mx / mass;
    cy = my / mass;
  };
  double tx, ty, sx, sy;
  centroid(t, tx, ty);
  centroid(s, sx, sy);
  FlowField flow(target.height, target.width);
  std::fill(flow.u.begin(), flow.u.end(), sx - tx);
  std::fill(flow.v.begin(), flow.v.end(), sy - ty);
  return flow;
}

// Lift a flow estimated at LQ resolution onto the s-times-larger grid:
// bilinear-resize the components and scale the displacement values by s.
inline FlowField upscale_flow(const FlowField& flow, int s) {
  require(s >= 1, ErrorCode::InvalidConfig, "upscale_flow factor");
  if (s == 1) return flow;
  FlowField out(flow.height * s, flow.width * s);
  const double inv = 1.0 / s;
  for (int y = 0; y < out.height; ++y) {
    const double sy = (y + 0.5) * inv - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    const int y0c = std::clamp(y0, 0, flow.height - 1);
    const int y1c = std::clamp(y0 + 1, 0, flow.height - 1);
    for (int x = 0; x < out.width; ++x) {
      const double sx = (x + 0.5) * inv - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const int x0c = std::clamp(x0, 0, flow.width - 1);
      const int x1c = std::clamp(x0 + 1, 0, flow.width - 1);
      auto lerp = [&](const std::vector<double>& f) {
        const double a = f[static_cast<size_t>(y0c) * flow.width + x0c];
        const double b = f[static_cast<size_t>(y0c) * flow.width + x1c];
        const double c = f[static_cast<size_t>(y1c) * flow.width + x0c];
        const double d = f[static_cast<size_t>(y1c) * flow.width + x1c];
        return (1.0 - fy) * ((1.0 - fx) * a + fx * b) +
               fy * ((1.0 - fx) * c + fx * d);
      };
      const size_t i = static_cast<size_t>(y) * out.width + x;
      out.u[i] = s * lerp(flow.u);
      out.v[i] = s * lerp(flow.v);
    }
  }
  return out;
}

// -----------------------------------------------------------------------
// TV-L1
// -----------------------------------------------------------------------

namespace detail {

// Keys bicubic (a = -0.5) on clamped indices.
inline double cubic_hermite(double a, double b, double c, double d, double t) {
  const double a0 = -0.5 * a + 1.5 * b - 1.5 * c + 0.5 * d;
  const double a1 = a - 2.5 * b + 2.0 * c - 0.5 * d;
  const double a2 = -0.5 * a + 0.5 * c;
  return ((a0 * t + a1) * t + a2) * t + b;
}

inline double bicubic_at(const double* img, int h, int w, double sy,
                         double sx) {
  const int x1 = static_cast<int>(std::floor(sx));
  const int y1 = static_cast<int>(std::floor(sy));
  const double tx = sx - x1;
  const double ty = sy - y1;
  double col[4];
  for (int m = -1; m <= 2; ++m) {
    const int yy = std::clamp(y1 + m, 0, h - 1);
    const double* row = img + static_cast<size_t>(yy) * w;
    auto px = [&](int xi) { return row[std::clamp(xi, 0, w - 1)]; };
    col[m + 1] =
        cubic_hermite(px(x1 - 1), px(x1), px(x1 + 1), px(x1 + 2), tx);
  }
  return cubic_hermite(col[0], col[1], col[2], col[3], ty);
}

// Samples landing outside the frame are set to 0; combined with zeroed
// warped gradients this removes out-of-frame pixels from the data term.
inline void bicubic_warp(const double* src, int h, int w,
                         const std::vector<double>& u,
                         const std::vector<double>& v, double* dst) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const double sy = y + v[i];
      const double sx = x + u[i];
      if (sx < 0.0 || sx > w - 1.0 || sy < 0.0 || sy > h - 1.0) {
        dst[i] = 0.0;
        continue;
      }
      dst[i] = bicubic_at(src, h, w, sy, sx);
    }
}

inline void centered_gradient(const double* img, int h, int w, double* gx,
                              double* gy) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
      gx[i] = 0.5 * (img[static_cast<size_t>(y) * w + xp] -
                     img[static_cast<size_t>(y) * w + xm]);
      gy[i] = 0.5 * (img[static_cast<size_t>(yp) * w + x] -
                     img[static_cast<size_t>(ym) * w + x]);
    }
}

inline void forward_gradient(const std::vector<double>& f, int h, int w,
                             std::vector<double>& fx, std::vector<double>& fy) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      fx[i] = x < w - 1 ? f[i + 1] - f[i] : 0.0;
      fy[i] = y < h - 1 ? f[i + w] - f[i] : 0.0;
    }
}

inline void divergence(const std::vector<double>& p1,
                       const std::vector<double>& p2, int h, int w,
                       std::vector<double>& div) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const double dx = x == 0 ? p1[i] : (x == w - 1 ? -p1[i - 1]
                                                     : p1[i] - p1[i - 1]);
      const double dy = y == 0 ? p2[i] : (y == h - 1 ? -p2[i - w]
                                                     : p2[i] - p2[i - w]);
      div[i] = dx + dy;
    }
}

inline void median_filter5(std::vector<double>& f, int h, int w) {
  std::vector<double> out(f.size());
  double window[25];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          const int xx = std::clamp(x + dx, 0, w - 1);
          window[n++] = f[static_cast<size_t>(yy) * w + xx];
        }
      std::nth_element(window, window + 12, window + 25);
      out[static_cast<size_t>(y) * w + x] = window[12];
    }
  f.swap(out);
}

// One pyramid level of the primal-dual scheme. u and v are updated in place.
inline void tvl1_level(const std::vector<double>& i0,
                       const std::vector<double>& i1, int h, int w,
                       const TvL1Params& p, std::vector<double>& u,
                       std::vector<double>& v) {
  const size_t n = static_cast<size_t>(h) * w;
  const double l_t = p.lambda_data * p.theta;
  const double grad_floor = 1e-10;

  std::vector<double> i1x(n), i1y(n), i1w(n), i1wx(n), i1wy(n);
  std::vector<double> rho_c(n), grad2(n), v1(n), v2(n);
  std::vector<double> p11(n, 0.0), p12(n, 0.0), p21(n, 0.0), p22(n, 0.0);
  std::vector<double> div1(n), div2(n), ux(n), uy(n), vx(n), vy(n);

  centered_gradient(i1.data(), h, w, i1x.data(), i1y.data());

  for (int warp = 0; warp < p.n_warps; ++warp) {
    bicubic_warp(i1.data(), h, w, u, v, i1w.data());
    bicubic_warp(i1x.data(), h, w, u, v, i1wx.data());
    bicubic_warp(i1y.data(), h, w, u, v, i1wy.data());
    for (size_t i = 0; i < n; ++i) {
      grad2[i] = i1wx[i] * i1wx[i] + i1wy[i] * i1wy[i];
      rho_c[i] = i1w[i] - i1wx[i] * u[i] - i1wy[i] * v[i] - i0[i];
    }

    double error = 1e30;
    for (int it = 0; it < p.n_iters && error > p.stop_eps * p.stop_eps; ++it) {
      // data-term thresholding step
      for (size_t i = 0; i < n; ++i) {
        const double rho = rho_c[i] + i1wx[i] * u[i] + i1wy[i] * v[i];
        double d1, d2;
        if (rho < -l_t * grad2[i]) {
          d1 = l_t * i1wx[i];
          d2 = l_t * i1wy[i];
        } else if (rho > l_t * grad2[i]) {
          d1 = -l_t * i1wx[i];
          d2 = -l_t * i1wy[i];
        } else if (grad2[i] < grad_floor) {
          d1 = d2 = 0.0;
        } else {
          const double fi = -rho / grad2[i];
          d1 = fi * i1wx[i];
          d2 = fi * i1wy[i];
        }
        v1[i] = u[i] + d1;
        v2[i] = v[i] + d2;
      }

      divergence(p11, p12, h, w, div1);
      divergence(p21, p22, h, w, div2);

      error = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double u_prev = u[i], v_prev = v[i];
        u[i] = v1[i] + p.theta * div1[i];
        v[i] = v2[i] + p.theta * div2[i];
        error += (u[i] - u_prev) * (u[i] - u_prev) +
                 (v[i] - v_prev) * (v[i] - v_prev);
      }
      error /= static_cast<double>(n);

      forward_gradient(u, h, w, ux, uy);
      forward_gradient(v, h, w, vx, vy);
      const double taut = p.tau / p.theta;
      for (size_t i = 0; i < n; ++i) {
        const double g1 = 1.0 + taut * std::hypot(ux[i], uy[i]);
        const double g2 = 1.0 + taut * std::hypot(vx[i], vy[i]);
        p11[i] = (p11[i] + taut * ux[i]) / g1;
        p12[i] = (p12[i] + taut * uy[i]) / g1;
        p21[i] = (p21[i] + taut * vx[i]) / g2;
        p22[i] = (p22[i] + taut * vy[i]) / g2;
      }
    }

    median_filter5(u, h, w);
    median_filter5(v, h, w);
  }
}

inline int zoomed_size(int n, double zoom) {
  return std::max(1, static_cast<int>(std::lround(n * zoom)));
}

// Downscale for the pyramid: Gaussian prefilter then bicubic subsample.
inline std::vector<double> zoom_out(const std::vector<double>& img, int h,
                                    int w, int oh, int ow) {
  const double zx = static_cast<double>(ow) / w;
  const double sigma = 0.6 * std::sqrt(1.0 / (zx * zx) - 1.0);
  std::vector<double> smooth(img.size());
  gaussian_blur_plane(img.data(), h, w, sigma, smooth.data());
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[static_cast<size_t>(y) * ow + x] = bicubic_at(
          smooth.data(), h, w, y * static_cast<double>(h) / oh,
          x * static_cast<double>(w) / ow);
  return out;
}

// Upscale a flow component to the next finer level and rescale values.
inline std::vector<double> zoom_in_flow(const std::vector<double>& f, int h,
                                        int w, int oh, int ow, double factor) {
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[static_cast<size_t>(y) * ow + x] =
          factor * bicubic_at(f.data(), h, w, y * static_cast<double>(h) / oh,
                              x * static_cast<double>(w) / ow);
  return out;
}

}  // namespace detail

// Coarse-to-fine duality-based TV-L1. The returned field is the motion from
// `from` toward `to`, anchored on the common grid: warp_bilinear(from, flow)
// matches `to`. estimate_flow_tvl1(pivot, frame) therefore yields exactly
// the field that carries a pivot-geometry reconstruction into frame
// geometry inside the degradation operator.
inline FlowField estimate_flow_tvl1(const Image& from, const Image& to,
                                    const TvL1Params& params = {}) {
  require_same_shape(from, to, "estimate_flow_tvl1");
  require(std::min(from.height, from.width) >= 8,
          ErrorCode::TooSmallForPyramid,
          "images below 8 px cannot seed the pyramid");

  const Image t = luminance(to);
  const Image s = luminance(from);
  const int h = t.height, w = t.width;
  const size_t n = t.plane_size();

  // Joint normalization to [0,255]: the classical data-attachment weight
  // calibration assumes 8-bit intensity magnitudes.
  double lo = 1e300, hi = -1e300;
  for (size_t i = 0; i < n; ++i) {
    lo = std::min({lo, t.data[i], s.data[i]});
    hi = std::max({hi, t.data[i], s.data[i]});
  }
  const double span = hi - lo;
  // TV-L1 solves for u with i1(p + u) ~ i0(p): i1 is the image being
  // sampled (`from`), i0 the one being matched (`to`).
  std::vector<double> i0(n), i1(n);
  if (span > 0.0) {
    for (size_t i = 0; i < n; ++i) {
      i0[i] = 255.0 * (t.data[i] - lo) / span;
      i1[i] = 255.0 * (s.data[i] - lo) / span;
    }
  }

  // Pre-smoothing stabilizes the linearized data term.
  std::vector<double> tmp(n);
  detail::gaussian_blur_plane(i0.data(), h, w, 0.8, tmp.data());
  i0.swap(tmp);
  detail::gaussian_blur_plane(i1.data(), h, w, 0.8, tmp.data());
  i1.swap(tmp);

  // Clamp the scale count so the coarsest level keeps at least 8 px.
  int n_scales = 1;
  {
    int ch = h, cw = w;
    while (n_scales < params.n_scales) {
      const int nh = detail::zoomed_size(ch, params.zoom);
      const int nw = detail::zoomed_size(cw, params.zoom);
      if (std::min(nh, nw) < 8) break;
      ch = nh;
      cw = nw;
      ++n_scales;
    }
  }

  std::vector<std::vector<double>> pyr_i0{std::move(i0)}, pyr_i1{std::move(i1)};
  std::vector<int> ph{h}, pw{w};
  for (int level = 1; level < n_scales; ++level) {
    const int nh = detail::zoomed_size(ph[level - 1], params.zoom);
    const int nw = detail::zoomed_size(pw[level - 1], params.zoom);
    pyr_i0.push_back(
        detail::zoom_out(pyr_i0[level - 1], ph[level - 1], pw[level - 1], nh, nw));
    pyr_i1.push_back(
        detail::zoom_out(pyr_i1[level - 1], ph[level - 1], pw[level - 1], nh, nw));
    ph.push_back(nh);
    pw.push_back(nw);
  }

  std::vector<double> u(static_cast<size_t>(ph.back()) * pw.back(), 0.0);
  std::vector<double> v(u.size(), 0.0);
  for (int level = n_scales - 1; level >= 0; --level) {
    detail::tvl1_level(pyr_i0[level], pyr_i1[level], ph[level], pw[level],
                       params, u, v);
    if (level == 0) break;
    const double factor = 1.0 / params.zoom;
    u = detail::zoom_in_flow(u, ph[level], pw[level], ph[level - 1],
                             pw[level - 1], factor);
    v = detail::zoom_in_flow(v, ph[level], pw[level], ph[level - 1],
                             pw[level - 1], factor);
  }

  FlowField flow(h, w);
  flow.u = std::move(u);
  flow.v = std::move(v);
  return flow;
}

// Fig-4-style alignment score: MAE between the warped source and the target.
inline double alignment_mae(const Image& target, const Image& source,
                            const FlowField& flow) {
  require_same_shape(target, source, "alignment_mae");
  const Image warped = warp_bilinear(source, flow);
  double acc = 0.0;
  for (size_t i = 0; i < warped.size(); ++i)
    acc += std::abs(warped.data[i] - target.data[i]);
  return acc / static_cast<double>(warped.size());
}

// -----------------------------------------------------------------------
// flow files: magic "FLO1", H, W as little-endian u32, then row-major
// (u, v) float32 pairs
// -----------------------------------------------------------------------

inline void write_flow(const FlowField& flow, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  auto put_u32 = [&](uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x),
                          static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16),
                          static_cast<unsigned char>(x >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_f32 = [&](float x) {
    uint32_t u;
    std::memcpy(&u, &x, 4);
    if constexpr (std::endian::native == std::endian::big)
      u = __builtin_bswap32(u);
    unsigned char b[4] = {static_cast<unsigned char>(u),
                          static_cast<unsigned char>(u >> 8),
                          static_cast<unsigned char>(u >> 16),
                          static_cast<unsigned char>(u >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  f.write("FLO1", 4);
  put_u32(static_cast<uint32_t>(flow.height));
  put_u32(static_cast<uint32_t>(flow.width));
  for (size_t i = 0; i < flow.size(); ++i) {
    put_f32(static_cast<float>(flow.u[i]));
    put_f32(static_cast<float>(flow.v[i]));
  }
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
}

inline FlowField read_flow(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::memcmp(magic, "FLO1", 4) == 0,
          ErrorCode::UnknownFormat, "bad flow magic in " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    require(f.good(), ErrorCode::TruncatedData, "flow header in " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  };
  const uint32_t h = get_u32();
  const uint32_t w = get_u32();
  FlowField flow(static_cast<int>(h), static_cast<int>(w));
  std::vector<unsigned char> buf(flow.size() * 8);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size()));
  require(f.good(), ErrorCode::TruncatedData,
          "flow payload in " + path + " ends early");
  for (size_t i = 0; i < flow.size(); ++i) {
    uint32_t up = static_cast<uint32_t>(buf[8 * i]) |
                  (static_cast<uint32_t>(buf[8 * i + 1]) << 8) |
                  (static_cast<uint32_t>(buf[8 * i + 2]) << 16) |
                  (static_cast<uint32_t>(buf[8 * i + 3]) << 24);
    uint32_t vp = static_cast<uint32_t>(buf[8 * i + 4]) |
                  (static_cast<uint32_t>(buf[8 * i + 5]) << 8) |
                  (static_cast<uint32_t>(buf[8 * i + 6]) << 16) |
                  (static_cast<uint32_t>(buf[8 * i + 7]) << 24);
    float uf, vf;
    std::memcpy(&uf, &up, 4);
    std::memcpy(&vf, &vp, 4);
    flow.u[i] = uf;
    flow.v[i] = vf;
  }
  return flow;
}

}  // namespace dipli
