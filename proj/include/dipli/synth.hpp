#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dipli/degrade.hpp"
#include "dipli/error.hpp"
#include "dipli/flow.hpp"
#include "dipli/image.hpp"
#include "dipli/kernels.hpp"
#include "dipli/rng.hpp"

namespace dipli {

struct SceneSpec {
  Image gt;                 // HQ ground truth, dims divisible by scale_s
  int frame_count = 7;      // K
  double jitter_px = 1.5;   // global translation amplitude, LQ pixels
  double warp_amp_px = 1.0; // smooth-field amplitude, LQ pixels
  int warp_cells = 4;       // control-grid resolution
  DegradationConfig degradation = DegradationConfig::with_default_psf(2);
  uint64_t seed = 0;
};

struct Scene {
  Image gt;
  std::vector<Image> frames;          // LQ observations
  std::vector<FlowField> true_flows_lq;  // pivot-relative, LQ resolution
  int pivot_true = 0;
};

// u, v drawn iid U(-amp, amp) on a cells x cells control grid and bilinearly
// interpolated up, so |components| never exceed amp.
inline FlowField random_smooth_flow(int h, int w, double amp_px, int cells,
                                    Rng& rng) {
  require(cells >= 2, ErrorCode::InvalidConfig, "warp grid needs >= 2 cells");
  std::vector<double> gu(static_cast<size_t>(cells) * cells);
  std::vector<double> gv(gu.size());
  for (size_t i = 0; i < gu.size(); ++i) gu[i] = rng.uniform(-amp_px, amp_px);
  for (size_t i = 0; i < gv.size(); ++i) gv[i] = rng.uniform(-amp_px, amp_px);

  FlowField flow(h, w);
  if (amp_px == 0.0) return flow;
  for (int y = 0; y < h; ++y) {
    const double gy = h > 1 ? static_cast<double>(y) * (cells - 1) / (h - 1)
                            : 0.0;
    const int y0 = std::min(static_cast<int>(gy), cells - 2);
    const double fy = gy - y0;
    for (int x = 0; x < w; ++x) {
      const double gx = w > 1 ? static_cast<double>(x) * (cells - 1) / (w - 1)
                              : 0.0;
      const int x0 = std::min(static_cast<int>(gx), cells - 2);
      const double fx = gx - x0;
      auto lerp = [&](const std::vector<double>& g) {
        const double a = g[static_cast<size_t>(y0) * cells + x0];
        const double b = g[static_cast<size_t>(y0) * cells + x0 + 1];
        const double c = g[static_cast<size_t>(y0 + 1) * cells + x0];
        const double d = g[static_cast<size_t>(y0 + 1) * cells + x0 + 1];
        return (1 - fy) * ((1 - fx) * a + fx * b) +
               fy * ((1 - fx) * c + fx * d);
      };
      const size_t i = static_cast<size_t>(y) * w + x;
      flow.u[i] = lerp(gu);
      flow.v[i] = lerp(gv);
    }
  }
  return flow;
}

// K degraded frames with known flows. The least-distorted frame is pinned to
// the identity motion and recorded as pivot_true, so the stored flows are
// exact both relative to the ground-truth grid and to the pivot frame.
inline Scene generate_scene(const SceneSpec& spec) {
  spec.degradation.validate();
  const int s = spec.degradation.scale_s;
  require(spec.gt.height % s == 0 && spec.gt.width % s == 0,
          ErrorCode::DimNotDivisible,
          "gt dims " + std::to_string(spec.gt.height) + "x" +
              std::to_string(spec.gt.width) + " vs scale " +
              std::to_string(s));
  require(spec.frame_count >= 1, ErrorCode::InvalidConfig, "K >= 1");

  const int lq_h = spec.gt.height / s;
  const int lq_w = spec.gt.width / s;

  std::vector<FlowField> flows;
  flows.reserve(spec.frame_count);
  for (int k = 0; k < spec.frame_count; ++k) {
    Rng rng = derive_rng(spec.seed, "synth.flow." + std::to_string(k));
    const double ju = rng.uniform(-spec.jitter_px, spec.jitter_px);
    const double jv = rng.uniform(-spec.jitter_px, spec.jitter_px);
    FlowField f = random_smooth_flow(lq_h, lq_w, spec.warp_amp_px,
                                     spec.warp_cells, rng);
    for (size_t i = 0; i < f.size(); ++i) {
      f.u[i] += ju;
      f.v[i] += jv;
    }
    flows.push_back(std::move(f));
  }

  int pivot = 0;
  double best = 1e300;
  for (int k = 0; k < spec.frame_count; ++k) {
    const double m = flows[k].mean_magnitude();
    if (m < best) {
      best = m;
      pivot = k;
    }
  }
  flows[pivot] = FlowField(lq_h, lq_w);

  Scene scene;
  scene.gt = spec.gt;
  scene.pivot_true = pivot;
  for (int k = 0; k < spec.frame_count; ++k) {
    const FlowField hq_flow = upscale_flow(flows[k], s);
    Image frame = apply_forward(spec.gt, hq_flow, spec.degradation);
    Rng noise_rng = derive_rng(spec.seed, "synth.noise." + std::to_string(k));
    frame = add_noise(frame, spec.degradation.noise, noise_rng);
    scene.frames.push_back(std::move(frame));
  }
  scene.true_flows_lq = std::move(flows);
  return scene;
}

// Procedural grayscale stand-ins for planetary ground truth.
enum class PatternKind { Disk, Craters, Grid, Blobs };

inline PatternKind pattern_kind_from_name(const std::string& name) {
  if (name == "disk") return PatternKind::Disk;
  if (name == "craters") return PatternKind::Craters;
  if (name == "grid") return PatternKind::Grid;
  if (name == "blobs") return PatternKind::Blobs;
  fail(ErrorCode::InvalidConfig, "unknown pattern '" + name + "'");
}

inline Image make_test_pattern(PatternKind kind, int h, int w,
                               uint64_t seed = 0) {
  require(h >= 16 && w >= 16, ErrorCode::InvalidConfig,
          "patterns need at least 16x16");
  Image img(1, h, w, 0.02);
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  const double radius = 0.38 * std::min(h, w);

  auto draw_disk = [&]() {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double r = std::hypot(y - cy, x - cx);
        // anti-aliased edge over one pixel
        const double cover = std::clamp(radius - r + 0.5, 0.0, 1.0);
        if (cover <= 0.0) continue;
        const double rr = std::min(r / radius, 1.0);
        const double limb = std::sqrt(std::max(0.0, 1.0 - rr * rr));
        const double shade = 0.25 + 0.65 * std::pow(limb, 0.6);
        img.at(0, y, x) += cover * (shade - img.at(0, y, x));
      }
  };

  switch (kind) {
    case PatternKind::Disk:
      draw_disk();
      break;
    case PatternKind::Craters: {
      draw_disk();
      Rng rng(derive_seed(seed, "pattern.craters"));
      const int count = 6 + static_cast<int>(rng.uniform() * 6);
      for (int i = 0; i < count; ++i) {
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        const double rad = rng.uniform(0.0, 0.75) * radius;
        const double ky = cy + rad * std::sin(ang);
        const double kx = cx + rad * std::cos(ang);
        const double size = rng.uniform(0.04, 0.12) * radius;
        const double depth = rng.uniform(0.15, 0.4);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double d2 = (y - ky) * (y - ky) + (x - kx) * (x - kx);
            img.at(0, y, x) -=
                depth * std::exp(-d2 / (2.0 * size * size)) *
                (img.at(0, y, x) > 0.1 ? 1.0 : 0.0);
          }
      }
      for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
      break;
    }
    case PatternKind::Grid: {
      const int step = std::max(8, std::min(h, w) / 8);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (y % step == 0 || x % step == 0 || y == h - 1 || x == w - 1)
            img.at(0, y, x) = 0.9;
      break;
    }
    case PatternKind::Blobs: {
      Rng rng(derive_seed(seed, "pattern.blobs"));
      const int count = 5 + static_cast<int>(rng.uniform() * 8);
      for (int i = 0; i < count; ++i) {
        const double by = rng.uniform(0.1, 0.9) * h;
        const double bx = rng.uniform(0.1, 0.9) * w;
        const double size = rng.uniform(0.02, 0.09) * std::min(h, w);
        const double amp = rng.uniform(0.3, 0.9);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double d2 = (y - by) * (y - by) + (x - bx) * (x - bx);
            img.at(0, y, x) += amp * std::exp(-d2 / (2.0 * size * size));
          }
      }
      for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
      break;
    }
  }
  return img;
}

}  // namespace dipli
