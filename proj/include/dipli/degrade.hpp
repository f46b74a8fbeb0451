#pragma once

// Forward degradation model: warp at HQ resolution, PSF blur, Lanczos
// downsample, then noise injection. The plain image path and the
// differentiable tensor path run the same plane-level arithmetic, so they
// agree exactly (pre-clamp).

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dipli/autodiff.hpp"
#include "dipli/error.hpp"
#include "dipli/flow.hpp"
#include "dipli/image.hpp"
#include "dipli/kernels.hpp"
#include "dipli/rng.hpp"

namespace dipli {

enum class NoiseMix { PoissonThenAdditive, AdditiveThenPoisson };

struct NoiseConfig {
  double sigma_eta = 0.0;   // Gaussian std in [0,1] intensity units
  double poisson_peak = 0;  // expected photon count at intensity 1; 0 = off
  NoiseMix mix_mode = NoiseMix::PoissonThenAdditive;

  bool enabled() const { return sigma_eta > 0.0 || poisson_peak > 0.0; }
};

struct PsfConfig {
  bool enabled = false;
  double sigma = 0.0;
  int radius = 0;

  static PsfConfig none() { return {}; }
  static PsfConfig gaussian(double sigma) {
    PsfConfig p;
    p.enabled = true;
    p.sigma = sigma;
    p.radius = static_cast<int>(std::ceil(3.0 * sigma));
    return p;
  }
};

struct DegradationConfig {
  int scale_s = 2;
  PsfConfig psf = PsfConfig::none();
  int lanczos_lobes = 3;
  NoiseConfig noise;

  void validate() const {
    require(scale_s == 1 || scale_s == 2 || scale_s == 4 || scale_s == 8,
            ErrorCode::InvalidConfig,
            "scale must be 1, 2, 4 or 8, got " + std::to_string(scale_s));
    if (psf.enabled)
      require(psf.sigma > 0.0, ErrorCode::NonPositiveSigma, "psf sigma");
  }

  // Anti-aliasing-consistent default: sigma = 0.5 * s at HQ resolution.
  static DegradationConfig with_default_psf(int s) {
    DegradationConfig cfg;
    cfg.scale_s = s;
    if (s > 1) cfg.psf = PsfConfig::gaussian(0.5 * s);
    return cfg;
  }
};

namespace detail {

// True convolution: correlate with the pre-flipped stencil.
inline Kernel flipped(const Kernel& k) {
  Kernel out = k;
  std::reverse(out.weights.begin(), out.weights.end());
  return out;
}

// Adjoint of replicate-boundary correlation: scatter each output grad back
// through the clamped taps.
inline void conv2d_plane_adjoint(const double* gout, int h, int w,
                                 const Kernel& k, double* gin) {
  const int r = k.radius;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = gout[static_cast<size_t>(y) * w + x];
      if (g == 0.0) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          gin[static_cast<size_t>(sy) * w + sx] += k.at(dy, dx) * g;
        }
      }
    }
}

inline void resample_rows_adjoint(const ResamplePlan& plan, const double* gout,
                                  int h, double* gin) {
  for (int y = 0; y < h; ++y) {
    const double* grow = gout + static_cast<size_t>(y) * plan.out_size;
    double* irow = gin + static_cast<size_t>(y) * plan.in_size;
    for (int o = 0; o < plan.out_size; ++o) {
      const size_t base = static_cast<size_t>(o) * plan.taps;
      for (int t = 0; t < plan.taps; ++t)
        irow[plan.index[base + t]] += plan.weight[base + t] * grow[o];
    }
  }
}

inline void resample_cols_adjoint(const ResamplePlan& plan, const double* gout,
                                  int w, double* gin) {
  for (int o = 0; o < plan.out_size; ++o) {
    const double* grow = gout + static_cast<size_t>(o) * w;
    const size_t base = static_cast<size_t>(o) * plan.taps;
    for (int t = 0; t < plan.taps; ++t) {
      double* irow = gin + static_cast<size_t>(plan.index[base + t]) * w;
      const double wgt = plan.weight[base + t];
      for (int x = 0; x < w; ++x) irow[x] += wgt * grow[x];
    }
  }
}

inline void warp_plane_adjoint(const double* gout, int h, int w,
                               const FlowField& flow, double* gin) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const double g = gout[i];
      if (g == 0.0) continue;
      const double sx = x + flow.u[i];
      const double sy = y + flow.v[i];
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const int x0c = std::clamp(x0, 0, w - 1);
      const int x1c = std::clamp(x0 + 1, 0, w - 1);
      const int y0c = std::clamp(y0, 0, h - 1);
      const int y1c = std::clamp(y0 + 1, 0, h - 1);
      gin[static_cast<size_t>(y0c) * w + x0c] += g * (1.0 - fy) * (1.0 - fx);
      gin[static_cast<size_t>(y0c) * w + x1c] += g * (1.0 - fy) * fx;
      gin[static_cast<size_t>(y1c) * w + x0c] += g * fy * (1.0 - fx);
      gin[static_cast<size_t>(y1c) * w + x1c] += g * fy * fx;
    }
}

// Shared degradation chain for one plane: warp, optional blur, downsample.
struct DegradePlanes {
  int hq_h, hq_w, lq_h, lq_w;
  bool use_psf;
  Kernel psf;  // already flipped for true convolution
  ResamplePlan plan_x, plan_y;

  DegradePlanes(int h, int w, const DegradationConfig& cfg)
      : hq_h(h), hq_w(w), lq_h(h / cfg.scale_s), lq_w(w / cfg.scale_s),
        use_psf(cfg.psf.enabled) {
    if (use_psf)
      psf = flipped(gaussian_kernel(cfg.psf.sigma, cfg.psf.radius));
    plan_x = make_lanczos_plan(w, lq_w, cfg.lanczos_lobes);
    plan_y = make_lanczos_plan(h, lq_h, cfg.lanczos_lobes);
  }

  void forward(const double* src, const FlowField& flow, double* dst) const {
    std::vector<double> warped(static_cast<size_t>(hq_h) * hq_w);
    warp_plane(src, hq_h, hq_w, flow, BoundaryMode::Replicate, warped.data());
    std::vector<double> blurred;
    const double* stage = warped.data();
    if (use_psf) {
      blurred.resize(warped.size());
      conv2d_plane(warped.data(), hq_h, hq_w, psf, BoundaryMode::Replicate,
                   blurred.data());
      stage = blurred.data();
    }
    std::vector<double> tmp(static_cast<size_t>(hq_h) * lq_w);
    resample_rows(plan_x, stage, hq_h, tmp.data());
    resample_cols(plan_y, tmp.data(), lq_w, dst);
  }

  void adjoint(const double* gout, const FlowField& flow, double* gsrc) const {
    std::vector<double> gtmp(static_cast<size_t>(hq_h) * lq_w, 0.0);
    resample_cols_adjoint(plan_y, gout, lq_w, gtmp.data());
    std::vector<double> ghq(static_cast<size_t>(hq_h) * hq_w, 0.0);
    resample_rows_adjoint(plan_x, gtmp.data(), hq_h, ghq.data());
    if (use_psf) {
      std::vector<double> gblur(ghq.size(), 0.0);
      conv2d_plane_adjoint(ghq.data(), hq_h, hq_w, psf, gblur.data());
      ghq.swap(gblur);
    }
    warp_plane_adjoint(ghq.data(), hq_h, hq_w, flow, gsrc);
  }
};

}  // namespace detail

// f_k applied to an image: warp at HQ, blur, downsample by 1/s. Output is
// clamped to [0,1] unless clamp = false (the synthesis path clamps, the
// comparison path may not).
inline Image apply_forward(const Image& y, const FlowField& flow_hq,
                           const DegradationConfig& cfg, bool clamp = true) {
  cfg.validate();
  require(y.height % cfg.scale_s == 0 && y.width % cfg.scale_s == 0,
          ErrorCode::DimNotDivisible,
          std::to_string(y.height) + "x" + std::to_string(y.width) +
              " not divisible by " + std::to_string(cfg.scale_s));
  require(flow_hq.height == y.height && flow_hq.width == y.width,
          ErrorCode::ShapeMismatch, "apply_forward flow vs image dims");
  const detail::DegradePlanes planes(y.height, y.width, cfg);
  Image out(y.channels, planes.lq_h, planes.lq_w);
  for (int c = 0; c < y.channels; ++c)
    planes.forward(y.plane(c), flow_hq, out.plane(c));
  if (clamp)
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// Differentiable twin of apply_forward: identical arithmetic, no clamping,
// gradients flow back through the three linear stages.
inline ad::Tensor apply_forward_diff(const ad::Tensor& y,
                                     const FlowField& flow_hq,
                                     const DegradationConfig& cfg) {
  cfg.validate();
  const ad::Shape ys = y.shape();
  require(ys.h % cfg.scale_s == 0 && ys.w % cfg.scale_s == 0,
          ErrorCode::DimNotDivisible,
          ys.str() + " not divisible by " + std::to_string(cfg.scale_s));
  require(flow_hq.height == ys.h && flow_hq.width == ys.w,
          ErrorCode::ShapeMismatch, "apply_forward_diff flow vs tensor dims");

  auto planes = std::make_shared<detail::DegradePlanes>(ys.h, ys.w, cfg);
  const bool rec = ad::detail::recording({&y});
  ad::Tensor out =
      ad::Tensor::leaf({ys.n, ys.c, planes->lq_h, planes->lq_w}, rec);
  const size_t in_plane = static_cast<size_t>(ys.h) * ys.w;
  const size_t out_plane = static_cast<size_t>(planes->lq_h) * planes->lq_w;
  for (int nc = 0; nc < ys.n * ys.c; ++nc)
    planes->forward(y.data() + static_cast<size_t>(nc) * in_plane, flow_hq,
                    out.data() + static_cast<size_t>(nc) * out_plane);

  if (rec) {
    ad::NodePtr yn = y.node(), on = out.node();
    auto fl = std::make_shared<FlowField>(flow_hq);
    ad::Tape::active()->record(on, [yn, on, planes, fl] {
      if (!yn->requires_grad) return;
      yn->ensure_grad();
      const size_t in_plane =
          static_cast<size_t>(planes->hq_h) * planes->hq_w;
      const size_t out_plane =
          static_cast<size_t>(planes->lq_h) * planes->lq_w;
      const int ncs = on->shape.n * on->shape.c;
      for (int nc = 0; nc < ncs; ++nc)
        planes->adjoint(on->grad.data() + static_cast<size_t>(nc) * out_plane,
                        *fl,
                        yn->grad.data() + static_cast<size_t>(nc) * in_plane);
    });
  }
  return out;
}

// eta_k: Poisson shot noise on the clean signal, then additive Gaussian
// read noise (default order), clamped back to [0,1].
inline Image add_noise(const Image& img, const NoiseConfig& n, Rng& rng) {
  Image out = img;
  if (!n.enabled()) return out;
  const double peak = n.poisson_peak;
  const double sigma = n.sigma_eta;
  for (double& v : out.data) {
    if (n.mix_mode == NoiseMix::PoissonThenAdditive) {
      if (peak > 0.0)
        v = static_cast<double>(rng.poisson(peak * std::max(v, 0.0))) / peak;
      if (sigma > 0.0) v += sigma * rng.normal();
    } else {
      if (sigma > 0.0) v += sigma * rng.normal();
      if (peak > 0.0)
        v = static_cast<double>(rng.poisson(peak * std::max(v, 0.0))) / peak;
    }
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

// Back-projection data term: sum over frames of the squared residual between
// the degraded reconstruction and each observation, in fixed k order.
inline ad::Tensor backprojection_loss(const ad::Tensor& y,
                                      const std::vector<Image>& frames,
                                      const std::vector<FlowField>& flows_hq,
                                      const DegradationConfig& cfg) {
  require(!frames.empty(), ErrorCode::LengthMismatch, "no frames");
  require(frames.size() == flows_hq.size(), ErrorCode::LengthMismatch,
          std::to_string(frames.size()) + " frames vs " +
              std::to_string(flows_hq.size()) + " flows");
  ad::Tensor loss;
  for (size_t k = 0; k < frames.size(); ++k) {
    require(frames[k].same_shape(frames[0]), ErrorCode::ShapeMismatch,
            "frame " + std::to_string(k) + " shape");
    ad::Tensor term =
        ad::mse_sum(apply_forward_diff(y, flows_hq[k], cfg), frames[k]);
    loss = k == 0 ? term : ad::add(loss, term);
  }
  return loss;
}

}  // namespace dipli
