#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dipli/error.hpp"
#include "dipli/image.hpp"
#include "dipli/rng.hpp"

namespace dipli::ad {

// Shapes are carried as (N, C, H, W); lower-rank quantities use size-1 axes
// (a bias vector is (1, C, 1, 1), a scalar loss is (1, 1, 1, 1)).
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  size_t numel() const {
    return static_cast<size_t>(n) * c * static_cast<size_t>(h) * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

class Node {
 public:
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantics handle onto a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape s, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = s;
    t.node_->value.assign(s.numel(), 0.0);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_image(const Image& img) {
    Tensor t = leaf({1, img.channels, img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), t.data());
    return t;
  }

  Image to_image() const {
    const Shape s = shape();
    require(s.n == 1, ErrorCode::ShapeMismatch,
            "to_image expects batch 1, got " + s.str());
    Image img(s.c, s.h, s.w);
    std::copy(value().begin(), value().end(), img.data.begin());
    return img;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t numel() const { return node_->value.size(); }

  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Ordered record of executed operations. Recording order is a topological
// order by construction (an op's inputs exist before the op runs), so a
// single reverse sweep propagates all gradients. One optimization loop owns
// one tape; tapes nest per thread.
class Tape {
 public:
  Tape() : prev_(active_ref()) { active_ref() = this; }
  ~Tape() { active_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_ref(); }

  void record(NodePtr out, std::function<void()> backward_fn) {
    entries_.push_back({std::move(out), std::move(backward_fn)});
  }

  // Swap the active tape (nullptr suspends recording); returns the previous.
  static Tape* exchange(Tape* t) {
    Tape* old = active_ref();
    active_ref() = t;
    return old;
  }

  void clear() { entries_.clear(); }
  size_t size() const { return entries_.size(); }

  void replay_backward() {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (!it->out->grad.empty()) it->fn();
  }

 private:
  struct Entry {
    NodePtr out;
    std::function<void()> fn;
  };

  static Tape*& active_ref() {
    static thread_local Tape* active = nullptr;
    return active;
  }

  std::vector<Entry> entries_;
  Tape* prev_;
};

// Suspends tape recording for its scope (e.g. evaluation-only forwards
// inside an optimization loop).
class NoGradScope {
 public:
  NoGradScope() : prev_(Tape::exchange(nullptr)) {}
  ~NoGradScope() { Tape::exchange(prev_); }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

namespace detail {

inline bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline Tensor make_output(Shape s, bool requires_grad) {
  Tensor t = Tensor::leaf(s, requires_grad);
  return t;
}

inline void accumulate(const NodePtr& n, const std::vector<double>& delta) {
  n->ensure_grad();
  for (size_t i = 0; i < delta.size(); ++i) n->grad[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "add: " + a.shape().str() + " vs " + b.shape().str());
  const bool rec = detail::recording({&a, &b});
  Tensor out = detail::make_output(a.shape(), rec);
  for (size_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(on, [an, bn, on] {
      if (an->requires_grad) detail::accumulate(an, on->grad);
      if (bn->requires_grad) detail::accumulate(bn, on->grad);
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "mul: " + a.shape().str() + " vs " + b.shape().str());
  const bool rec = detail::recording({&a, &b});
  Tensor out = detail::make_output(a.shape(), rec);
  for (size_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(on, [an, bn, on] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

inline Tensor sum(const Tensor& x) {
  const bool rec = detail::recording({&x});
  Tensor out = detail::make_output({1, 1, 1, 1}, rec);
  double acc = 0.0;
  const double* px = x.data();
  const size_t n = x.numel();
#pragma omp simd reduction(+ : acc)
  for (size_t i = 0; i < n; ++i) acc += px[i];
  out.data()[0] = acc;
  if (rec) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double g = on->grad[0];
      for (double& v : xn->grad) v += g;
    });
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  const bool rec = detail::recording({&x});
  Tensor out = detail::make_output(x.shape(), rec);
  for (size_t i = 0; i < x.numel(); ++i)
    out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  if (rec) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        if (xn->value[i] > 0.0) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  const bool rec = detail::recording({&x});
  Tensor out = detail::make_output(x.shape(), rec);
  for (size_t i = 0; i < x.numel(); ++i)
    out.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  if (rec) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        const double s = on->value[i];
        xn->grad[i] += on->grad[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

// Inverted dropout: training zeroes with probability p and rescales the
// survivors by 1/(1-p); evaluation is the identity.
inline Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  require(p >= 0.0 && p < 1.0, ErrorCode::InvalidConfig,
          "dropout p must be in [0,1)");
  if (!train || p == 0.0) return x;
  const bool rec = detail::recording({&x});
  Tensor out = detail::make_output(x.shape(), rec);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  const double keep_scale = 1.0 / (1.0 - p);
  for (size_t i = 0; i < x.numel(); ++i) {
    const double m = rng.uniform() < p ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  if (rec) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on, mask] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * (*mask)[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace detail {

inline void pad_plane(const double* src, int h, int w, int pad, double* dst) {
  const int pw = w + 2 * pad;
  std::fill(dst, dst + static_cast<size_t>(h + 2 * pad) * pw, 0.0);
  for (int y = 0; y < h; ++y)
    std::memcpy(dst + static_cast<size_t>(y + pad) * pw + pad,
                src + static_cast<size_t>(y) * w, sizeof(double) * w);
}

}  // namespace detail

// Cross-correlation with zero padding; w is (OC, IC, KH, KW), b is
// (1, OC, 1, 1). Gradients are defined w.r.t. x, w, and b.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                     int stride = 1, int pad = 1) {
  const Shape xs = x.shape(), ws = w.shape();
  require(xs.c == ws.c, ErrorCode::ShapeMismatch,
          "conv2d: input channels " + std::to_string(xs.c) +
              " vs kernel channels " + std::to_string(ws.c));
  require(b.shape() == Shape{1, ws.n, 1, 1}, ErrorCode::ShapeMismatch,
          "conv2d: bias shape " + b.shape().str());
  require(stride >= 1 && pad >= 0, ErrorCode::InvalidConfig, "conv2d params");
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  require(oh >= 1 && ow >= 1, ErrorCode::ShapeMismatch,
          "conv2d: kernel larger than padded input");

  const bool rec = detail::recording({&x, &w, &b});
  Tensor out = detail::make_output({xs.n, ws.n, oh, ow}, rec);

  const int ph = xs.h + 2 * pad, pw = xs.w + 2 * pad;
  const size_t pplane = static_cast<size_t>(ph) * pw;
  std::vector<double> xpad(static_cast<size_t>(xs.n) * xs.c * pplane);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      detail::pad_plane(x.data() + (static_cast<size_t>(n) * xs.c + c) *
                                        xs.h * xs.w,
                        xs.h, xs.w, pad,
                        xpad.data() + (static_cast<size_t>(n) * xs.c + c) *
                                          pplane);

  const size_t oplane = static_cast<size_t>(oh) * ow;
  const size_t kplane = static_cast<size_t>(ws.h) * ws.w;
  for (int n = 0; n < xs.n; ++n) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < ws.n; ++oc) {
      double* oplane_ptr =
          out.data() + (static_cast<size_t>(n) * ws.n + oc) * oplane;
      std::fill(oplane_ptr, oplane_ptr + oplane, b.data()[oc]);
      for (int ic = 0; ic < xs.c; ++ic) {
        const double* pp =
            xpad.data() + (static_cast<size_t>(n) * xs.c + ic) * pplane;
        const double* kw =
            w.data() + (static_cast<size_t>(oc) * xs.c + ic) * kplane;
        for (int ky = 0; ky < ws.h; ++ky) {
          for (int kx = 0; kx < ws.w; ++kx) {
            const double coeff = kw[static_cast<size_t>(ky) * ws.w + kx];
            if (coeff == 0.0) continue;
            for (int oy = 0; oy < oh; ++oy) {
              const double* srow =
                  pp + static_cast<size_t>(oy * stride + ky) * pw + kx;
              double* orow = oplane_ptr + static_cast<size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = 0; ox < ow; ++ox) orow[ox] += coeff * srow[ox];
              } else {
                for (int ox = 0; ox < ow; ++ox)
                  orow[ox] += coeff * srow[static_cast<size_t>(ox) * stride];
              }
            }
          }
        }
      }
    }
  }

  if (rec) {
    NodePtr xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    const int s = stride, p = pad;
    Tape::active()->record(on, [xn, wn, bn, on, s, p] {
      const Shape xs = xn->shape, ws = wn->shape, os = on->shape;
      const int ph = xs.h + 2 * p, pw = xs.w + 2 * p;
      const size_t pplane = static_cast<size_t>(ph) * pw;
      const size_t oplane = static_cast<size_t>(os.h) * os.w;
      const size_t kplane = static_cast<size_t>(ws.h) * ws.w;

      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int n = 0; n < os.n; ++n)
          for (int oc = 0; oc < os.c; ++oc) {
            const double* g =
                on->grad.data() + (static_cast<size_t>(n) * os.c + oc) * oplane;
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (size_t i = 0; i < oplane; ++i) acc += g[i];
            bn->grad[oc] += acc;
          }
      }

      std::vector<double> xpad;
      if (wn->requires_grad) {
        xpad.resize(static_cast<size_t>(xs.n) * xs.c * pplane);
        for (int n = 0; n < xs.n; ++n)
          for (int c = 0; c < xs.c; ++c)
            detail::pad_plane(
                xn->value.data() +
                    (static_cast<size_t>(n) * xs.c + c) * xs.h * xs.w,
                xs.h, xs.w, p,
                xpad.data() + (static_cast<size_t>(n) * xs.c + c) * pplane);
        wn->ensure_grad();
        for (int n = 0; n < xs.n; ++n) {
#pragma omp parallel for schedule(static)
          for (int oc = 0; oc < ws.n; ++oc) {
            const double* g =
                on->grad.data() + (static_cast<size_t>(n) * os.c + oc) * oplane;
            for (int ic = 0; ic < xs.c; ++ic) {
              const double* pp =
                  xpad.data() + (static_cast<size_t>(n) * xs.c + ic) * pplane;
              double* gw =
                  wn->grad.data() + (static_cast<size_t>(oc) * xs.c + ic) * kplane;
              for (int ky = 0; ky < ws.h; ++ky) {
                for (int kx = 0; kx < ws.w; ++kx) {
                  double acc = 0.0;
                  for (int oy = 0; oy < os.h; ++oy) {
                    const double* srow =
                        pp + static_cast<size_t>(oy * s + ky) * pw + kx;
                    const double* grow = g + static_cast<size_t>(oy) * os.w;
                    if (s == 1) {
#pragma omp simd reduction(+ : acc)
                      for (int ox = 0; ox < os.w; ++ox)
                        acc += grow[ox] * srow[ox];
                    } else {
#pragma omp simd reduction(+ : acc)
                      for (int ox = 0; ox < os.w; ++ox)
                        acc += grow[ox] * srow[static_cast<size_t>(ox) * s];
                    }
                  }
                  gw[static_cast<size_t>(ky) * ws.w + kx] += acc;
                }
              }
            }
          }
        }
      }

      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int n = 0; n < xs.n; ++n) {
#pragma omp parallel for schedule(static)
          for (int ic = 0; ic < xs.c; ++ic) {
            std::vector<double> gpad(pplane, 0.0);
            for (int oc = 0; oc < ws.n; ++oc) {
              const double* g = on->grad.data() +
                                (static_cast<size_t>(n) * os.c + oc) * oplane;
              const double* kw =
                  wn->value.data() + (static_cast<size_t>(oc) * xs.c + ic) * kplane;
              for (int ky = 0; ky < ws.h; ++ky) {
                for (int kx = 0; kx < ws.w; ++kx) {
                  const double coeff = kw[static_cast<size_t>(ky) * ws.w + kx];
                  if (coeff == 0.0) continue;
                  for (int oy = 0; oy < os.h; ++oy) {
                    double* grow =
                        gpad.data() + static_cast<size_t>(oy * s + ky) * pw + kx;
                    const double* orow = g + static_cast<size_t>(oy) * os.w;
                    if (s == 1) {
                      for (int ox = 0; ox < os.w; ++ox)
                        grow[ox] += coeff * orow[ox];
                    } else {
                      for (int ox = 0; ox < os.w; ++ox)
                        grow[static_cast<size_t>(ox) * s] += coeff * orow[ox];
                    }
                  }
                }
              }
            }
            double* gx = xn->grad.data() +
                         (static_cast<size_t>(n) * xs.c + ic) * xs.h * xs.w;
            for (int y = 0; y < xs.h; ++y)
              for (int x2 = 0; x2 < xs.w; ++x2)
                gx[static_cast<size_t>(y) * xs.w + x2] +=
                    gpad[static_cast<size_t>(y + p) * pw + (x2 + p)];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// instance_norm
// ---------------------------------------------------------------------------

inline Tensor instance_norm(const Tensor& x, const Tensor& gamma,
                            const Tensor& beta, double eps = 1e-5) {
  const Shape xs = x.shape();
  require(gamma.shape() == Shape{1, xs.c, 1, 1} &&
              beta.shape() == Shape{1, xs.c, 1, 1},
          ErrorCode::ShapeMismatch, "instance_norm affine shapes");
  const bool rec = detail::recording({&x, &gamma, &beta});
  Tensor out = detail::make_output(xs, rec);
  const size_t plane = static_cast<size_t>(xs.h) * xs.w;
  const double inv_m = 1.0 / static_cast<double>(plane);

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto istd = std::make_shared<std::vector<double>>(
      static_cast<size_t>(xs.n) * xs.c);

  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const size_t base = (static_cast<size_t>(n) * xs.c + c) * plane;
      const double* px = x.data() + base;
      double mean = 0.0;
#pragma omp simd reduction(+ : mean)
      for (size_t i = 0; i < plane; ++i) mean += px[i];
      mean *= inv_m;
      double var = 0.0;
#pragma omp simd reduction(+ : var)
      for (size_t i = 0; i < plane; ++i) {
        const double d = px[i] - mean;
        var += d * d;
      }
      var *= inv_m;
      const double is = 1.0 / std::sqrt(var + eps);
      (*istd)[static_cast<size_t>(n) * xs.c + c] = is;
      const double g = gamma.data()[c], bt = beta.data()[c];
      double* po = out.data() + base;
      double* ph = xhat->data() + base;
      for (size_t i = 0; i < plane; ++i) {
        const double xh = (px[i] - mean) * is;
        ph[i] = xh;
        po[i] = g * xh + bt;
      }
    }
  }

  if (rec) {
    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(),
            on = out.node();
    Tape::active()->record(on, [xn, gn, bn, on, xhat, istd, inv_m] {
      const Shape xs = xn->shape;
      const size_t plane = static_cast<size_t>(xs.h) * xs.w;
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
          const size_t base = (static_cast<size_t>(n) * xs.c + c) * plane;
          const double* g = on->grad.data() + base;
          const double* xh = xhat->data() + base;
          double sum_g = 0.0, sum_gxh = 0.0;
#pragma omp simd reduction(+ : sum_g, sum_gxh)
          for (size_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gxh += g[i] * xh[i];
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            gn->grad[c] += sum_gxh;
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad[c] += sum_g;
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            const double gm = gn->value[c];
            const double is = (*istd)[static_cast<size_t>(n) * xs.c + c];
            const double mg = sum_g * inv_m;
            const double mgxh = sum_gxh * inv_m;
            double* gx = xn->grad.data() + base;
            for (size_t i = 0; i < plane; ++i)
              gx[i] += gm * is * (g[i] - mg - xh[i] * mgxh);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling / upsampling / concat
// ---------------------------------------------------------------------------

inline Tensor avg_pool2(const Tensor& x) {
  const Shape xs = x.shape();
  require(xs.h % 2 == 0 && xs.w % 2 == 0, ErrorCode::OddSpatialDims,
          "avg_pool2 on " + xs.str());
  const bool rec = detail::recording({&x});
  Tensor out = detail::make_output({xs.n, xs.c, xs.h / 2, xs.w / 2}, rec);
  const int oh = xs.h / 2, ow = xs.w / 2;
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const double* px = x.data() + static_cast<size_t>(nc) * xs.h * xs.w;
    double* po = out.data() + static_cast<size_t>(nc) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const double* r0 = px + static_cast<size_t>(2 * y) * xs.w + 2 * xx;
        const double* r1 = r0 + xs.w;
        po[static_cast<size_t>(y) * ow + xx] =
            0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  if (rec) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const Shape xs = xn->shape;
      const int oh = xs.h / 2, ow = xs.w / 2;
      for (int nc = 0; nc < xs.n * xs.c; ++nc) {
        double* gx = xn->grad.data() + static_cast<size_t>(nc) * xs.h * xs.w;
        const double* go = on->grad.data() + static_cast<size_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            const double g = 0.25 * go[static_cast<size_t>(y) * ow + xx];
            double* r0 = gx + static_cast<size_t>(2 * y) * xs.w + 2 * xx;
            double* r1 = r0 + xs.w;
            r0[0] += g;
            r0[1] += g;
            r1[0] += g;
            r1[1] += g;
          }
      }
    });
  }
  return out;
}

namespace detail {

struct LinearTap {
  int i0, i1;
  double w0, w1;
};

// align-corners=false doubling: out sample i reads source (i + 0.5)/2 - 0.5.
inline std::vector<LinearTap> upsample2_taps(int in_size) {
  std::vector<LinearTap> taps(static_cast<size_t>(in_size) * 2);
  for (int i = 0; i < 2 * in_size; ++i) {
    const double src = (i + 0.5) * 0.5 - 0.5;
    const int lo = static_cast<int>(std::floor(src));
    const double f = src - lo;
    taps[i].i0 = std::clamp(lo, 0, in_size - 1);
    taps[i].i1 = std::clamp(lo + 1, 0, in_size - 1);
    taps[i].w0 = 1.0 - f;
    taps[i].w1 = f;
  }
  return taps;
}

}  // namespace detail

inline Tensor upsample_bilinear2(const Tensor& x) {
  const Shape xs = x.shape();
  const bool rec = detail::recording({&x});
  Tensor out = detail::make_output({xs.n, xs.c, xs.h * 2, xs.w * 2}, rec);
  const auto ty = detail::upsample2_taps(xs.h);
  const auto tx = detail::upsample2_taps(xs.w);
  const int oh = xs.h * 2, ow = xs.w * 2;
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const double* px = x.data() + static_cast<size_t>(nc) * xs.h * xs.w;
    double* po = out.data() + static_cast<size_t>(nc) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double* r0 = px + static_cast<size_t>(ty[y].i0) * xs.w;
      const double* r1 = px + static_cast<size_t>(ty[y].i1) * xs.w;
      double* orow = po + static_cast<size_t>(y) * ow;
      for (int xx = 0; xx < ow; ++xx) {
        const double a = ty[y].w0 * r0[tx[xx].i0] + ty[y].w1 * r1[tx[xx].i0];
        const double b = ty[y].w0 * r0[tx[xx].i1] + ty[y].w1 * r1[tx[xx].i1];
        orow[xx] = tx[xx].w0 * a + tx[xx].w1 * b;
      }
    }
  }
  if (rec) {
    NodePtr xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const Shape xs = xn->shape;
      const auto ty = detail::upsample2_taps(xs.h);
      const auto tx = detail::upsample2_taps(xs.w);
      const int oh = xs.h * 2, ow = xs.w * 2;
      for (int nc = 0; nc < xs.n * xs.c; ++nc) {
        double* gx = xn->grad.data() + static_cast<size_t>(nc) * xs.h * xs.w;
        const double* go = on->grad.data() + static_cast<size_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          double* r0 = gx + static_cast<size_t>(ty[y].i0) * xs.w;
          double* r1 = gx + static_cast<size_t>(ty[y].i1) * xs.w;
          const double* grow = go + static_cast<size_t>(y) * ow;
          for (int xx = 0; xx < ow; ++xx) {
            const double g = grow[xx];
            r0[tx[xx].i0] += ty[y].w0 * tx[xx].w0 * g;
            r0[tx[xx].i1] += ty[y].w0 * tx[xx].w1 * g;
            r1[tx[xx].i0] += ty[y].w1 * tx[xx].w0 * g;
            r1[tx[xx].i1] += ty[y].w1 * tx[xx].w1 * g;
          }
        }
      }
    });
  }
  return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape as = a.shape(), bs = b.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
          ErrorCode::ShapeMismatch,
          "concat_channels: " + as.str() + " vs " + bs.str());
  const bool rec = detail::recording({&a, &b});
  Tensor out = detail::make_output({as.n, as.c + bs.c, as.h, as.w}, rec);
  const size_t plane = static_cast<size_t>(as.h) * as.w;
  for (int n = 0; n < as.n; ++n) {
    std::memcpy(out.data() + static_cast<size_t>(n) * (as.c + bs.c) * plane,
                a.data() + static_cast<size_t>(n) * as.c * plane,
                sizeof(double) * as.c * plane);
    std::memcpy(out.data() +
                    (static_cast<size_t>(n) * (as.c + bs.c) + as.c) * plane,
                b.data() + static_cast<size_t>(n) * bs.c * plane,
                sizeof(double) * bs.c * plane);
  }
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(on, [an, bn, on] {
      const Shape as = an->shape, bs = bn->shape;
      const size_t plane = static_cast<size_t>(as.h) * as.w;
      for (int n = 0; n < as.n; ++n) {
        const double* g =
            on->grad.data() + static_cast<size_t>(n) * (as.c + bs.c) * plane;
        if (an->requires_grad) {
          an->ensure_grad();
          double* ga = an->grad.data() + static_cast<size_t>(n) * as.c * plane;
          for (size_t i = 0; i < as.c * plane; ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          double* gb = bn->grad.data() + static_cast<size_t>(n) * bs.c * plane;
          const double* gsrc = g + static_cast<size_t>(as.c) * plane;
          for (size_t i = 0; i < bs.c * plane; ++i) gb[i] += gsrc[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// loss and backward
// ---------------------------------------------------------------------------

// Sum (not mean) of squared differences against a fixed target.
inline Tensor mse_sum(const Tensor& pred, const Image& target) {
  const Shape ps = pred.shape();
  require(ps.n == 1 && ps.c == target.channels && ps.h == target.height &&
              ps.w == target.width,
          ErrorCode::ShapeMismatch,
          "mse_sum: " + ps.str() + " vs image " +
              std::to_string(target.channels) + "x" +
              std::to_string(target.height) + "x" +
              std::to_string(target.width));
  const bool rec = detail::recording({&pred});
  Tensor out = detail::make_output({1, 1, 1, 1}, rec);
  double acc = 0.0;
  const double* pp = pred.data();
  const double* pt = target.data.data();
  const size_t n = pred.numel();
#pragma omp simd reduction(+ : acc)
  for (size_t i = 0; i < n; ++i) {
    const double d = pp[i] - pt[i];
    acc += d * d;
  }
  out.data()[0] = acc;
  if (rec) {
    NodePtr pn = pred.node(), on = out.node();
    auto tgt = std::make_shared<std::vector<double>>(target.data);
    Tape::active()->record(on, [pn, on, tgt] {
      if (!pn->requires_grad) return;
      pn->ensure_grad();
      const double g = on->grad[0];
      for (size_t i = 0; i < pn->value.size(); ++i)
        pn->grad[i] += 2.0 * g * (pn->value[i] - (*tgt)[i]);
    });
  }
  return out;
}

// Reverse sweep from a scalar loss over the active tape. Gradients land in
// every requires_grad leaf reachable from the loss; the tape is then cleared.
inline void backward(const Tensor& loss) {
  require(loss.numel() == 1, ErrorCode::NonScalarLoss,
          "backward on shape " + loss.shape().str());
  Tape* tape = Tape::active();
  require(tape != nullptr, ErrorCode::NonScalarLoss,
          "backward without an active tape");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  tape->replay_backward();
  tape->clear();
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// Checks only the listed coordinates when `coords` is non-empty.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         Tensor x, double eps = 1e-4,
                         const std::vector<size_t>& coords = {}) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    Tensor loss = f(x);
    require(loss.numel() == 1, ErrorCode::NonScalarLoss, "grad_check f");
    backward(loss);
  }
  std::vector<double> analytic =
      x.has_grad() ? x.grad() : std::vector<double>(x.numel(), 0.0);

  auto eval = [&]() {
    Tape tape;  // records are discarded; only the value is used
    return f(x).data()[0];
  };

  std::vector<size_t> idx = coords;
  if (idx.empty()) {
    idx.resize(x.numel());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }

  double max_rel = 0.0;
  for (size_t i : idx) {
    const double saved = x.data()[i];
    x.data()[i] = saved + eps;
    const double fp = eval();
    x.data()[i] = saved - eps;
    const double fm = eval();
    x.data()[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(analytic[i] - numeric) /
                       std::max(1.0, std::abs(analytic[i]));
    max_rel = std::max(max_rel, rel);
  }
  x.zero_grad();
  return max_rel;
}

// ---------------------------------------------------------------------------
// parameter checkpoints
// ---------------------------------------------------------------------------

// Flat blob: magic "DIPB", u32 version, u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank (4), u32 dims, float64 payload.
// All integers and floats little-endian.
inline void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  f.write("DIPB", 4);
  put_u32(1);
  put_u32(static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(4);
    const Shape s = t.shape();
    put_u32(static_cast<uint32_t>(s.n));
    put_u32(static_cast<uint32_t>(s.c));
    put_u32(static_cast<uint32_t>(s.h));
    put_u32(static_cast<uint32_t>(s.w));
    static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big);
    if constexpr (std::endian::native == std::endian::little) {
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * 8));
    } else {
      for (size_t i = 0; i < t.numel(); ++i) {
        uint64_t u;
        std::memcpy(&u, &t.data()[i], 8);
        u = __builtin_bswap64(u);
        f.write(reinterpret_cast<const char*>(&u), 8);
      }
    }
  }
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    require(f.good(), ErrorCode::TruncatedData, "checkpoint " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  };
  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::memcmp(magic, "DIPB", 4) == 0,
          ErrorCode::UnknownFormat, "bad checkpoint magic in " + path);
  const uint32_t version = get_u32();
  require(version == 1, ErrorCode::UnknownFormat,
          "unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = get_u32();
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32();
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t rank = get_u32();
    require(rank == 4, ErrorCode::CorruptHeader, "checkpoint rank != 4");
    Shape s;
    s.n = static_cast<int>(get_u32());
    s.c = static_cast<int>(get_u32());
    s.h = static_cast<int>(get_u32());
    s.w = static_cast<int>(get_u32());
    Tensor t = Tensor::leaf(s);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * 8));
    require(f.good(), ErrorCode::TruncatedData, "checkpoint " + path);
    if constexpr (std::endian::native == std::endian::big) {
      for (size_t j = 0; j < t.numel(); ++j) {
        uint64_t u;
        std::memcpy(&u, &t.data()[j], 8);
        u = __builtin_bswap64(u);
        std::memcpy(&t.data()[j], &u, 8);
      }
    }
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

}  // namespace dipli::ad
