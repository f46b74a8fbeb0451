#pragma once

// Untrained U-Net prior: encoder/decoder with instance norm, symmetric skip
// concatenation, and a multi-step upsampling head that magnifies by the
// configured scale factor before a sigmoid output.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dipli/autodiff.hpp"
#include "dipli/error.hpp"
#include "dipli/rng.hpp"

namespace dipli {

struct UNetConfig {
  int stages = 4;
  int width = 128;           // feature channels per stage (constant)
  int latent_channels = 32;
  double dropout_p = 0.05;
  int scale_s = 2;           // output magnification: 1, 2, 4 or 8
  int out_channels = 1;

  void validate() const {
    require(stages >= 1 && width >= 1 && latent_channels >= 1 &&
                out_channels >= 1,
            ErrorCode::InvalidConfig, "unet dims");
    require(dropout_p >= 0.0 && dropout_p < 1.0, ErrorCode::InvalidConfig,
            "dropout_p in [0,1)");
    require(scale_s == 1 || scale_s == 2 || scale_s == 4 || scale_s == 8,
            ErrorCode::InvalidConfig, "scale_s in {1,2,4,8}");
  }

  int head_steps() const {
    int steps = 0;
    for (int s = scale_s; s > 1; s /= 2) ++steps;
    return steps;
  }
};

namespace detail {

struct Conv {
  ad::Tensor w, b;
};

struct Norm {
  ad::Tensor gamma, beta;
};

// [conv3x3 -> instance norm -> ReLU -> dropout] x2
struct DoubleBlock {
  Conv conv1, conv2;
  Norm norm1, norm2;
};

}  // namespace detail

struct Generator {
  UNetConfig config;
  std::vector<detail::DoubleBlock> encoder;
  detail::DoubleBlock bottleneck;
  std::vector<detail::Conv> skip_proj;  // 1x1, 2W -> W, one per stage
  std::vector<detail::DoubleBlock> decoder;
  std::vector<detail::Conv> head_up;    // 3x3 W -> W after each upsample
  detail::Conv head_out;                // final 3x3 -> out_channels

  std::vector<std::pair<std::string, ad::Tensor>> named_params() const {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    auto add_conv = [&](const std::string& name, const detail::Conv& c) {
      out.emplace_back(name + ".w", c.w);
      out.emplace_back(name + ".b", c.b);
    };
    auto add_norm = [&](const std::string& name, const detail::Norm& n) {
      out.emplace_back(name + ".gamma", n.gamma);
      out.emplace_back(name + ".beta", n.beta);
    };
    auto add_block = [&](const std::string& name,
                         const detail::DoubleBlock& b) {
      add_conv(name + ".conv1", b.conv1);
      add_norm(name + ".norm1", b.norm1);
      add_conv(name + ".conv2", b.conv2);
      add_norm(name + ".norm2", b.norm2);
    };
    for (size_t i = 0; i < encoder.size(); ++i)
      add_block("enc" + std::to_string(i + 1), encoder[i]);
    add_block("bottleneck", bottleneck);
    for (size_t i = 0; i < decoder.size(); ++i) {
      add_conv("dec" + std::to_string(i + 1) + ".proj", skip_proj[i]);
      add_block("dec" + std::to_string(i + 1), decoder[i]);
    }
    for (size_t i = 0; i < head_up.size(); ++i)
      add_conv("head.up" + std::to_string(i + 1), head_up[i]);
    add_conv("head.out", head_out);
    return out;
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.numel();
    return n;
  }
};

namespace detail {

inline Conv make_conv(int out_c, int in_c, int k, Rng& rng) {
  Conv c;
  c.w = ad::Tensor::leaf({out_c, in_c, k, k}, true);
  const double std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
  for (size_t i = 0; i < c.w.numel(); ++i) c.w.data()[i] = rng.normal(0, std);
  c.b = ad::Tensor::leaf({1, out_c, 1, 1}, true);
  return c;
}

inline Norm make_norm(int channels) {
  Norm n;
  n.gamma = ad::Tensor::leaf({1, channels, 1, 1}, true);
  for (size_t i = 0; i < n.gamma.numel(); ++i) n.gamma.data()[i] = 1.0;
  n.beta = ad::Tensor::leaf({1, channels, 1, 1}, true);
  return n;
}

inline DoubleBlock make_block(int in_c, int width, Rng& rng) {
  DoubleBlock b;
  b.conv1 = make_conv(width, in_c, 3, rng);
  b.norm1 = make_norm(width);
  b.conv2 = make_conv(width, width, 3, rng);
  b.norm2 = make_norm(width);
  return b;
}

inline ad::Tensor run_block(const DoubleBlock& b, const ad::Tensor& x,
                            double dropout_p, bool train, Rng& rng) {
  ad::Tensor h = ad::relu(ad::instance_norm(ad::conv2d(x, b.conv1.w, b.conv1.b),
                                            b.norm1.gamma, b.norm1.beta));
  h = ad::dropout(h, dropout_p, train, rng);
  h = ad::relu(ad::instance_norm(ad::conv2d(h, b.conv2.w, b.conv2.b),
                                 b.norm2.gamma, b.norm2.beta));
  return ad::dropout(h, dropout_p, train, rng);
}

}  // namespace detail

inline Generator build_unet(const UNetConfig& cfg, Rng& rng) {
  cfg.validate();
  Generator g;
  g.config = cfg;
  int in_c = cfg.latent_channels;
  for (int i = 0; i < cfg.stages; ++i) {
    g.encoder.push_back(detail::make_block(in_c, cfg.width, rng));
    in_c = cfg.width;
  }
  g.bottleneck = detail::make_block(cfg.width, cfg.width, rng);
  for (int i = 0; i < cfg.stages; ++i) {
    g.skip_proj.push_back(detail::make_conv(cfg.width, 2 * cfg.width, 1, rng));
    g.decoder.push_back(detail::make_block(cfg.width, cfg.width, rng));
  }
  for (int i = 0; i < cfg.head_steps(); ++i)
    g.head_up.push_back(detail::make_conv(cfg.width, cfg.width, 3, rng));
  g.head_out = detail::make_conv(cfg.out_channels, cfg.width, 3, rng);
  return g;
}

// z ~ N(0, I), fixed for a whole optimization.
inline ad::Tensor sample_latent(int h, int w, const UNetConfig& cfg,
                                Rng& rng) {
  cfg.validate();
  const int div = 1 << cfg.stages;
  require(h % div == 0 && w % div == 0, ErrorCode::BadDims,
          "latent dims " + std::to_string(h) + "x" + std::to_string(w) +
              " must divide by " + std::to_string(div));
  ad::Tensor z = ad::Tensor::leaf({1, cfg.latent_channels, h, w});
  for (size_t i = 0; i < z.numel(); ++i) z.data()[i] = rng.normal();
  return z;
}

// z + N(0, sigma_z^2), leaving z untouched.
inline ad::Tensor perturb_latent(const ad::Tensor& z, double sigma_z,
                                 Rng& rng) {
  require(sigma_z >= 0.0, ErrorCode::InvalidConfig, "sigma_z >= 0");
  ad::Tensor out = ad::Tensor::leaf(z.shape());
  if (sigma_z == 0.0) {
    std::copy(z.value().begin(), z.value().end(), out.data());
    return out;
  }
  for (size_t i = 0; i < z.numel(); ++i)
    out.data()[i] = z.data()[i] + sigma_z * rng.normal();
  return out;
}

// G_theta(z): records to the active tape when gradients are required.
// Dropout draws come from `rng` only in train mode; eval mode is
// deterministic.
inline ad::Tensor forward(const Generator& g, const ad::Tensor& z, bool train,
                          Rng& rng) {
  const UNetConfig& cfg = g.config;
  const ad::Shape zs = z.shape();
  require(zs.c == cfg.latent_channels, ErrorCode::BadDims,
          "latent channels " + std::to_string(zs.c));
  const int div = 1 << cfg.stages;
  require(zs.h % div == 0 && zs.w % div == 0, ErrorCode::BadDims,
          "latent dims " + zs.str());

  ad::Tensor x = z;
  std::vector<ad::Tensor> skips;
  for (int i = 0; i < cfg.stages; ++i) {
    x = detail::run_block(g.encoder[i], x, cfg.dropout_p, train, rng);
    skips.push_back(x);
    x = ad::avg_pool2(x);
  }
  x = detail::run_block(g.bottleneck, x, cfg.dropout_p, train, rng);
  for (int i = cfg.stages - 1; i >= 0; --i) {
    x = ad::upsample_bilinear2(x);
    x = ad::concat_channels(x, skips[i]);
    const int d = cfg.stages - 1 - i;
    x = ad::conv2d(x, g.skip_proj[d].w, g.skip_proj[d].b, 1, 0);
    x = detail::run_block(g.decoder[d], x, cfg.dropout_p, train, rng);
  }
  for (const detail::Conv& c : g.head_up) {
    x = ad::upsample_bilinear2(x);
    x = ad::relu(ad::conv2d(x, c.w, c.b));
  }
  return ad::sigmoid(ad::conv2d(x, g.head_out.w, g.head_out.b));
}

inline void save_generator(const Generator& g, const std::string& path) {
  ad::save_checkpoint(path, g.named_params());
}

inline void load_generator(Generator& g, const std::string& path) {
  const auto loaded = ad::load_checkpoint(path);
  auto params = g.named_params();
  require(loaded.size() == params.size(), ErrorCode::LengthMismatch,
          "checkpoint tensor count");
  for (size_t i = 0; i < params.size(); ++i) {
    require(loaded[i].first == params[i].first, ErrorCode::CorruptHeader,
            "checkpoint tensor name " + loaded[i].first);
    require(loaded[i].second.shape() == params[i].second.shape(),
            ErrorCode::ShapeMismatch, "checkpoint tensor " + loaded[i].first);
    std::copy(loaded[i].second.value().begin(),
              loaded[i].second.value().end(), params[i].second.data());
  }
}

}  // namespace dipli
