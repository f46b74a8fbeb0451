#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dipli/kernels.hpp"
#include "test_util.hpp"

using namespace dipli;

namespace {

// Brute-force reference convolution, replicate boundary.
Image conv_oracle(const Image& img, const Kernel& k) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int dy = -k.radius; dy <= k.radius; ++dy)
          for (int dx = -k.radius; dx <= k.radius; ++dx) {
            const int sy = std::clamp(y + dy, 0, img.height - 1);
            const int sx = std::clamp(x + dx, 0, img.width - 1);
            acc += k.at(dy, dx) * img.at(c, sy, sx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

double sinc(double t) { return t == 0.0 ? 1.0 : std::sin(M_PI * t) / (M_PI * t); }

// Direct evaluation of the windowed-sinc sum with clamped, renormalized taps.
// Written independently of the ResamplePlan machinery.
Image lanczos_oracle(const Image& img, int oh, int ow, int a) {
  Image out(img.channels, oh, ow);
  const double sy = static_cast<double>(img.height) / oh;
  const double sx = static_cast<double>(img.width) / ow;
  const double fy = std::max(1.0, sy), fx = std::max(1.0, sx);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double cy = (y + 0.5) * sy - 0.5;
        const double cx = (x + 0.5) * sx - 0.5;
        double acc = 0.0, wsum = 0.0;
        for (int iy = static_cast<int>(std::floor(cy - a * fy)) - 1;
             iy <= static_cast<int>(std::ceil(cy + a * fy)) + 1; ++iy) {
          const double ty = (cy - iy) / fy;
          if (std::abs(ty) >= a) continue;
          for (int ix = static_cast<int>(std::floor(cx - a * fx)) - 1;
               ix <= static_cast<int>(std::ceil(cx + a * fx)) + 1; ++ix) {
            const double tx = (cx - ix) / fx;
            if (std::abs(tx) >= a) continue;
            const double w = sinc(ty) * sinc(ty / a) * sinc(tx) * sinc(tx / a);
            acc += w * img.at(c, std::clamp(iy, 0, img.height - 1),
                              std::clamp(ix, 0, img.width - 1));
            wsum += w;
          }
        }
        out.at(c, y, x) = acc / wsum;
      }
  return out;
}

}  // namespace

TEST_CASE("gaussian kernel normalizes and peaks at center") {
  const Kernel k = gaussian_kernel(1.0, 3);
  double sum = 0.0;
  for (double w : k.weights) sum += w;
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));

  // Closed-form: center weight = 1 / sum over taps of exp(-(i^2+j^2)/2)
  double denom = 0.0;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) denom += std::exp(-(i * i + j * j) / 2.0);
  REQUIRE(k.at(0, 0) == Catch::Approx(1.0 / denom).epsilon(1e-12));
}

TEST_CASE("gaussian kernel delta limit") {
  const Kernel k = gaussian_kernel(1e-6, 1);
  REQUIRE(k.at(0, 0) == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(k.at(0, 1) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("gaussian kernel rejects non-positive sigma") {
  REQUIRE_THROWS_AS(gaussian_kernel(0.0, 1), Error);
  REQUIRE_THROWS_AS(gaussian_kernel(-1.0, 1), Error);
}

TEST_CASE("convolution preserves constants and identity kernel") {
  Image constant(1, 6, 7, 0.37);
  const Kernel g = gaussian_kernel(1.2, 4);
  const Image blurred = convolve2d(constant, g);
  for (double v : blurred.data) REQUIRE(v == Catch::Approx(0.37).margin(1e-12));

  Kernel ident;
  ident.radius = 0;
  ident.weights = {1.0};
  const Image img = random_image(1, 5, 5, 3);
  const Image same = convolve2d(img, ident);
  REQUIRE(same.data == img.data);
}

TEST_CASE("convolution matches the brute-force oracle") {
  Image ramp(1, 5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) ramp.at(0, y, x) = 0.1 * y + 0.05 * x;
  const Kernel g = gaussian_kernel(1.0, 3);
  const Image a = convolve2d(ramp, g, BoundaryMode::Replicate);
  const Image b = conv_oracle(ramp, g);
  for (size_t i = 0; i < a.size(); ++i)
    REQUIRE(a.data[i] == Catch::Approx(b.data[i]).margin(1e-12));
}

TEST_CASE("convolution and resize are linear operators") {
  const Image x = random_image(1, 12, 10, 21);
  const Image y = random_image(1, 12, 10, 22);
  const double alpha = 0.7, beta = -1.3;
  Image mix(1, 12, 10);
  for (size_t i = 0; i < mix.size(); ++i)
    mix.data[i] = alpha * x.data[i] + beta * y.data[i];

  const Kernel g = gaussian_kernel(0.8, 2);
  const Image lhs_c = convolve2d(mix, g);
  const Image cx = convolve2d(x, g), cy = convolve2d(y, g);
  for (size_t i = 0; i < lhs_c.size(); ++i)
    REQUIRE(lhs_c.data[i] ==
            Catch::Approx(alpha * cx.data[i] + beta * cy.data[i]).margin(1e-10));

  const Image lhs_r = lanczos_resize(mix, 6, 5);
  const Image rx = lanczos_resize(x, 6, 5), ry = lanczos_resize(y, 6, 5);
  for (size_t i = 0; i < lhs_r.size(); ++i)
    REQUIRE(lhs_r.data[i] ==
            Catch::Approx(alpha * rx.data[i] + beta * ry.data[i]).margin(1e-10));
}

TEST_CASE("lanczos resize preserves constants at any scale") {
  Image constant(1, 8, 8, 0.642);
  for (auto [oh, ow] : {std::pair{4, 4}, {16, 16}, {5, 11}}) {
    const Image r = lanczos_resize(constant, oh, ow);
    for (double v : r.data) REQUIRE(v == Catch::Approx(0.642).margin(1e-12));
  }
}

TEST_CASE("lanczos resize at equal dims is the identity") {
  const Image img = random_image(1, 9, 9, 8);
  const Image r = lanczos_resize(img, 9, 9);
  for (size_t i = 0; i < img.size(); ++i)
    REQUIRE(r.data[i] == Catch::Approx(img.data[i]).margin(1e-12));
}

TEST_CASE("lanczos downscale matches the direct sum oracle") {
  Image ramp(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ramp.at(0, y, x) = (0.06 * y + 0.1 * x) / 2.0;
  const Image a = lanczos_resize(ramp, 4, 4, 3);
  const Image b = lanczos_oracle(ramp, 4, 4, 3);
  for (size_t i = 0; i < a.size(); ++i)
    REQUIRE(a.data[i] == Catch::Approx(b.data[i]).margin(1e-12));

  const Image img = random_image(1, 10, 8, 31);
  const Image c = lanczos_resize(img, 7, 5, 2);
  const Image d = lanczos_oracle(img, 7, 5, 2);
  for (size_t i = 0; i < c.size(); ++i)
    REQUIRE(c.data[i] == Catch::Approx(d.data[i]).margin(1e-12));
}

TEST_CASE("lanczos rejects empty outputs") {
  const Image img = random_image(1, 4, 4, 1);
  REQUIRE_THROWS_AS(lanczos_resize(img, 0, 4), Error);
}
