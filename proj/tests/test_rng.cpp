#include <catch2/catch_amalgamated.hpp>

#include "dipli/rng.hpp"

using namespace dipli;

TEST_CASE("derived streams are independent and stable") {
  Rng a = derive_rng(42, "latent");
  Rng b = derive_rng(42, "latent");
  Rng c = derive_rng(42, "sgld");
  REQUIRE(a.next_u64() == b.next_u64());
  REQUIRE(derive_seed(42, "latent") != derive_seed(42, "sgld"));
  REQUIRE(derive_seed(42, "latent") != derive_seed(43, "latent"));
  (void)c;
}

TEST_CASE("uniform stays in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("normal moments") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  // 3-sigma band for the sample mean of N(0,1)
  REQUIRE(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(var == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("poisson mean and variance") {
  Rng rng(99);
  const int n = 100000;
  const double lambda = 50.0;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(rng.poisson(lambda));
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  REQUIRE(mean == Catch::Approx(lambda).epsilon(0.01));
  REQUIRE(var == Catch::Approx(lambda).epsilon(0.05));
}
