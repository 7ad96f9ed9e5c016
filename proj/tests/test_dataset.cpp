#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dmd/dataset.hpp"

using namespace dmd;

TEST_CASE("ring centers sit at i * 45 degrees for k = 8") {
  Dataset ds{DatasetParams{}};
  auto c = ds.ring_centers();
  REQUIRE(c.size() == 8);
  const double r = ds.params().ring_radius;
  for (std::size_t i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * static_cast<double>(i) / 8.0;
    CHECK(c[i].first == doctest::Approx(r * std::cos(a)).epsilon(1e-12));
    CHECK(c[i].second == doctest::Approx(r * std::sin(a)).epsilon(1e-12));
  }
}

TEST_CASE("batches are seed-deterministic and seed-sensitive") {
  Dataset ds{DatasetParams{}};
  Rng a(42), b(42), c(43);
  CHECK(ds.batch(64, a).data() == ds.batch(64, b).data());
  Rng a2(42);
  CHECK(ds.batch(64, a2).data() != ds.batch(64, c).data());
}

TEST_CASE("ring sample mean approaches zero (statistical oracle)") {
  // Symmetric mixture: E[x] = E[y] = 0. Per-coordinate standard error for
  // n = 1e5 is roughly sqrt(r^2/2 + sigma^2)/sqrt(n) ~ 1.6e-3; 5 SE bound.
  Dataset ds{DatasetParams{}};
  Rng rng(7);
  const std::size_t n = 100000;
  Tensor batch = ds.batch(n, rng);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += batch.at(i * 2);
    my += batch.at(i * 2 + 1);
  }
  mx /= n;
  my /= n;
  CHECK(std::abs(mx) < 8e-3);
  CHECK(std::abs(my) < 8e-3);
}

TEST_CASE("ring radius statistical oracle") {
  Dataset ds{DatasetParams{}};
  Rng rng(11);
  const std::size_t n = 100000;
  Tensor batch = ds.batch(n, rng);
  double mr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = batch.at(i * 2), y = batch.at(i * 2 + 1);
    mr += std::sqrt(x * x + y * y);
  }
  mr /= n;
  // E[radius] ~ ring_radius + O(sigma^2 / r); sigma = 0.05 keeps the
  // correction under 2e-3.
  CHECK(mr == doctest::Approx(ds.params().ring_radius).epsilon(0.01));
}

TEST_CASE("mode coverage: real ring data covers all 8 modes") {
  Dataset ds{DatasetParams{}};
  Rng rng(3);
  Tensor batch = ds.batch(4000, rng);
  CHECK(mode_coverage(batch, ds) == 8);
}

TEST_CASE("mode coverage: collapsed samples cover exactly one mode") {
  Dataset ds{DatasetParams{}};
  auto c = ds.ring_centers();
  const std::size_t n = 500;
  std::vector<double> v(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    v[i * 2] = c[3].first;
    v[i * 2 + 1] = c[3].second;
  }
  CHECK(mode_coverage(Tensor({n, 2}, std::move(v)), ds) == 1);
}

TEST_CASE("spiral samples stay inside the scale disc (plus noise margin)") {
  DatasetParams p;
  p.kind = DatasetKind::Spiral;
  Dataset ds{p};
  Rng rng(5);
  Tensor batch = ds.batch(2000, rng);
  const double bound = p.spiral_scale + 8.0 * p.spiral_noise;
  for (std::size_t i = 0; i < 2000; ++i) {
    const double x = batch.at(i * 2), y = batch.at(i * 2 + 1);
    CHECK(std::sqrt(x * x + y * y) <= bound);
  }
}

TEST_CASE("micro-image dataset has grid*grid dimensions and bright blobs") {
  DatasetParams p;
  p.kind = DatasetKind::MicroImages;
  Dataset ds{p};
  CHECK(ds.dim() == 36);
  Rng rng(9);
  Tensor batch = ds.batch(32, rng);
  CHECK(batch.dim(1) == 36);
  for (std::size_t i = 0; i < 32; ++i) {
    double peak = -1e9;
    for (std::size_t j = 0; j < 36; ++j) peak = std::max(peak, batch.at(i * 36 + j));
    CHECK(peak > 0.5);  // the anchor blob dominates the noise floor
  }
}

TEST_CASE("dataset kind names round-trip") {
  for (DatasetKind k :
       {DatasetKind::RingOfGaussians, DatasetKind::Spiral, DatasetKind::MicroImages})
    CHECK(parse_dataset_kind(dataset_kind_name(k)) == k);
  CHECK_THROWS_AS(parse_dataset_kind("celeba"), TensorError);
}
