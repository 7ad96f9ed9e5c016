#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dmd/rng.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

enum class DatasetKind { RingOfGaussians, Spiral, MicroImages };

struct DatasetParams {
  DatasetKind kind = DatasetKind::RingOfGaussians;
  // ring
  std::size_t ring_k = 8;
  double ring_radius = 0.7;
  double ring_sigma = 0.05;
  // spiral
  double spiral_turns = 2.0;
  double spiral_noise = 0.02;
  double spiral_scale = 0.8;
  // micro images: g x g grayscale with a bright blob at one of k anchors
  std::size_t micro_grid = 6;
  std::size_t micro_k = 4;
  double micro_noise = 0.05;
};

// Deterministic infinite sampler over a synthetic 2-D or micro-image
// distribution. All state lives in the caller's Rng.
class Dataset {
 public:
  explicit Dataset(DatasetParams p) : p_(p) {
    switch (p_.kind) {
      case DatasetKind::RingOfGaussians:
      case DatasetKind::Spiral: dim_ = 2; break;
      case DatasetKind::MicroImages: dim_ = p_.micro_grid * p_.micro_grid; break;
    }
  }

  std::size_t dim() const { return dim_; }
  const DatasetParams& params() const { return p_; }

  // Centers of the ring mixture, angle i * 2pi/k.
  std::vector<std::pair<double, double>> ring_centers() const {
    std::vector<std::pair<double, double>> c;
    for (std::size_t i = 0; i < p_.ring_k; ++i) {
      const double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(p_.ring_k);
      c.emplace_back(p_.ring_radius * std::cos(a), p_.ring_radius * std::sin(a));
    }
    return c;
  }

  Tensor batch(std::size_t n, Rng& rng) const {
    std::vector<double> out(n * dim_);
    for (std::size_t i = 0; i < n; ++i) sample_one(rng, &out[i * dim_]);
    return Tensor({n, dim_}, std::move(out));
  }

 private:
  void sample_one(Rng& rng, double* dst) const {
    switch (p_.kind) {
      case DatasetKind::RingOfGaussians: {
        const std::size_t m = rng.below(p_.ring_k);
        const double a = 2.0 * M_PI * static_cast<double>(m) / static_cast<double>(p_.ring_k);
        dst[0] = p_.ring_radius * std::cos(a) + p_.ring_sigma * rng.normal();
        dst[1] = p_.ring_radius * std::sin(a) + p_.ring_sigma * rng.normal();
        break;
      }
      case DatasetKind::Spiral: {
        const double u = rng.uniform();
        const double theta = p_.spiral_turns * 2.0 * M_PI * u;
        const double r = p_.spiral_scale * u;
        dst[0] = r * std::cos(theta) + p_.spiral_noise * rng.normal();
        dst[1] = r * std::sin(theta) + p_.spiral_noise * rng.normal();
        break;
      }
      case DatasetKind::MicroImages: {
        const std::size_t g = p_.micro_grid;
        const std::size_t anchor = rng.below(p_.micro_k);
        // Anchors on a circle inside the grid.
        const double a = 2.0 * M_PI * static_cast<double>(anchor) / static_cast<double>(p_.micro_k);
        const double cx = 0.5 * (g - 1) + 0.3 * (g - 1) * std::cos(a);
        const double cy = 0.5 * (g - 1) + 0.3 * (g - 1) * std::sin(a);
        for (std::size_t y = 0; y < g; ++y)
          for (std::size_t x = 0; x < g; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            dst[y * g + x] = std::exp(-d2 / 1.5) + p_.micro_noise * rng.normal();
          }
        break;
      }
    }
  }

  DatasetParams p_;
  std::size_t dim_ = 2;
};

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "ring") return DatasetKind::RingOfGaussians;
  if (s == "spiral") return DatasetKind::Spiral;
  if (s == "micro-images" || s == "micro") return DatasetKind::MicroImages;
  throw TensorError("unknown dataset kind: " + s);
}

inline std::string dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::RingOfGaussians: return "ring";
    case DatasetKind::Spiral: return "spiral";
    case DatasetKind::MicroImages: return "micro-images";
  }
  return "?";
}

// Modes covered: ground-truth ring centers receiving >= 1% of samples
// within 3 sigma.
inline std::size_t mode_coverage(const Tensor& samples, const Dataset& ds) {
  const auto centers = ds.ring_centers();
  const double r3 = 3.0 * ds.params().ring_sigma;
  const std::size_t n = samples.dim(0);
  std::vector<std::size_t> hits(centers.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = samples.at(i * 2), y = samples.at(i * 2 + 1);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double dx = x - centers[c].first, dy = y - centers[c].second;
      if (std::sqrt(dx * dx + dy * dy) <= r3) {
        ++hits[c];
        break;
      }
    }
  }
  std::size_t covered = 0;
  const double min_frac = 0.01 * static_cast<double>(n);
  for (std::size_t c = 0; c < centers.size(); ++c)
    if (static_cast<double>(hits[c]) >= min_frac) ++covered;
  return covered;
}

}  // namespace dmd
