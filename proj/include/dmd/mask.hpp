#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dmd/rng.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_values(const std::vector<double>& v) {
  return fnv1a64(v.data(), v.size() * sizeof(double));
}

// A frozen binary mask over one layer's input features. Immutable for its
// whole interval; exactly round(ratio * numel) zeros.
struct MaskSpec {
  int layer_index = 0;
  Shape shape;
  std::vector<double> values;  // 0.0 or 1.0
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t interval_begin = 0;  // (t_j, t_{j+eps}]: first step covered is begin+1
  std::uint64_t interval_end = 0;

  std::size_t zero_count() const {
    std::size_t z = 0;
    for (double v : values)
      if (v == 0.0) ++z;
    return z;
  }

  std::uint64_t hash() const { return hash_values(values); }

  Tensor tensor() const { return Tensor(shape, values, false); }
};

// Zeros placed uniformly at random without replacement; deterministic in seed.
inline MaskSpec sample_mask(const Shape& shape, double ratio, std::uint64_t seed,
                            int layer_index = 0) {
  if (ratio < 0.0 || ratio > 1.0)
    throw TensorError("mask ratio must be in [0,1], got " + std::to_string(ratio));
  const std::size_t n = numel(shape);
  const std::size_t zeros =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  MaskSpec m;
  m.layer_index = layer_index;
  m.shape = shape;
  m.ratio = ratio;
  m.seed = seed;
  m.values.assign(n, 1.0);
  // Partial Fisher-Yates over the index set: first `zeros` picks become 0.
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < zeros; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    m.values[idx[i]] = 0.0;
  }
  return m;
}

}  // namespace dmd
