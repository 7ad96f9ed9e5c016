#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "dmd/engine.hpp"
#include "dmd/gan.hpp"
#include "dmd/nn.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

// Frozen random feature embedding standing in for a pretrained encoder.
// Identical across all runs in a comparison as long as the seed matches.
struct Embedding {
  Net net;
  std::size_t out_dim = 0;

  static Embedding make(std::size_t in_dim, std::size_t hidden, std::size_t out,
                        std::uint64_t seed) {
    Embedding e;
    e.net.layers = init_network({in_dim, hidden, out}, seed);
    for (auto& l : e.net.layers) {
      l.weight.set_requires_grad(false);
      l.bias.set_requires_grad(false);
    }
    e.net.hidden_act = Activation::Tanh;
    e.net.output_act = Activation::Identity;
    e.out_dim = out;
    return e;
  }

  static Embedding identity(std::size_t dim) {
    Embedding e;
    e.out_dim = dim;
    return e;  // empty net == identity map
  }

  Tensor apply(const Tensor& samples) const {
    if (net.layers.empty()) return samples;
    Tensor out = net.forward(samples);
    clear_tape();
    return out.detached();
  }
};

struct IntervalStats {
  std::string label;
  std::size_t count = 0;
  std::vector<double> mean;      // mu
  std::vector<double> cov;       // Sigma, row-major dim x dim
  double ridge = 0.0;            // recorded when count <= dim
  std::size_t dim() const { return mean.size(); }
};

// Mean and unbiased covariance of embedded samples. When count <= dim a
// ridge eps*I keeps the covariance usable and is recorded on the stats.
inline IntervalStats interval_stats(const Tensor& samples, const Embedding& embed,
                                    double ridge_eps = 1e-6, const std::string& label = "") {
  if (samples.ndim() != 2 || samples.dim(0) < 2)
    throw TensorError("interval_stats needs at least 2 samples");
  Tensor feats = embed.apply(samples);
  const std::size_t n = feats.dim(0), d = feats.dim(1);
  IntervalStats st;
  st.label = label;
  st.count = n;
  st.mean.assign(d, 0.0);
  const auto& v = feats.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) st.mean[j] += v[i * d + j];
  for (double& m : st.mean) m /= static_cast<double>(n);
  st.cov.assign(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double da = v[i * d + a] - st.mean[a];
      for (std::size_t b = 0; b < d; ++b) st.cov[a * d + b] += da * (v[i * d + b] - st.mean[b]);
    }
  for (double& c : st.cov) c /= static_cast<double>(n - 1);
  if (n <= d) {
    st.ridge = ridge_eps;
    for (std::size_t a = 0; a < d; ++a) st.cov[a * d + a] += ridge_eps;
  }
  return st;
}

namespace detail {

inline Eigen::MatrixXd to_eigen(const std::vector<double>& m, std::size_t d) {
  Eigen::MatrixXd out(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = m[i * d + j];
  return out;
}

// Symmetric PSD square root via eigendecomposition; eigenvalues below
// -tol raise, small negatives are clamped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol)
      throw TensorError("matrix square root: eigenvalue " + std::to_string(ev(i)) +
                        " below tolerance");
    ev(i) = ev(i) < 0.0 ? 0.0 : std::sqrt(ev(i));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Frechet distance between Gaussian summaries:
//   |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2})
// computed through the symmetric form sqrt(Sa)^T Sb sqrt(Sa).
inline double frechet(const IntervalStats& a, const IntervalStats& b) {
  if (a.dim() != b.dim())
    throw TensorError("frechet: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()));
  const std::size_t d = a.dim();
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double delta = a.mean[i] - b.mean[i];
    mean_term += delta * delta;
  }
  const Eigen::MatrixXd sa = detail::to_eigen(a.cov, d);
  const Eigen::MatrixXd sb = detail::to_eigen(b.cov, d);
  const Eigen::MatrixXd ra = detail::psd_sqrt(sa);
  const Eigen::MatrixXd inner = ra * sb * ra;
  const Eigen::MatrixXd cross = detail::psd_sqrt(0.5 * (inner + inner.transpose()));
  double trace_term = sa.trace() + sb.trace() - 2.0 * cross.trace();
  if (trace_term < 0.0) trace_term = 0.0;  // numerical clamp; exact 0 for a==b
  return mean_term + trace_term;
}

struct ParamDiffRecord {
  std::uint64_t step = 0;
  int layer = 0;
  double value = 0.0;  // |W_t - W_{t-1}|^2
};

// Squared L2 norm of the weight delta between two snapshots of one layer.
inline ParamDiffRecord param_diff(const LayerParams& prev, const LayerParams& curr,
                                  std::uint64_t step = 0) {
  if (prev.weight.shape() != curr.weight.shape())
    throw TensorError("param_diff: weight shape mismatch " + shape_str(prev.weight.shape()) +
                      " vs " + shape_str(curr.weight.shape()));
  double acc = 0.0;
  const auto& pv = prev.weight.data();
  const auto& cv = curr.weight.data();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double dlt = cv[i] - pv[i];
    acc += dlt * dlt;
  }
  ParamDiffRecord rec;
  rec.step = step;
  rec.layer = curr.layer_index;
  rec.value = acc;
  return rec;
}

// Mean cosine similarity between layer-d feature maps of two
// discriminator snapshots on a shared probe batch.
inline double attention_drift(Discriminator& snap_a, Discriminator& snap_b, const Tensor& probes,
                              int layer_index) {
  ActiveMask none{};
  forward_with_tap(snap_a, probes, none);
  Tensor fa = snap_a.taps.at(layer_index).output.detached();
  clear_tape();
  forward_with_tap(snap_b, probes, none);
  Tensor fb = snap_b.taps.at(layer_index).output.detached();
  clear_tape();
  const std::size_t n = fa.dim(0), w = fa.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += cosine_or_zero(&fa.data()[i * w], &fb.data()[i * w], w);
  return acc / static_cast<double>(n);
}

struct LabeledBatch {
  std::string label;      // e.g. "historical(200)"
  std::uint64_t step = 0;  // snapshot step the batch was drawn from
  Tensor samples;          // (n, dim)
  std::vector<int> truth;  // 1 = real, 0 = generated
};

struct RetentionRow {
  std::string label;
  std::uint64_t step = 0;
  double accuracy = 0.0;
};

struct RetentionTable {
  std::uint64_t reference_time = 0;
  std::vector<RetentionRow> rows;
};

// Classification accuracy (0.5 threshold on the sigmoid output) of one
// discriminator snapshot over labeled real/generated batches.
inline RetentionTable retention_eval(Discriminator& disc, const std::vector<LabeledBatch>& batches,
                                     std::uint64_t reference_time) {
  RetentionTable table;
  table.reference_time = reference_time;
  for (const auto& b : batches) {
    if (b.truth.size() != b.samples.dim(0))
      throw TensorError("retention_eval: batch '" + b.label + "' is not fully labeled");
    ActiveMask none{};
    Tensor prob = sigmoid(forward_with_tap(disc, b.samples, none));
    clear_tape();
    std::size_t correct = 0;
    const std::size_t n = b.truth.size();
    const std::size_t k = prob.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < k; ++j) p += prob.data()[i * k + j];
      p /= static_cast<double>(k);
      const int pred = p > 0.5 ? 1 : 0;
      if (pred == b.truth[i]) ++correct;
    }
    table.rows.push_back({b.label, b.step, static_cast<double>(correct) / static_cast<double>(n)});
  }
  return table;
}

}  // namespace dmd
