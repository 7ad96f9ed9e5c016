#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dmd/rng.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

enum class Activation { Identity, LeakyRelu, Tanh, Sigmoid };

inline Tensor activate(const Tensor& x, Activation a, double leaky_slope = 0.2) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::LeakyRelu: return leaky_relu(x, leaky_slope);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

struct ConvDims {
  std::size_t in_c = 0, out_c = 0, kh = 0, kw = 0;  // stride-1, valid padding
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h() const { return in_h - kh + 1; }
  std::size_t out_w() const { return in_w - kw + 1; }
};

// One trainable layer. layer_index starts at 1 at the input-facing layer.
struct LayerParams {
  enum class Kind { Dense, Conv };
  Kind kind = Kind::Dense;
  Tensor weight;  // dense: (out, in); conv: (out_c, in_c*kh*kw)
  Tensor bias;    // dense: (out); conv: (out_c)
  int layer_index = 1;
  ConvDims conv;  // valid iff kind == Conv

  std::size_t fan_in() const {
    return kind == Kind::Dense ? weight.dim(1) : conv.in_c * conv.in_h * conv.in_w;
  }
  std::size_t fan_out() const {
    return kind == Kind::Dense ? weight.dim(0) : conv.out_c * conv.out_h() * conv.out_w();
  }
};

// y = x W^T + b for a batch (B, in) -> (B, out).
inline Tensor dense_forward(const LayerParams& p, const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != p.weight.dim(1))
    throw TensorError("dense_forward: input " + shape_str(x.shape()) + " does not match fan-in " +
                      std::to_string(p.weight.dim(1)));
  return add(matmul(x, transpose(p.weight)), p.bias);
}

// Stride-1 valid convolution on flattened (B, C*H*W) input -> (B, O*OH*OW).
inline Tensor conv_forward(const LayerParams& p, const Tensor& x) {
  const ConvDims& d = p.conv;
  const std::size_t in_len = d.in_c * d.in_h * d.in_w;
  if (x.ndim() != 2 || x.dim(1) != in_len)
    throw TensorError("conv_forward: input " + shape_str(x.shape()) + " does not match " +
                      std::to_string(in_len) + " (C*H*W)");
  const std::size_t b = x.dim(0), oh = d.out_h(), ow = d.out_w();
  const auto& xv = x.data();
  const auto& wv = p.weight.data();
  const auto& bv = p.bias.data();
  std::vector<double> out(b * d.out_c * oh * ow, 0.0);
  auto xi = [d](std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return (n * d.in_c + c) * d.in_h * d.in_w + i * d.in_w + j;
  };
  auto wi = [d](std::size_t o, std::size_t c, std::size_t i, std::size_t j) {
    return (o * d.in_c + c) * d.kh * d.kw + i * d.kw + j;
  };
  auto oi = [d, oh, ow](std::size_t n, std::size_t o, std::size_t i, std::size_t j) {
    return (n * d.out_c + o) * oh * ow + i * ow + j;
  };
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t o = 0; o < d.out_c; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bv[o];
          for (std::size_t c = 0; c < d.in_c; ++c)
            for (std::size_t ki = 0; ki < d.kh; ++ki)
              for (std::size_t kj = 0; kj < d.kw; ++kj)
                acc += xv[xi(n, c, i + ki, j + kj)] * wv[wi(o, c, ki, kj)];
          out[oi(n, o, i, j)] = acc;
        }
  return make_op({b, d.out_c * oh * ow}, std::move(out), {x, p.weight, p.bias},
                 [d, b, oh, ow, xv, wv, xi, wi, oi](detail::Node& self) {
                   auto& px = *self.parents[0];
                   auto& pw = *self.parents[1];
                   auto& pb = *self.parents[2];
                   const bool nx = detail::needs_grad(px);
                   const bool nw = detail::needs_grad(pw);
                   const bool nb = detail::needs_grad(pb);
                   if (nx) px.ensure_grad();
                   if (nw) pw.ensure_grad();
                   if (nb) pb.ensure_grad();
                   for (std::size_t n = 0; n < b; ++n)
                     for (std::size_t o = 0; o < d.out_c; ++o)
                       for (std::size_t i = 0; i < oh; ++i)
                         for (std::size_t j = 0; j < ow; ++j) {
                           const double g = self.grad[oi(n, o, i, j)];
                           if (g == 0.0) continue;
                           if (nb) pb.grad[o] += g;
                           for (std::size_t c = 0; c < d.in_c; ++c)
                             for (std::size_t ki = 0; ki < d.kh; ++ki)
                               for (std::size_t kj = 0; kj < d.kw; ++kj) {
                                 if (nw)
                                   pw.grad[wi(o, c, ki, kj)] += g * xv[xi(n, c, i + ki, j + kj)];
                                 if (nx)
                                   px.grad[xi(n, c, i + ki, j + kj)] += g * wv[wi(o, c, ki, kj)];
                               }
                         }
                 });
}

inline Tensor layer_forward(const LayerParams& p, const Tensor& x) {
  return p.kind == LayerParams::Kind::Dense ? dense_forward(p, x) : conv_forward(p, x);
}

// ---------------------------------------------------------------------------
// Network

struct Net {
  std::vector<LayerParams> layers;
  Activation hidden_act = Activation::LeakyRelu;
  Activation output_act = Activation::Identity;
  double leaky_slope = 0.2;

  std::vector<Tensor> params() const {
    std::vector<Tensor> ps;
    for (const auto& l : layers) {
      ps.push_back(l.weight);
      ps.push_back(l.bias);
    }
    return ps;
  }

  std::size_t input_dim() const { return layers.front().fan_in(); }
  std::size_t output_dim() const { return layers.back().fan_out(); }

  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layer_forward(layers[i], h);
      h = activate(h, i + 1 == layers.size() ? output_act : hidden_act, leaky_slope);
    }
    return h;
  }
};

inline LayerParams make_dense(std::size_t in, std::size_t out, int layer_index, Rng& rng) {
  // He-style fan-in scaled uniform init; zero bias.
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  std::vector<double> w(out * in);
  for (double& v : w) v = rng.uniform(-limit, limit);
  LayerParams p;
  p.kind = LayerParams::Kind::Dense;
  p.weight = Tensor({out, in}, std::move(w), true);
  p.bias = Tensor::zeros({out}, true);
  p.layer_index = layer_index;
  return p;
}

inline LayerParams make_conv(ConvDims dims, int layer_index, Rng& rng) {
  const double fan_in = static_cast<double>(dims.in_c * dims.kh * dims.kw);
  const double limit = std::sqrt(6.0 / fan_in);
  std::vector<double> w(dims.out_c * dims.in_c * dims.kh * dims.kw);
  for (double& v : w) v = rng.uniform(-limit, limit);
  LayerParams p;
  p.kind = LayerParams::Kind::Conv;
  p.weight = Tensor({dims.out_c, dims.in_c * dims.kh * dims.kw}, std::move(w), true);
  p.bias = Tensor::zeros({dims.out_c}, true);
  p.layer_index = layer_index;
  p.conv = dims;
  return p;
}

// Fully-connected stack from a layer-size list; deterministic in seed.
inline std::vector<LayerParams> init_network(const std::vector<std::size_t>& sizes,
                                             std::uint64_t seed) {
  if (sizes.size() < 2) throw TensorError("init_network needs at least 2 layer sizes");
  Rng rng(seed);
  std::vector<LayerParams> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    layers.push_back(make_dense(sizes[i], sizes[i + 1], static_cast<int>(i) + 1, rng));
  return layers;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.5;  // GAN-stability default
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;

  void init_for(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
    step = 0;
  }
};

// Bias-corrected Adam update in place; grads read from each tensor.
inline void adam_step(AdamState& s, std::vector<Tensor>& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].has_grad())
      throw TensorError("adam_step: missing gradient for parameter " + std::to_string(i));
  if (s.m.size() != params.size()) s.init_for(params);
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& val = params[i].data_mut();
    const auto& g = params[i].grad();
    auto& mi = s.m[i];
    auto& vi = s.v[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      mi[j] = s.beta1 * mi[j] + (1.0 - s.beta1) * g[j];
      vi[j] = s.beta2 * vi[j] + (1.0 - s.beta2) * g[j] * g[j];
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      val[j] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace dmd
