#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmd/mask.hpp"
#include "dmd/nn.hpp"
#include "dmd/rng.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

constexpr double kLogFloor = 1e-12;

struct Generator {
  Net net;
  std::size_t latent_dim = 0;
  double output_scale = 1.0;  // applied after the tanh head
  std::uint64_t time_label = 0;

  std::vector<Tensor> params() const { return net.params(); }

  Tensor forward(const Tensor& z) const {
    Tensor out = net.forward(z);
    return output_scale == 1.0 ? out : mul_scalar(out, output_scale);
  }
};

// Where a mask acts this step. Feature masks hit layer d's input, input
// masks hit the raw samples, head masks hit the k output logits.
enum class MaskSite { None, Feature, Input, Head };

struct ActiveMask {
  MaskSite site = MaskSite::None;
  const MaskSpec* mask = nullptr;  // non-owning; valid for the step

  bool feature_at(int layer_index) const {
    return site == MaskSite::Feature && mask != nullptr && mask->layer_index == layer_index;
  }
};

struct TapPair {
  Tensor input;   // F^(d-1): layer input before any masking
  Tensor output;  // layer output L(...) before activation (F^(d) / Fbar^(d))
};

struct Discriminator {
  Net net;
  std::size_t out_logits = 1;  // k > 1 only under the dynamic-head strategy
  std::map<int, TapPair> taps;  // refreshed on every forward

  std::vector<Tensor> params() const { return net.params(); }
  std::size_t num_layers() const { return net.layers.size(); }
};

// Per-step mask/non-mask selector pi(D|t). use_mask comes from the
// scheduler; mask_probability thins the mask stage (default p = 1).
struct PhaseIndicator {
  bool use_mask = false;
  double mask_probability = 1.0;
};

// Runs the discriminator stack, optionally Hadamard-masking the input of
// the masked layer, and records per-layer taps. Returns raw final-layer
// output (pre-sigmoid logits, (B, k)).
inline Tensor forward_with_tap(Discriminator& disc, const Tensor& x, const ActiveMask& am) {
  Tensor h = x;
  if (am.site == MaskSite::Input && am.mask) {
    if (am.mask->values.size() != x.dim(1))
      throw TensorError("input mask size " + std::to_string(am.mask->values.size()) +
                        " does not match sample dim " + std::to_string(x.dim(1)));
    h = mul(h, Tensor({1, x.dim(1)}, am.mask->values));
  }
  disc.taps.clear();
  for (std::size_t i = 0; i < disc.net.layers.size(); ++i) {
    const LayerParams& layer = disc.net.layers[i];
    TapPair tap;
    tap.input = h;
    Tensor layer_in = h;
    if (am.feature_at(layer.layer_index)) {
      if (am.mask->values.size() != h.dim(1))
        throw TensorError("mask for layer " + std::to_string(layer.layer_index) + " has " +
                          std::to_string(am.mask->values.size()) + " elements, features have " +
                          std::to_string(h.dim(1)));
      layer_in = mul(h, Tensor({1, h.dim(1)}, am.mask->values));
    }
    Tensor pre = layer_forward(layer, layer_in);
    tap.output = pre;
    disc.taps[layer.layer_index] = tap;
    h = activate(pre, i + 1 == disc.net.layers.size() ? disc.net.output_act : disc.net.hidden_act,
                 disc.net.leaky_slope);
  }
  return h;
}

// D as a probability in (0,1): sigmoid head for k = 1; for k logits the
// head sums (optionally masked) logits before the sigmoid.
inline Tensor disc_prob(Discriminator& disc, const Tensor& x, const ActiveMask& am) {
  Tensor logits = forward_with_tap(disc, x, am);
  if (disc.out_logits > 1) {
    if (am.site == MaskSite::Head && am.mask) {
      if (am.mask->values.size() != disc.out_logits)
        throw TensorError("head mask size does not match logit count");
      logits = mul(logits, Tensor({1, disc.out_logits}, am.mask->values));
    }
    logits = row_sum(logits);
  }
  return sigmoid(logits);
}

inline ActiveMask effective_mask(const PhaseIndicator& phase, const ActiveMask& am) {
  return phase.use_mask ? am : ActiveMask{};
}

// Non-saturating generator loss: -mean(log D_active(G(z))). Only
// generator parameters accumulate gradients.
inline Tensor g_loss(const Generator& gen, Discriminator& disc, const PhaseIndicator& phase,
                     const Tensor& z_batch, const ActiveMask& am) {
  if (z_batch.size() == 0 || z_batch.dim(0) == 0) throw TensorError("g_loss: empty latent batch");
  freeze_until_backward(disc.params());
  Tensor fake = gen.forward(z_batch);
  Tensor d = disc_prob(disc, fake, effective_mask(phase, am));
  return neg(mean(log_clamped(d, kLogFloor)));
}

// Non-saturating discriminator loss:
//   -mean(log D_active(I)) - mean(log(1 - D_active(G(z)))).
// The same mask state is applied to the real and generated terms. Only
// discriminator parameters accumulate gradients.
inline Tensor d_loss(const Generator& gen, Discriminator& disc, const PhaseIndicator& phase,
                     const Tensor& real_batch, const Tensor& z_batch, const ActiveMask& am) {
  if (real_batch.size() == 0 || real_batch.dim(0) == 0)
    throw TensorError("d_loss: empty real batch");
  if (z_batch.size() == 0 || z_batch.dim(0) == 0) throw TensorError("d_loss: empty latent batch");
  freeze_until_backward(gen.params());
  const ActiveMask m = effective_mask(phase, am);
  Tensor d_real = disc_prob(disc, real_batch, m);
  Tensor fake = gen.forward(z_batch);
  Tensor d_fake = disc_prob(disc, fake, m);
  Tensor real_term = neg(mean(log_clamped(d_real, kLogFloor)));
  Tensor fake_term = neg(mean(log_clamped(sub(Tensor::scalar(1.0), d_fake), kLogFloor)));
  return add(real_term, fake_term);
}

// n generated samples, deterministic in rng state.
inline Tensor sample(const Generator& gen, std::size_t n, Rng& rng) {
  if (n == 0) throw TensorError("sample: n must be positive");
  std::vector<double> z(n * gen.latent_dim);
  for (double& v : z) v = rng.normal();
  Tensor batch = gen.forward(Tensor({n, gen.latent_dim}, std::move(z)));
  clear_tape();
  return batch.detached();
}

inline Tensor latent_batch(std::size_t n, std::size_t latent_dim, Rng& rng) {
  std::vector<double> z(n * latent_dim);
  for (double& v : z) v = rng.normal();
  return Tensor({n, latent_dim}, std::move(z));
}

}  // namespace dmd
