#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dmd/gan.hpp"
#include "dmd/mask.hpp"
#include "dmd/rng.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

// Cosine of two flattened feature vectors; zero-norm inputs carry no
// direction and count as 0 (warned once per process).
inline double cosine_or_zero(const double* a, const double* b, std::size_t n,
                             bool* warned = nullptr) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    static bool warned_once = false;
    if (!warned_once) {
      std::cerr << "[dmd] warning: zero-norm feature vector in cosine; treating as 0\n";
      warned_once = true;
    }
    if (warned) *warned = true;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct RetardationReport {
  std::uint64_t time = 0;
  double value = 0.0;  // R_t in [-1, 1]
  double threshold = 0.0;
  std::size_t sample_count = 0;
  bool decision = false;  // retarded iff value > threshold (strict)
};

enum class PhaseState { NonMasked, Masked };

// Scheduler state: which discriminator variant trains right now, plus the
// pending mask M_T used by the next detection.
struct DiscriminatorPhase {
  PhaseState state = PhaseState::NonMasked;
  std::optional<MaskSpec> active;  // engaged mask while Masked
  MaskSpec pending;                // probe mask for the next detection
  std::uint64_t steps_in_state = 0;
};

enum class StrategyId {
  Baseline,
  FeatureMask,  // detection-driven feature masking
  InputMask,
  DynamicHead,
  VanillaDropout,
  FixedInterval,
  Ccd,
};

struct StrategyKind {
  StrategyId id = StrategyId::FeatureMask;
  std::uint64_t period = 0;    // FixedInterval: steps per toggle
  bool ccd_increasing = true;  // Ccd ramp direction

  static StrategyKind baseline() { return {StrategyId::Baseline, 0, true}; }
  static StrategyKind feature_mask() { return {StrategyId::FeatureMask, 0, true}; }
  static StrategyKind input_mask() { return {StrategyId::InputMask, 0, true}; }
  static StrategyKind dynamic_head() { return {StrategyId::DynamicHead, 0, true}; }
  static StrategyKind vanilla_dropout() { return {StrategyId::VanillaDropout, 0, true}; }
  static StrategyKind fixed_interval(std::uint64_t p) { return {StrategyId::FixedInterval, p, true}; }
  static StrategyKind ccd(bool increasing) { return {StrategyId::Ccd, 0, increasing}; }
};

inline std::string strategy_name(StrategyId id) {
  switch (id) {
    case StrategyId::Baseline: return "baseline";
    case StrategyId::FeatureMask: return "feature_mask";
    case StrategyId::InputMask: return "input_mask";
    case StrategyId::DynamicHead: return "dynamic_head";
    case StrategyId::VanillaDropout: return "vanilla_dropout";
    case StrategyId::FixedInterval: return "fixed_interval";
    case StrategyId::Ccd: return "ccd";
  }
  return "?";
}

inline MaskSite strategy_site(StrategyId id) {
  switch (id) {
    case StrategyId::InputMask: return MaskSite::Input;
    case StrategyId::DynamicHead: return MaskSite::Head;
    case StrategyId::Baseline: return MaskSite::None;
    default: return MaskSite::Feature;
  }
}

// True iff this step is a detection boundary.
inline bool detection_cadence(std::uint64_t step, std::uint64_t cadence) {
  if (cadence < 1) throw TensorError("detection cadence must be >= 1");
  return step % cadence == 0;
}

// R_t over a probe batch: cosine between layer-d features of the plain
// forward and the masked forward, averaged over samples. The mask site
// follows the strategy (feature / input / head).
inline RetardationReport retardation(Discriminator& disc, const Tensor& probe_batch,
                                     const MaskSpec& mask, double threshold,
                                     MaskSite site = MaskSite::Feature,
                                     std::uint64_t time = 0, int tap_layer = -1) {
  const std::size_t m = probe_batch.ndim() == 2 ? probe_batch.dim(0) : 0;
  if (m == 0) throw TensorError("retardation: empty probe batch");

  ActiveMask none{};
  ActiveMask masked{site, &mask};

  auto features = [&](const ActiveMask& am) {
    Tensor logits = forward_with_tap(disc, probe_batch, am);
    Tensor feat;
    if (site == MaskSite::Head) {
      // Dynamic head compares the (masked) logit vectors themselves.
      feat = (am.site == MaskSite::Head && am.mask)
                 ? mul(logits, Tensor({1, disc.out_logits}, am.mask->values))
                 : logits;
    } else {
      const int d = tap_layer > 0
                        ? tap_layer
                        : (site == MaskSite::Feature ? mask.layer_index
                                                     : static_cast<int>(disc.num_layers()));
      auto it = disc.taps.find(d);
      if (it == disc.taps.end())
        throw TensorError("retardation: no tap for layer " + std::to_string(d));
      feat = it->second.output;
    }
    Tensor out = feat.detached();
    clear_tape();
    return out;
  };

  Tensor plain = features(none);
  Tensor bar = features(masked);

  const std::size_t width = plain.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    acc += cosine_or_zero(&bar.data()[i * width], &plain.data()[i * width], width);

  RetardationReport rep;
  rep.time = time;
  rep.value = acc / static_cast<double>(m);
  rep.threshold = threshold;
  rep.sample_count = m;
  rep.decision = rep.value > threshold;  // strict inequality
  return rep;
}

// Scheduler transition: retarded -> engage the probe mask for the next
// interval; otherwise train unmasked and sample a fresh pending mask.
inline DiscriminatorPhase scheduler_step(const DiscriminatorPhase& phase,
                                         const RetardationReport& report, Rng& mask_rng) {
  DiscriminatorPhase next;
  if (report.decision) {
    next.state = PhaseState::Masked;
    next.active = phase.pending;
    next.pending = phase.pending;  // the engaged mask is also the next probe
  } else {
    next.state = PhaseState::NonMasked;
    next.active.reset();
    next.pending = sample_mask(phase.pending.shape, phase.pending.ratio, mask_rng.next_u64(),
                               phase.pending.layer_index);
  }
  next.steps_in_state = 0;
  return next;
}

}  // namespace dmd
