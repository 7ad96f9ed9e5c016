#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmd/analytics.hpp"
#include "dmd/checkpoint.hpp"
#include "dmd/config.hpp"
#include "dmd/dataset.hpp"
#include "dmd/engine.hpp"
#include "dmd/gan.hpp"
#include "dmd/io.hpp"

namespace dmd {

namespace fs = std::filesystem;

// Named RNG streams fanned out from one run seed; training streams never
// interleave with detection or evaluation streams, so disabling detection
// leaves the parameter trajectory untouched.
enum RngStream : std::uint64_t {
  kStreamGenInit = 0,
  kStreamDiscInit = 1,
  kStreamData = 2,
  kStreamLatent = 3,
  kStreamProbe = 4,
  kStreamMask = 5,
  kStreamDropout = 6,
  kStreamEval = 7,
};

constexpr std::uint64_t kEmbeddingSeed = 0x5eedfeed;

struct RunSummary {
  std::uint64_t seed = 0;
  std::string strategy;
  double frechet_final = 0.0;
  std::size_t modes_covered = 0;
  double mask_fraction = 0.0;
  double wall_clock_s = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t gen_hash = 0;
  std::uint64_t disc_hash = 0;
  double retention_future_acc = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<LayerParams> clone_layers(const std::vector<LayerParams>& src) {
  std::vector<LayerParams> out;
  for (const auto& l : src) {
    LayerParams c;
    c.kind = l.kind;
    c.weight = Tensor(l.weight.shape(), l.weight.data(), false);
    c.bias = Tensor(l.bias.shape(), l.bias.data(), false);
    c.layer_index = l.layer_index;
    c.conv = l.conv;
    out.push_back(std::move(c));
  }
  return out;
}

inline Discriminator disc_from_layers(const std::vector<LayerParams>& layers,
                                      std::size_t out_logits) {
  Discriminator d;
  d.net.layers = clone_layers(layers);
  d.net.hidden_act = Activation::LeakyRelu;
  d.net.output_act = Activation::Identity;
  d.out_logits = out_logits;
  return d;
}

// Full mutable state of one run; everything here round-trips through the
// checkpoint so a resumed run is bit-identical.
struct TrainerState {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  Dataset dataset;
  Generator gen;
  Discriminator disc;
  AdamState adam_g, adam_d;
  Rng data_rng, latent_rng, probe_rng, mask_rng, dropout_rng, eval_rng;
  DiscriminatorPhase phase;       // detection-driven strategies
  std::optional<MaskSpec> clock_mask;  // fixed-interval / ccd / per-step dropout
  bool clock_masked = false;
  std::uint64_t step = 0;
  std::uint64_t mask_steps = 0;
  // analytics carry-over
  std::optional<IntervalStats> prev_stats;
  std::vector<LayerParams> prev_disc;
  bool has_ref = false;
  std::vector<LayerParams> ref_disc;
  std::uint64_t ref_step = 0;
  double retention_acc_sum = 0.0;
  std::uint64_t retention_acc_count = 0;

  explicit TrainerState(const ExperimentConfig& c, std::uint64_t s)
      : cfg(c),
        seed(s),
        dataset(c.data),
        data_rng(derive_seed(s, kStreamData)),
        latent_rng(derive_seed(s, kStreamLatent)),
        probe_rng(derive_seed(s, kStreamProbe)),
        mask_rng(derive_seed(s, kStreamMask)),
        dropout_rng(derive_seed(s, kStreamDropout)),
        eval_rng(derive_seed(s, kStreamEval)) {}

  int mask_layer() const { return cfg.effective_layer(); }

  MaskSite site() const { return strategy_site(cfg.strategy.id); }

  // Width the mask must cover for the strategy's site.
  Shape mask_shape() const {
    switch (site()) {
      case MaskSite::Input: return {dataset.dim()};
      case MaskSite::Head: return {cfg.out_logits};
      default: {
        const auto& l = disc.net.layers.at(static_cast<std::size_t>(mask_layer()) - 1);
        return {l.weight.dim(1)};
      }
    }
  }

  bool uses_detection() const {
    const StrategyId id = cfg.strategy.id;
    return id == StrategyId::FeatureMask || id == StrategyId::InputMask ||
           id == StrategyId::DynamicHead;
  }
};

inline TrainerState make_state(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  TrainerState st(cfg, seed);
  const std::size_t dim = st.dataset.dim();

  std::vector<std::size_t> gsizes = {cfg.latent_dim};
  gsizes.insert(gsizes.end(), cfg.gen_hidden.begin(), cfg.gen_hidden.end());
  gsizes.push_back(dim);
  st.gen.net.layers = init_network(gsizes, derive_seed(seed, kStreamGenInit));
  st.gen.net.hidden_act = Activation::LeakyRelu;
  st.gen.net.output_act = Activation::Tanh;
  st.gen.latent_dim = cfg.latent_dim;
  st.gen.output_scale = cfg.output_scale;

  std::vector<std::size_t> dsizes = {dim};
  dsizes.insert(dsizes.end(), cfg.disc_hidden.begin(), cfg.disc_hidden.end());
  dsizes.push_back(cfg.out_logits);
  st.disc.net.layers = init_network(dsizes, derive_seed(seed, kStreamDiscInit));
  st.disc.net.hidden_act = Activation::LeakyRelu;
  st.disc.net.output_act = Activation::Identity;
  st.disc.out_logits = cfg.out_logits;

  st.adam_g.lr = st.adam_d.lr = cfg.lr;
  st.adam_g.beta1 = st.adam_d.beta1 = cfg.beta1;
  st.adam_g.beta2 = st.adam_d.beta2 = cfg.beta2;
  auto gp = st.gen.params();
  auto dp = st.disc.params();
  st.adam_g.init_for(gp);
  st.adam_d.init_for(dp);

  if (st.uses_detection())
    st.phase.pending =
        sample_mask(st.mask_shape(), cfg.ratio, st.mask_rng.next_u64(), st.mask_layer());
  st.prev_disc = clone_layers(st.disc.net.layers);
  return st;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = config_text(cfg);
  return fnv1a64(text.data(), text.size());
}

// ---------------------------------------------------------------------------
// Checkpointing

inline void save_state(const TrainerState& st, const std::string& path) {
  Checkpoint ck;
  ck.set_u64("config_hash", config_hash(st.cfg));
  ck.set_u64("seed", st.seed);
  ck.set_u64("step", st.step);
  ck.set_u64("mask_steps", st.mask_steps);
  ck.set("rng.data", st.data_rng.serialize());
  ck.set("rng.latent", st.latent_rng.serialize());
  ck.set("rng.probe", st.probe_rng.serialize());
  ck.set("rng.mask", st.mask_rng.serialize());
  ck.set("rng.dropout", st.dropout_rng.serialize());
  ck.set("rng.eval", st.eval_rng.serialize());
  ck.set_params("gen", st.gen.params());
  ck.set_params("disc", st.disc.params());
  ck.set_adam("adam_g", st.adam_g);
  ck.set_adam("adam_d", st.adam_d);
  ck.set_u64("phase.state", st.phase.state == PhaseState::Masked ? 1 : 0);
  ck.set_u64("phase.has_active", st.phase.active.has_value() ? 1 : 0);
  if (st.phase.active) ck.set_mask("phase.active", *st.phase.active);
  if (st.uses_detection()) ck.set_mask("phase.pending", st.phase.pending);
  ck.set_u64("clock.masked", st.clock_masked ? 1 : 0);
  ck.set_u64("clock.has_mask", st.clock_mask.has_value() ? 1 : 0);
  if (st.clock_mask) ck.set_mask("clock.mask", *st.clock_mask);
  ck.set_u64("prev.has", st.prev_stats.has_value() ? 1 : 0);
  if (st.prev_stats) {
    ck.set_doubles("prev.mean", st.prev_stats->mean);
    ck.set_doubles("prev.cov", st.prev_stats->cov);
    ck.set_u64("prev.count", st.prev_stats->count);
  }
  {
    std::vector<Tensor> pv;
    for (const auto& l : st.prev_disc) {
      pv.push_back(l.weight);
      pv.push_back(l.bias);
    }
    ck.set_params("prevdisc", pv);
  }
  ck.set_u64("ref.has", st.has_ref ? 1 : 0);
  if (st.has_ref) {
    ck.set_u64("ref.step", st.ref_step);
    std::vector<Tensor> rv;
    for (const auto& l : st.ref_disc) {
      rv.push_back(l.weight);
      rv.push_back(l.bias);
    }
    ck.set_params("refdisc", rv);
  }
  ck.set_doubles("retention.sum", {st.retention_acc_sum});
  ck.set_u64("retention.count", st.retention_acc_count);
  ck.save(path);
}

inline void load_state(TrainerState& st, const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.get_u64("config_hash") != config_hash(st.cfg))
    throw ConfigError("checkpoint", "configuration does not match the checkpoint at " + path);
  if (ck.get_u64("seed") != st.seed)
    throw ConfigError("checkpoint", "seed does not match the checkpoint at " + path);
  st.step = ck.get_u64("step");
  st.mask_steps = ck.get_u64("mask_steps");
  st.data_rng.deserialize(ck.get("rng.data"));
  st.latent_rng.deserialize(ck.get("rng.latent"));
  st.probe_rng.deserialize(ck.get("rng.probe"));
  st.mask_rng.deserialize(ck.get("rng.mask"));
  st.dropout_rng.deserialize(ck.get("rng.dropout"));
  st.eval_rng.deserialize(ck.get("rng.eval"));
  ck.load_params("gen", st.gen.params());
  ck.load_params("disc", st.disc.params());
  ck.load_adam("adam_g", st.adam_g);
  ck.load_adam("adam_d", st.adam_d);
  st.phase.state = ck.get_u64("phase.state") == 1 ? PhaseState::Masked : PhaseState::NonMasked;
  if (ck.get_u64("phase.has_active") == 1) st.phase.active = ck.get_mask("phase.active");
  else st.phase.active.reset();
  if (st.uses_detection()) st.phase.pending = ck.get_mask("phase.pending");
  st.clock_masked = ck.get_u64("clock.masked") == 1;
  if (ck.get_u64("clock.has_mask") == 1) st.clock_mask = ck.get_mask("clock.mask");
  else st.clock_mask.reset();
  if (ck.get_u64("prev.has") == 1) {
    IntervalStats ps;
    ps.mean = ck.get_doubles("prev.mean");
    ps.cov = ck.get_doubles("prev.cov");
    ps.count = ck.get_u64("prev.count");
    st.prev_stats = ps;
  }
  {
    std::vector<Tensor> pv;
    for (auto& l : st.prev_disc) {
      pv.push_back(l.weight);
      pv.push_back(l.bias);
    }
    ck.load_params("prevdisc", pv);
  }
  st.has_ref = ck.get_u64("ref.has") == 1;
  if (st.has_ref) {
    st.ref_step = ck.get_u64("ref.step");
    st.ref_disc = clone_layers(st.disc.net.layers);
    std::vector<Tensor> rv;
    for (auto& l : st.ref_disc) {
      rv.push_back(l.weight);
      rv.push_back(l.bias);
    }
    ck.load_params("refdisc", rv);
  }
  st.retention_acc_sum = ck.get_doubles("retention.sum").at(0);
  st.retention_acc_count = ck.get_u64("retention.count");
}

// ---------------------------------------------------------------------------
// Training loop

inline Embedding make_embedding(const Dataset& ds) {
  // 2-D datasets are compared in raw coordinates; image-like data goes
  // through a frozen random projection (documented in README).
  return ds.dim() <= 2 ? Embedding::identity(ds.dim())
                       : Embedding::make(ds.dim(), 32, 8, kEmbeddingSeed);
}

inline double ccd_ratio(const ExperimentConfig& cfg, std::uint64_t step) {
  const double t = cfg.steps > 1
                       ? static_cast<double>(step - 1) / static_cast<double>(cfg.steps - 1)
                       : 0.0;
  const double lo = 0.1, hi = 0.9;
  return cfg.strategy.ccd_increasing ? lo + (hi - lo) * t : hi - (hi - lo) * t;
}

struct RunWriters {
  CsvWriter detect;
  CsvWriter drift;
  CsvWriter paramdiff;
  CsvWriter attention;
  CsvWriter retention;
  CsvWriter toggles;

  explicit RunWriters(const std::string& dir)
      : detect(dir + "/detect.csv",
               "step,R_t,lambda,decision,active_strategy,ratio,layer_index,mask_hash"),
        drift(dir + "/drift.csv", "step,mu_norm,sigma_trace,frechet_prev,frechet_real"),
        paramdiff(dir + "/paramdiff.csv", "step,layer,value"),
        attention(dir + "/attention.csv", "step,layer,cosine"),
        retention(dir + "/retention.csv", "step,label,accuracy"),
        toggles(dir + "/toggles.csv", "step,masked") {}
};

inline void snapshot_analytics(TrainerState& st, RunWriters& w, const Embedding& embed) {
  const std::size_t n = st.cfg.eval_samples;
  Tensor fake = sample(st.gen, n, st.eval_rng);
  Tensor real = st.dataset.batch(n, st.eval_rng);
  IntervalStats fs_ = interval_stats(fake, embed, 1e-6, "step" + std::to_string(st.step));
  IntervalStats rs = interval_stats(real, embed, 1e-6, "real");
  double mu_norm = 0.0, trace = 0.0;
  for (double m : fs_.mean) mu_norm += m * m;
  mu_norm = std::sqrt(mu_norm);
  for (std::size_t i = 0; i < fs_.dim(); ++i) trace += fs_.cov[i * fs_.dim() + i];
  double f_prev = 0.0;
  if (st.prev_stats) f_prev = frechet(*st.prev_stats, fs_);
  const double f_real = frechet(fs_, rs);
  if (!std::isfinite(f_real)) throw NumericError("non-finite distance at step " +
                                                 std::to_string(st.step));
  w.drift.row(std::to_string(st.step) + ',' + fmt_double(mu_norm) + ',' + fmt_double(trace) + ',' +
              fmt_double(f_prev) + ',' + fmt_double(f_real));

  const int d = st.mask_layer();
  for (std::size_t i = 0; i < st.disc.net.layers.size(); ++i) {
    ParamDiffRecord rec = param_diff(st.prev_disc[i], st.disc.net.layers[i], st.step);
    w.paramdiff.row(std::to_string(st.step) + ',' + std::to_string(rec.layer) + ',' +
                    fmt_double(rec.value));
  }
  {
    Discriminator prev = disc_from_layers(st.prev_disc, st.cfg.out_logits);
    Tensor probes = st.dataset.batch(64, st.eval_rng);
    const double cos = attention_drift(prev, st.disc, probes, d);
    w.attention.row(std::to_string(st.step) + ',' + std::to_string(d) + ',' + fmt_double(cos));
  }

  // Retention: a mid-run discriminator snapshot scored on generated
  // samples drawn at later snapshot times — can it still flag them as
  // fake, or has it overfit to historical generator outputs?
  if (!st.has_ref && st.step >= st.cfg.steps / 2) {
    st.has_ref = true;
    st.ref_step = st.step;
    st.ref_disc = clone_layers(st.disc.net.layers);
  } else if (st.has_ref && st.step > st.ref_step) {
    const std::size_t n = 128;
    LabeledBatch b;
    b.label = "future_fake(ref=" + std::to_string(st.ref_step) + ")";
    b.step = st.step;
    b.samples = sample(st.gen, n, st.eval_rng);
    b.truth.assign(n, 0);
    Discriminator ref = disc_from_layers(st.ref_disc, st.cfg.out_logits);
    RetentionTable t = retention_eval(ref, {b}, st.ref_step);
    const double acc = t.rows.front().accuracy;
    st.retention_acc_sum += acc;
    ++st.retention_acc_count;
    w.retention.row(std::to_string(st.step) + ',' + b.label + ',' + fmt_double(acc));
  }

  st.prev_stats = fs_;
  st.prev_disc = clone_layers(st.disc.net.layers);
}

// Advances strategy state for this step and returns the mask selector.
inline std::pair<PhaseIndicator, ActiveMask> step_mask(TrainerState& st, RunWriters& w) {
  const ExperimentConfig& cfg = st.cfg;
  const MaskSite s = st.site();
  PhaseIndicator pi;
  pi.mask_probability = cfg.mask_probability;
  ActiveMask am;

  switch (cfg.strategy.id) {
    case StrategyId::Baseline:
      break;
    case StrategyId::FeatureMask:
    case StrategyId::InputMask:
    case StrategyId::DynamicHead: {
      if (detection_cadence(st.step, cfg.cadence)) {
        Tensor probes = sample(st.gen, cfg.probe_batch, st.probe_rng);
        RetardationReport rep =
            retardation(st.disc, probes, st.phase.pending, cfg.lambda, s, st.step,
                        s == MaskSite::Input ? st.mask_layer() : -1);
        st.phase = scheduler_step(st.phase, rep, st.mask_rng);
        if (st.phase.active) {
          st.phase.active->interval_begin = st.step;
          st.phase.pending.interval_begin = st.step;
        }
        const MaskSpec& logged = st.phase.active ? *st.phase.active : st.phase.pending;
        w.detect.row(std::to_string(st.step) + ',' + fmt_double(rep.value) + ',' +
                     fmt_double(rep.threshold) + ',' + (rep.decision ? "1" : "0") + ',' +
                     strategy_name(cfg.strategy.id) + ',' + fmt_double(cfg.ratio) + ',' +
                     std::to_string(st.mask_layer()) + ',' + std::to_string(logged.hash()));
      }
      bool use = st.phase.state == PhaseState::Masked;
      if (use && pi.mask_probability < 1.0) use = st.dropout_rng.bernoulli(pi.mask_probability);
      pi.use_mask = use;
      if (use) am = ActiveMask{s, &*st.phase.active};
      break;
    }
    case StrategyId::VanillaDropout: {
      // Standard dropout: iid Bernoulli(0.5) per element, resampled every
      // step (never an exact-count mask, unlike the scheduler's masks).
      MaskSpec m;
      m.layer_index = st.mask_layer();
      m.shape = st.mask_shape();
      m.ratio = 0.5;
      m.values.resize(numel(m.shape));
      for (double& v : m.values) v = st.dropout_rng.bernoulli(0.5) ? 0.0 : 1.0;
      st.clock_mask = std::move(m);
      pi.use_mask = true;
      am = ActiveMask{MaskSite::Feature, &*st.clock_mask};
      break;
    }
    case StrategyId::FixedInterval: {
      const bool masked = (st.step / cfg.strategy.period) % 2 == 1;
      if (st.step % cfg.strategy.period == 0)
        w.toggles.row(std::to_string(st.step) + ',' + (masked ? "1" : "0"));
      if (masked && !st.clock_masked)
        st.clock_mask =
            sample_mask(st.mask_shape(), cfg.ratio, st.mask_rng.next_u64(), st.mask_layer());
      st.clock_masked = masked;
      pi.use_mask = masked;
      if (masked) am = ActiveMask{MaskSite::Feature, &*st.clock_mask};
      break;
    }
    case StrategyId::Ccd: {
      if (!st.clock_mask || st.step % cfg.cadence == 0 || st.step == 1)
        st.clock_mask = sample_mask(st.mask_shape(), ccd_ratio(cfg, st.step),
                                    st.mask_rng.next_u64(), st.mask_layer());
      pi.use_mask = true;
      am = ActiveMask{MaskSite::Feature, &*st.clock_mask};
      break;
    }
  }
  return {pi, am};
}

inline void train_steps(TrainerState& st, RunWriters& w, const Embedding& embed,
                        std::uint64_t until, const std::string& ckpt_path) {
  const ExperimentConfig& cfg = st.cfg;
  while (st.step < until) {
    ++st.step;
    auto [pi, am] = step_mask(st, w);
    if (pi.use_mask) ++st.mask_steps;

    Tensor real = st.dataset.batch(cfg.batch, st.data_rng);
    Tensor zd = latent_batch(cfg.batch, cfg.latent_dim, st.latent_rng);
    Tensor ld = d_loss(st.gen, st.disc, pi, real, zd, am);
    if (!std::isfinite(ld.item()))
      throw NumericError("discriminator loss diverged at step " + std::to_string(st.step));
    backward(ld);
    auto dp = st.disc.params();
    adam_step(st.adam_d, dp);
    zero_grads(dp);
    {
      auto gp = st.gen.params();
      zero_grads(gp);
    }

    Tensor zg = latent_batch(cfg.batch, cfg.latent_dim, st.latent_rng);
    Tensor lg = g_loss(st.gen, st.disc, pi, zg, am);
    if (!std::isfinite(lg.item()))
      throw NumericError("generator loss diverged at step " + std::to_string(st.step));
    backward(lg);
    auto gp = st.gen.params();
    adam_step(st.adam_g, gp);
    zero_grads(gp);
    zero_grads(dp);

    if (st.step % cfg.snapshot_every == 0 || st.step == until)
      snapshot_analytics(st, w, embed);
    if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0)
      save_state(st, ckpt_path);
  }
}

// Filtered chart: paramdiff value over steps for the mask layer only.
inline void paramdiff_chart(const std::string& csv, const std::string& svg, int layer) {
  std::ifstream in(csv);
  std::string line;
  Series s;
  s.name = "layer " + std::to_string(layer);
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    if (std::stoi(b) == layer) s.points.emplace_back(std::stod(a), std::stod(c));
  }
  svg_line_chart(svg, "parameter difference", {s});
}

inline void emit_charts(const std::string& dir, int layer) {
  chart_from_csv(dir + "/drift.csv", dir + "/drift.svg", "distribution drift", {3, 4});
  paramdiff_chart(dir + "/paramdiff.csv", dir + "/paramdiff.svg", layer);
  chart_from_csv(dir + "/attention.csv", dir + "/attention.svg", "feature drift (cosine)", {2});
  chart_from_csv(dir + "/retention.csv", dir + "/retention.svg", "retention accuracy", {2});
  chart_from_csv(dir + "/detect.csv", dir + "/detect.svg", "retardation metric", {1, 2});
}

inline void write_summary_json(const RunSummary& s, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = s.seed;
  j["strategy"] = s.strategy;
  j["frechet_final"] = s.frechet_final;
  j["modes_covered"] = s.modes_covered;
  j["mask_fraction"] = s.mask_fraction;
  j["wall_clock_s"] = s.wall_clock_s;
  j["steps"] = s.steps;
  j["gen_hash"] = s.gen_hash;
  j["disc_hash"] = s.disc_hash;
  if (std::isfinite(s.retention_future_acc)) j["retention_future_acc"] = s.retention_future_acc;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

inline RunSummary summarize(TrainerState& st, double wall_clock_s) {
  RunSummary s;
  s.seed = st.seed;
  s.strategy = strategy_name(st.cfg.strategy.id);
  if (st.cfg.strategy.id == StrategyId::FixedInterval)
    s.strategy += "(" + std::to_string(st.cfg.strategy.period) + ")";
  s.steps = st.step;
  s.mask_fraction = st.step ? static_cast<double>(st.mask_steps) / static_cast<double>(st.step) : 0;
  s.wall_clock_s = wall_clock_s;
  s.gen_hash = param_hash(st.gen.params());
  s.disc_hash = param_hash(st.disc.params());

  Embedding embed = make_embedding(st.dataset);
  Rng final_eval(derive_seed(st.seed, 1000));  // fixed stream: summary stats only
  Tensor fake = sample(st.gen, st.cfg.eval_samples, final_eval);
  Tensor real = st.dataset.batch(st.cfg.eval_samples, final_eval);
  s.frechet_final = frechet(interval_stats(fake, embed), interval_stats(real, embed));
  if (st.dataset.params().kind == DatasetKind::RingOfGaussians)
    s.modes_covered = mode_coverage(fake, st.dataset);
  if (st.retention_acc_count > 0)
    s.retention_future_acc = st.retention_acc_sum / static_cast<double>(st.retention_acc_count);
  return s;
}

// Runs one (config, seed) experiment in out_dir; resumes from an existing
// checkpoint when resume is set.
inline RunSummary run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                 const std::string& out_dir, bool resume = false) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  TrainerState st = make_state(cfg, seed);
  const std::string ckpt = out_dir + "/checkpoint.txt";
  if (resume && fs::exists(ckpt)) load_state(st, ckpt);
  else {
    std::ofstream echo(out_dir + "/config.txt");
    echo << config_text(cfg);
  }
  RunWriters w(out_dir);
  Embedding embed = make_embedding(st.dataset);
  train_steps(st, w, embed, cfg.steps, ckpt);
  save_state(st, ckpt);
  emit_charts(out_dir, st.mask_layer());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RunSummary s = summarize(st, secs);
  write_summary_json(s, out_dir + "/summary.json");
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// All seeds of one config; one subdirectory per seed.
inline std::vector<RunSummary> run_all_seeds(const ExperimentConfig& cfg, bool resume = false) {
  std::vector<RunSummary> out;
  for (std::uint64_t seed : cfg.seeds)
    out.push_back(run_experiment(cfg, seed, cfg.out + "/seed" + std::to_string(seed), resume));
  return out;
}

// ---------------------------------------------------------------------------
// Sweep over (layer depth, mask ratio, mask probability)

struct SweepCell {
  int layer = 0;
  double ratio = 0.0;
  double prob = 1.0;
  double median_frechet = 0.0;
  std::vector<RunSummary> runs;
};

inline std::vector<SweepCell> sweep(const ExperimentConfig& base) {
  validate(base);
  if (base.sweep_layers.empty() || base.sweep_ratios.empty() || base.sweep_probs.empty())
    throw ConfigError("sweep_layers", "sweep grid must be non-empty");
  std::vector<SweepCell> cells;
  for (int d : base.sweep_layers)
    for (double r : base.sweep_ratios)
      for (double p : base.sweep_probs) {
        ExperimentConfig cfg = base;
        cfg.strategy = StrategyKind::feature_mask();
        cfg.layer = d;
        cfg.ratio = r;
        cfg.mask_probability = p;
        std::ostringstream dir;
        dir << base.out << "/sweep/d" << d << "_r" << r << "_p" << p;
        cfg.out = dir.str();
        SweepCell cell;
        cell.layer = d;
        cell.ratio = r;
        cell.prob = p;
        cell.runs = run_all_seeds(cfg);
        std::vector<double> fr;
        for (const auto& s : cell.runs) fr.push_back(s.frechet_final);
        cell.median_frechet = median(fr);
        cells.push_back(std::move(cell));
      }
  std::sort(cells.begin(), cells.end(),
            [](const SweepCell& a, const SweepCell& b) { return a.median_frechet < b.median_frechet; });

  std::ofstream csv(base.out + "/sweep.csv");
  csv << "rank,layer,ratio,probability,median_frechet,runs\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    csv << i + 1 << ',' << c.layer << ',' << c.ratio << ',' << c.prob << ','
        << fmt_double(c.median_frechet) << ',' << c.runs.size() << '\n';
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Report

struct ReportRow {
  std::string strategy;
  std::size_t runs = 0;
  double median_frechet = 0.0;
  double median_modes = 0.0;
  double mean_mask_fraction = 0.0;
  double median_retention = std::numeric_limits<double>::quiet_NaN();
};

inline RunSummary read_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TensorError("missing artifact: " + path);
  nlohmann::json j;
  in >> j;
  RunSummary s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.strategy = j.at("strategy").get<std::string>();
  s.frechet_final = j.at("frechet_final").get<double>();
  s.modes_covered = j.at("modes_covered").get<std::size_t>();
  s.mask_fraction = j.at("mask_fraction").get<double>();
  s.wall_clock_s = j.at("wall_clock_s").get<double>();
  s.steps = j.at("steps").get<std::uint64_t>();
  s.gen_hash = j.at("gen_hash").get<std::uint64_t>();
  s.disc_hash = j.at("disc_hash").get<std::uint64_t>();
  if (j.contains("retention_future_acc"))
    s.retention_future_acc = j.at("retention_future_acc").get<double>();
  return s;
}

// Gathers summary.json files from run dirs (or their seed subdirs).
inline std::vector<RunSummary> collect_summaries(const std::vector<std::string>& dirs) {
  std::vector<RunSummary> out;
  for (const auto& dir : dirs) {
    if (fs::exists(dir + "/summary.json")) {
      out.push_back(read_summary_json(dir + "/summary.json"));
      continue;
    }
    if (!fs::exists(dir)) throw TensorError("missing artifact: " + dir);
    std::vector<std::string> subs;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / "summary.json"))
        subs.push_back((e.path() / "summary.json").string());
    std::sort(subs.begin(), subs.end());
    for (const auto& p : subs) out.push_back(read_summary_json(p));
  }
  return out;
}

inline std::vector<ReportRow> report_rows(const std::vector<RunSummary>& summaries) {
  std::map<std::string, std::vector<RunSummary>> by_strategy;
  for (const auto& s : summaries) by_strategy[s.strategy].push_back(s);
  std::vector<ReportRow> rows;
  for (const auto& [name, runs] : by_strategy) {
    ReportRow r;
    r.strategy = name;
    r.runs = runs.size();
    std::vector<double> fr, md, rt;
    double mf = 0.0;
    for (const auto& s : runs) {
      fr.push_back(s.frechet_final);
      md.push_back(static_cast<double>(s.modes_covered));
      mf += s.mask_fraction;
      if (std::isfinite(s.retention_future_acc)) rt.push_back(s.retention_future_acc);
    }
    r.median_frechet = median(fr);
    r.median_modes = median(md);
    r.mean_mask_fraction = mf / static_cast<double>(runs.size());
    if (!rt.empty()) r.median_retention = median(rt);
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(),
            [](const ReportRow& a, const ReportRow& b) { return a.median_frechet < b.median_frechet; });
  return rows;
}

inline std::string report_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "| strategy | runs | median distance | median modes | mask fraction | retention |\n"
     << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.strategy << " | " << r.runs << " | " << r.median_frechet << " | "
       << r.median_modes << " | " << r.mean_mask_fraction << " | ";
    if (std::isfinite(r.median_retention)) os << r.median_retention;
    else os << "-";
    os << " |\n";
  }
  return os.str();
}

inline void emit_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<RunSummary> summaries = collect_summaries(run_dirs);
  std::vector<ReportRow> rows = report_rows(summaries);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json e;
    e["strategy"] = r.strategy;
    e["runs"] = r.runs;
    e["median_frechet"] = r.median_frechet;
    e["median_modes"] = r.median_modes;
    e["mean_mask_fraction"] = r.mean_mask_fraction;
    if (std::isfinite(r.median_retention)) e["median_retention"] = r.median_retention;
    j["rows"].push_back(e);
  }
  std::ofstream(out_dir + "/report.json") << j.dump(2) << '\n';
  std::ofstream(out_dir + "/report.md") << report_markdown(rows);
}

// Re-emits analytics artifacts for a finished/checkpointed run directory.
inline RunSummary analyze_run(const std::string& run_dir) {
  const std::string cfg_path = run_dir + "/config.txt";
  if (!fs::exists(cfg_path)) throw ConfigError("analyze", "no config.txt in " + run_dir);
  ExperimentConfig cfg = load_config(cfg_path);
  const std::string ckpt = run_dir + "/checkpoint.txt";
  if (!fs::exists(ckpt)) throw ConfigError("analyze", "no checkpoint.txt in " + run_dir);
  Checkpoint ck = Checkpoint::load(ckpt);
  TrainerState st = make_state(cfg, ck.get_u64("seed"));
  load_state(st, ckpt);
  emit_charts(run_dir, st.mask_layer());
  RunSummary s = summarize(st, 0.0);
  write_summary_json(s, run_dir + "/summary.json");
  return s;
}

}  // namespace dmd
