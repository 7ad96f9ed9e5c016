#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmd/dataset.hpp"
#include "dmd/engine.hpp"

namespace dmd {

// Config problems carry the offending field so the CLI can report it and
// exit with the config error code.
struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string f, const std::string& msg)
      : std::runtime_error("config field '" + f + "': " + msg), field(std::move(f)) {}
};

// Numerical blow-ups (NaN/inf losses, failed matrix roots during a run)
// map to their own exit code, distinct from config errors.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExperimentConfig {
  // dataset
  DatasetParams data;
  // networks
  std::size_t latent_dim = 8;
  std::vector<std::size_t> gen_hidden = {32, 32};
  std::vector<std::size_t> disc_hidden = {32, 32, 32, 32, 32};
  std::size_t out_logits = 1;
  double output_scale = 1.0;
  // strategy
  StrategyKind strategy = StrategyKind::feature_mask();
  double lambda = 0.85;
  double ratio = 0.3;
  int layer = 0;  // 0 = auto: layer 5, or the penultimate layer if shallower
  std::uint64_t cadence = 100;
  double mask_probability = 1.0;
  // optimizer
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  // run shape
  std::uint64_t steps = 25000;
  std::size_t batch = 128;
  std::size_t probe_batch = 64;
  std::uint64_t snapshot_every = 500;
  std::uint64_t checkpoint_every = 0;  // 0 = final step only
  std::size_t eval_samples = 1024;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out = "runs/exp";
  // sweep grid (feature-mask cells)
  std::vector<int> sweep_layers = {3, 5};
  std::vector<double> sweep_ratios = {0.1, 0.3, 0.5};
  std::vector<double> sweep_probs = {0.5, 1.0};

  std::size_t disc_layer_count() const { return disc_hidden.size() + 1; }

  // Effective mask layer: configured value, else layer 5 when the stack is
  // deep enough, else the penultimate layer.
  int effective_layer() const {
    if (layer > 0) return layer;
    const std::size_t n = disc_layer_count();
    return n >= 5 ? 5 : static_cast<int>(n > 1 ? n - 1 : 1);
  }
};

namespace detail {

template <typename T>
inline std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v;
    char extra;
    if (!(is >> v) || (is >> extra)) throw ConfigError(key, "bad list element '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

inline double parse_double(const std::string& key, const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::istringstream is(s);
  double v;
  char extra;
  if (!(is >> v) || (is >> extra)) throw ConfigError(key, "not a number: '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::istringstream is(s);
  std::uint64_t v;
  char extra;
  if (!(is >> v) || (is >> extra)) throw ConfigError(key, "not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key, "expected true/false, got '" + s + "'");
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline StrategyKind parse_strategy(const std::string& s, std::uint64_t period, bool ccd_up) {
  if (s == "baseline") return StrategyKind::baseline();
  if (s == "feature_mask") return StrategyKind::feature_mask();
  if (s == "input_mask") return StrategyKind::input_mask();
  if (s == "dynamic_head") return StrategyKind::dynamic_head();
  if (s == "vanilla_dropout") return StrategyKind::vanilla_dropout();
  if (s == "fixed_interval") return StrategyKind::fixed_interval(period);
  if (s == "ccd") return StrategyKind::ccd(ccd_up);
  throw ConfigError("strategy", "unknown strategy '" + s + "'");
}

// Applies one key=value assignment; unknown keys are config errors.
inline void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "dataset") cfg.data.kind = [&] {
      try {
        return parse_dataset_kind(value);
      } catch (const TensorError& e) {
        throw ConfigError("dataset", e.what());
      }
    }();
  else if (key == "ring_k") cfg.data.ring_k = parse_u64(key, value);
  else if (key == "ring_radius") cfg.data.ring_radius = parse_double(key, value);
  else if (key == "ring_sigma") cfg.data.ring_sigma = parse_double(key, value);
  else if (key == "spiral_turns") cfg.data.spiral_turns = parse_double(key, value);
  else if (key == "spiral_noise") cfg.data.spiral_noise = parse_double(key, value);
  else if (key == "spiral_scale") cfg.data.spiral_scale = parse_double(key, value);
  else if (key == "micro_grid") cfg.data.micro_grid = parse_u64(key, value);
  else if (key == "micro_k") cfg.data.micro_k = parse_u64(key, value);
  else if (key == "micro_noise") cfg.data.micro_noise = parse_double(key, value);
  else if (key == "latent_dim") cfg.latent_dim = parse_u64(key, value);
  else if (key == "gen_hidden") cfg.gen_hidden = parse_list<std::size_t>(key, value);
  else if (key == "disc_hidden") cfg.disc_hidden = parse_list<std::size_t>(key, value);
  else if (key == "out_logits") cfg.out_logits = parse_u64(key, value);
  else if (key == "output_scale") cfg.output_scale = parse_double(key, value);
  else if (key == "strategy")
    cfg.strategy = parse_strategy(value, cfg.strategy.period, cfg.strategy.ccd_increasing);
  else if (key == "period") cfg.strategy.period = parse_u64(key, value);
  else if (key == "ccd_increasing") cfg.strategy.ccd_increasing = parse_bool(key, value);
  else if (key == "lambda") cfg.lambda = parse_double(key, value);
  else if (key == "ratio") cfg.ratio = parse_double(key, value);
  else if (key == "layer") cfg.layer = static_cast<int>(parse_u64(key, value));
  else if (key == "cadence") cfg.cadence = parse_u64(key, value);
  else if (key == "mask_probability") cfg.mask_probability = parse_double(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "beta1") cfg.beta1 = parse_double(key, value);
  else if (key == "beta2") cfg.beta2 = parse_double(key, value);
  else if (key == "steps") cfg.steps = parse_u64(key, value);
  else if (key == "batch") cfg.batch = parse_u64(key, value);
  else if (key == "probe_batch") cfg.probe_batch = parse_u64(key, value);
  else if (key == "snapshot_every") cfg.snapshot_every = parse_u64(key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_u64(key, value);
  else if (key == "eval_samples") cfg.eval_samples = parse_u64(key, value);
  else if (key == "seeds") cfg.seeds = parse_list<std::uint64_t>(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "sweep_layers") cfg.sweep_layers = parse_list<int>(key, value);
  else if (key == "sweep_ratios") cfg.sweep_ratios = parse_list<double>(key, value);
  else if (key == "sweep_probs") cfg.sweep_probs = parse_list<double>(key, value);
  else throw ConfigError(key, "unknown key");
}

// Flat key=value text; '#' starts a comment, blank lines skipped.
inline ExperimentConfig parse_config_text(std::istream& in, ExperimentConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key=value, got '" + line + "'");
    apply_kv(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  return parse_config_text(in);
}

// Total validation: every invalid config names its offending field.
inline void validate(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("seeds", "must be non-empty");
  if (cfg.batch == 0) throw ConfigError("batch", "must be >= 1");
  if (cfg.probe_batch == 0) throw ConfigError("probe_batch", "must be >= 1");
  if (cfg.steps == 0) throw ConfigError("steps", "must be >= 1");
  if (cfg.cadence == 0) throw ConfigError("cadence", "must be >= 1");
  if (cfg.steps < cfg.cadence)
    throw ConfigError("steps", "total steps (" + std::to_string(cfg.steps) +
                                   ") must be >= cadence (" + std::to_string(cfg.cadence) + ")");
  if (cfg.ratio < 0.0 || cfg.ratio > 1.0) throw ConfigError("ratio", "must be in [0,1]");
  if (cfg.mask_probability < 0.0 || cfg.mask_probability > 1.0)
    throw ConfigError("mask_probability", "must be in [0,1]");
  if (cfg.latent_dim == 0) throw ConfigError("latent_dim", "must be >= 1");
  if (cfg.out_logits == 0) throw ConfigError("out_logits", "must be >= 1");
  if (cfg.gen_hidden.empty()) throw ConfigError("gen_hidden", "must be non-empty");
  if (cfg.disc_hidden.empty()) throw ConfigError("disc_hidden", "must be non-empty");
  if (cfg.snapshot_every == 0) throw ConfigError("snapshot_every", "must be >= 1");
  if (cfg.eval_samples < 2) throw ConfigError("eval_samples", "must be >= 2");
  if (cfg.lr <= 0.0) throw ConfigError("lr", "must be > 0");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0) throw ConfigError("beta1", "must be in [0,1)");
  if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) throw ConfigError("beta2", "must be in [0,1)");
  if (cfg.out.empty()) throw ConfigError("out", "must be non-empty");
  const int d = cfg.effective_layer();
  const int n = static_cast<int>(cfg.disc_layer_count());
  if (d < 1 || d > n)
    throw ConfigError("layer", "layer " + std::to_string(d) + " outside discriminator depth " +
                                   std::to_string(n));
  if (cfg.strategy.id == StrategyId::FixedInterval && cfg.strategy.period == 0)
    throw ConfigError("period", "fixed_interval needs period >= 1");
  for (int sl : cfg.sweep_layers)
    if (sl < 1 || sl > n)
      throw ConfigError("sweep_layers", "layer " + std::to_string(sl) +
                                            " outside discriminator depth " + std::to_string(n));
  for (double r : cfg.sweep_ratios)
    if (r < 0.0 || r > 1.0) throw ConfigError("sweep_ratios", "ratio must be in [0,1]");
  for (double p : cfg.sweep_probs)
    if (p < 0.0 || p > 1.0) throw ConfigError("sweep_probs", "probability must be in [0,1]");
}

// Echo of the full effective config, parseable by load_config.
inline std::string config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  auto list_u = [](const auto& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  os << "dataset=" << dataset_kind_name(c.data.kind) << '\n'
     << "ring_k=" << c.data.ring_k << '\n'
     << "ring_radius=" << c.data.ring_radius << '\n'
     << "ring_sigma=" << c.data.ring_sigma << '\n'
     << "spiral_turns=" << c.data.spiral_turns << '\n'
     << "spiral_noise=" << c.data.spiral_noise << '\n'
     << "spiral_scale=" << c.data.spiral_scale << '\n'
     << "micro_grid=" << c.data.micro_grid << '\n'
     << "micro_k=" << c.data.micro_k << '\n'
     << "micro_noise=" << c.data.micro_noise << '\n'
     << "latent_dim=" << c.latent_dim << '\n'
     << "gen_hidden=" << list_u(c.gen_hidden) << '\n'
     << "disc_hidden=" << list_u(c.disc_hidden) << '\n'
     << "out_logits=" << c.out_logits << '\n'
     << "output_scale=" << c.output_scale << '\n'
     << "strategy=" << strategy_name(c.strategy.id) << '\n'
     << "period=" << c.strategy.period << '\n'
     << "ccd_increasing=" << (c.strategy.ccd_increasing ? "true" : "false") << '\n'
     << "lambda=" << (std::isinf(c.lambda) ? (c.lambda > 0 ? std::string("inf") : std::string("-inf"))
                                           : [&] {
                                               std::ostringstream s;
                                               s.precision(17);
                                               s << c.lambda;
                                               return s.str();
                                             }())
     << '\n'
     << "ratio=" << c.ratio << '\n'
     << "layer=" << c.effective_layer() << '\n'
     << "cadence=" << c.cadence << '\n'
     << "mask_probability=" << c.mask_probability << '\n'
     << "lr=" << c.lr << '\n'
     << "beta1=" << c.beta1 << '\n'
     << "beta2=" << c.beta2 << '\n'
     << "steps=" << c.steps << '\n'
     << "batch=" << c.batch << '\n'
     << "probe_batch=" << c.probe_batch << '\n'
     << "snapshot_every=" << c.snapshot_every << '\n'
     << "checkpoint_every=" << c.checkpoint_every << '\n'
     << "eval_samples=" << c.eval_samples << '\n'
     << "seeds=" << list_u(c.seeds) << '\n'
     << "out=" << c.out << '\n'
     << "sweep_layers=" << list_u(c.sweep_layers) << '\n'
     << "sweep_ratios=" << list_u(c.sweep_ratios) << '\n'
     << "sweep_probs=" << list_u(c.sweep_probs) << '\n';
  return os.str();
}

}  // namespace dmd
