#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dmd/engine.hpp"
#include "dmd/nn.hpp"
#include "dmd/tensor.hpp"

namespace dmd {

// Versioned key-value text container. Each line is `key=payload`; doubles
// are printed with 17 significant digits so a reload is bit-identical.
// Documented in README under "Checkpoint format".
class Checkpoint {
 public:
  static constexpr const char* kMagic = "dmdgan-checkpoint v1";

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  void set_u64(const std::string& key, std::uint64_t v) { kv_[key] = std::to_string(v); }

  void set_doubles(const std::string& key, const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    kv_[key] = os.str();
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw TensorError("checkpoint: missing key '" + key + "'");
    return it->second;
  }

  std::uint64_t get_u64(const std::string& key) const {
    return std::stoull(get(key));
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::istringstream is(get(key));
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw TensorError("cannot write checkpoint " + path);
    out << kMagic << '\n';
    for (const auto& [k, v] : kv_) out << k << '=' << v << '\n';
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TensorError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
      throw TensorError("checkpoint " + path + ": bad or missing version line");
    Checkpoint ck;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw TensorError("checkpoint " + path + ": malformed line '" + line + "'");
      ck.kv_[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return ck;
  }

  // --- composite helpers ----------------------------------------------

  void set_params(const std::string& prefix, const std::vector<Tensor>& params) {
    set_u64(prefix + ".count", params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      set_doubles(prefix + ".p" + std::to_string(i), params[i].data());
  }

  // Writes stored values into existing tensors (shapes come from the
  // rebuilt architecture, which must match the saved run).
  void load_params(const std::string& prefix, std::vector<Tensor> params) const {
    if (get_u64(prefix + ".count") != params.size())
      throw TensorError("checkpoint: parameter count mismatch for '" + prefix +
                        "' (wrong architecture?)");
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::vector<double> v = get_doubles(prefix + ".p" + std::to_string(i));
      if (v.size() != params[i].size())
        throw TensorError("checkpoint: size mismatch for " + prefix + ".p" + std::to_string(i));
      params[i].data_mut() = std::move(v);
    }
  }

  void set_adam(const std::string& prefix, const AdamState& s) {
    set_u64(prefix + ".step", s.step);
    set_u64(prefix + ".count", s.m.size());
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      set_doubles(prefix + ".m" + std::to_string(i), s.m[i]);
      set_doubles(prefix + ".v" + std::to_string(i), s.v[i]);
    }
  }

  void load_adam(const std::string& prefix, AdamState& s) const {
    s.step = get_u64(prefix + ".step");
    const std::size_t n = get_u64(prefix + ".count");
    s.m.resize(n);
    s.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.m[i] = get_doubles(prefix + ".m" + std::to_string(i));
      s.v[i] = get_doubles(prefix + ".v" + std::to_string(i));
    }
  }

  // Masks round-trip through their sampling parameters, not their values.
  void set_mask(const std::string& prefix, const MaskSpec& m) {
    set_u64(prefix + ".layer", static_cast<std::uint64_t>(m.layer_index));
    std::ostringstream os;
    for (std::size_t i = 0; i < m.shape.size(); ++i) os << (i ? " " : "") << m.shape[i];
    set(prefix + ".shape", os.str());
    std::ostringstream rs;
    rs.precision(17);
    rs << m.ratio;
    set(prefix + ".ratio", rs.str());
    set_u64(prefix + ".seed", m.seed);
    set_u64(prefix + ".begin", m.interval_begin);
    set_u64(prefix + ".end", m.interval_end);
  }

  MaskSpec get_mask(const std::string& prefix) const {
    Shape shape;
    std::istringstream is(get(prefix + ".shape"));
    std::size_t d;
    while (is >> d) shape.push_back(d);
    MaskSpec m = sample_mask(shape, std::stod(get(prefix + ".ratio")), get_u64(prefix + ".seed"),
                             static_cast<int>(get_u64(prefix + ".layer")));
    m.interval_begin = get_u64(prefix + ".begin");
    m.interval_end = get_u64(prefix + ".end");
    return m;
  }

 private:
  std::map<std::string, std::string> kv_;
};

// FNV-1a over raw parameter bytes, in declaration order. The determinism
// and resume criteria compare these hashes.
inline std::uint64_t param_hash(const std::vector<Tensor>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const auto& v = p.data();
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace dmd
