// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rpt/core/tensor.hpp"
#include "rpt/data/corruption.hpp"
#include "rpt/data/dataset.hpp"
#include "rpt/data/shapes.hpp"
#include "rpt/model/encoders.hpp"
#include "rpt/regulation/constraints.hpp"
#include "rpt/regulation/ensemble.hpp"

namespace rpt {

enum class Protocol { BaseToNew, CrossDataset, Corruption, FewShot, Ablation };

inline std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::BaseToNew: return "base-to-new";
    case Protocol::CrossDataset: return "cross-dataset";
    case Protocol::Corruption: return "corruption";
    case Protocol::FewShot: return "few-shot";
    case Protocol::Ablation: return "ablation";
  }
  return "?";
}

inline Protocol parse_protocol(const std::string& s) {
  for (auto p : {Protocol::BaseToNew, Protocol::CrossDataset, Protocol::Corruption, Protocol::FewShot,
                 Protocol::Ablation})
    if (protocol_name(p) == s) return p;
  throw Error("unknown benchmark '" + s + "' (expected base-to-new, cross-dataset, corruption, few-shot or ablation)");
}

/// How the ensemble centre and width are chosen. `scaled` uses (0.75e, e/20),
/// `paper` the fixed (15, 1), `custom` the configured mu/sigma.
enum class EnsembleMode { Scaled, Paper, Custom };

inline std::string ensemble_mode_name(EnsembleMode m) {
  switch (m) {
    case EnsembleMode::Scaled: return "scaled";
    case EnsembleMode::Paper: return "paper";
    case EnsembleMode::Custom: return "custom";
  }
  return "?";
}

inline EnsembleMode parse_ensemble_mode(const std::string& s) {
  for (auto m : {EnsembleMode::Scaled, EnsembleMode::Paper, EnsembleMode::Custom})
    if (ensemble_mode_name(m) == s) return m;
  throw Error("unknown ensemble mode '" + s + "' (expected scaled, paper or custom)");
}

/// Everything that determines a run. Zero-valued `epochs`, `depth` and
/// `length` mean "protocol default".
struct RunConfig {
  Protocol protocol = Protocol::BaseToNew;
  std::size_t epochs = 0;
  std::size_t depth = 0;
  std::size_t length = 0;
  std::size_t shots = 16;
  std::vector<std::size_t> shots_list = {1, 2, 4, 8, 16};

  RegulationWeights weights;
  bool mac = true;
  bool tdc = true;
  bool mec = true;
  EnsembleMode ensemble = EnsembleMode::Scaled;
  double mu = 15.0;
  double sigma = 1.0;

  double tau = 0.01;
  double lr = 0.0025;
  double momentum = 0.0;
  double clip = 0.0;
  std::size_t batch = 32;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  std::uint64_t data_seed = 0;
  std::size_t n_points = 1024;
  std::size_t train_per_class = 64;
  std::size_t test_per_class = 32;
  std::size_t n_t = 10;
  std::vector<std::string> classes = shape_families();
  int severity = 2;

  EncoderConfig encoder;
  std::uint64_t encoder_seed = 7;
  std::size_t surrogate_per_class = 256;
  std::size_t surrogate_epochs = 6;
  double surrogate_lr = 1e-3;
  std::string cache_dir = ".rpt-cache";

  bool record_wallclock = false;

  std::size_t resolved_epochs() const {
    if (epochs != 0) return epochs;
    return protocol == Protocol::BaseToNew || protocol == Protocol::Ablation ? 20 : 50;
  }
  std::size_t resolved_depth() const {
    if (depth != 0) return depth;
    return protocol == Protocol::CrossDataset || protocol == Protocol::FewShot ? 12 : 9;
  }
  std::size_t resolved_length() const {
    if (length != 0) return length;
    return protocol == Protocol::CrossDataset || protocol == Protocol::FewShot ? 4 : 2;
  }
  std::pair<double, double> resolved_ensemble() const {
    switch (ensemble) {
      case EnsembleMode::Scaled: return scaled_ensemble_params(resolved_epochs());
      case EnsembleMode::Paper: return {15.0, 1.0};
      case EnsembleMode::Custom: return {mu, sigma};
    }
    return {mu, sigma};
  }
  /// Weights with disabled constraints zeroed; MAC owns all three terms.
  RegulationWeights effective_weights() const {
    return mac ? weights : RegulationWeights{0.0, 0.0, 0.0};
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error("invalid config: " + m); };
    weights.validate();
    if (resolved_depth() > encoder.blocks)
      fail("prompt depth " + std::to_string(resolved_depth()) + " exceeds the " + std::to_string(encoder.blocks) +
           " encoder blocks");
    if (!valid_shot_count(shots)) fail("shots must be one of 1, 2, 4, 8, 16");
    if (shots_list.empty()) fail("shots_list is empty");
    for (auto k : shots_list)
      if (!valid_shot_count(k)) fail("shots_list entry " + std::to_string(k) + " is not one of 1, 2, 4, 8, 16");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (!(clip >= 0.0)) fail("clip must be non-negative");
    if (batch == 0) fail("batch must be positive");
    if (seeds.empty()) fail("at least one seed is required");
    if (n_points < kMinPoints) fail("n_points must be at least " + std::to_string(kMinPoints));
    if (n_points < encoder.patches || n_points < encoder.neighbors) fail("n_points smaller than the patch grouping");
    if (train_per_class < 5) fail("train_per_class must be at least 5 so validation is non-empty");
    if (test_per_class == 0) fail("test_per_class must be positive");
    if (n_t == 0) fail("n_t must be at least 1");
    if (classes.size() < 2) fail("at least 2 classes are required");
    for (const auto& c : classes) FamilySpec::parse(c);
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = i + 1; j < classes.size(); ++j)
        if (classes[i] == classes[j]) fail("class '" + classes[i] + "' listed twice");
    if (severity < 0 || severity > 4) fail("severity must be in 0..4");
    if (ensemble == EnsembleMode::Custom && !(sigma > 0.0)) fail("sigma must be positive");
    encoder.validate();
    if (encoder.feature_dim != encoder.width) fail("feature_dim must equal width");
    if (surrogate_per_class == 0 || surrogate_epochs == 0) fail("surrogate needs samples and epochs");
    if (!(surrogate_lr > 0.0)) fail("surrogate_lr must be positive");
    const auto [m, s] = resolved_ensemble();
    if (!(s > 0.0)) fail("resolved ensemble sigma must be positive");
    (void)m;
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// ---------------------------------------------------------------------------
// key = value text form

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw Error("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw Error("");
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw Error("");
    return x;
  } catch (...) {
    throw Error("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw Error("");
    return x;
  } catch (...) {
    throw Error("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

}  // namespace detail

/// Ordered (key, value) pairs; the order is the documented schema order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
  using detail::fmt_double;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"benchmark", protocol_name(c.protocol)},
      {"epochs", std::to_string(c.epochs)},
      {"depth", std::to_string(c.depth)},
      {"length", std::to_string(c.length)},
      {"shots", std::to_string(c.shots)},
      {"shots_list", detail::join(c.shots_list)},
      {"alpha", fmt_double(c.weights.alpha)},
      {"beta", fmt_double(c.weights.beta)},
      {"gamma", fmt_double(c.weights.gamma)},
      {"mac", b(c.mac)},
      {"tdc", b(c.tdc)},
      {"mec", b(c.mec)},
      {"ensemble", ensemble_mode_name(c.ensemble)},
      {"mu", fmt_double(c.mu)},
      {"sigma", fmt_double(c.sigma)},
      {"tau", fmt_double(c.tau)},
      {"lr", fmt_double(c.lr)},
      {"momentum", fmt_double(c.momentum)},
      {"clip", fmt_double(c.clip)},
      {"batch", std::to_string(c.batch)},
      {"seeds", detail::join(c.seeds)},
      {"data_seed", std::to_string(c.data_seed)},
      {"n_points", std::to_string(c.n_points)},
      {"train_per_class", std::to_string(c.train_per_class)},
      {"test_per_class", std::to_string(c.test_per_class)},
      {"n_t", std::to_string(c.n_t)},
      {"classes", detail::join(c.classes)},
      {"severity", std::to_string(c.severity)},
      {"blocks", std::to_string(c.encoder.blocks)},
      {"width", std::to_string(c.encoder.width)},
      {"heads", std::to_string(c.encoder.heads)},
      {"mlp_ratio", std::to_string(c.encoder.mlp_ratio)},
      {"patches", std::to_string(c.encoder.patches)},
      {"neighbors", std::to_string(c.encoder.neighbors)},
      {"encoder_seed", std::to_string(c.encoder_seed)},
      {"surrogate_per_class", std::to_string(c.surrogate_per_class)},
      {"surrogate_epochs", std::to_string(c.surrogate_epochs)},
      {"surrogate_lr", fmt_double(c.surrogate_lr)},
      {"cache_dir", c.cache_dir},
      {"record_wallclock", b(c.record_wallclock)},
  };
}

/// Applies one key; unknown keys are rejected.
inline void apply_config_value(RunConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  auto sz = [&] { return static_cast<std::size_t>(parse_u64(key, v)); };
  if (key == "benchmark") c.protocol = parse_protocol(v);
  else if (key == "epochs") c.epochs = sz();
  else if (key == "depth") c.depth = sz();
  else if (key == "length") c.length = sz();
  else if (key == "shots") c.shots = sz();
  else if (key == "shots_list") {
    c.shots_list.clear();
    for (const auto& s : split_list(v)) c.shots_list.push_back(static_cast<std::size_t>(parse_u64(key, s)));
  } else if (key == "alpha") c.weights.alpha = parse_double(key, v);
  else if (key == "beta") c.weights.beta = parse_double(key, v);
  else if (key == "gamma") c.weights.gamma = parse_double(key, v);
  else if (key == "mac") c.mac = parse_bool(key, v);
  else if (key == "tdc") c.tdc = parse_bool(key, v);
  else if (key == "mec") c.mec = parse_bool(key, v);
  else if (key == "ensemble") c.ensemble = parse_ensemble_mode(v);
  else if (key == "mu") c.mu = parse_double(key, v);
  else if (key == "sigma") c.sigma = parse_double(key, v);
  else if (key == "tau") c.tau = parse_double(key, v);
  else if (key == "lr") c.lr = parse_double(key, v);
  else if (key == "momentum") c.momentum = parse_double(key, v);
  else if (key == "clip") c.clip = parse_double(key, v);
  else if (key == "batch") c.batch = sz();
  else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : split_list(v)) c.seeds.push_back(parse_u64(key, s));
  } else if (key == "data_seed") c.data_seed = parse_u64(key, v);
  else if (key == "n_points") c.n_points = sz();
  else if (key == "train_per_class") c.train_per_class = sz();
  else if (key == "test_per_class") c.test_per_class = sz();
  else if (key == "n_t") c.n_t = sz();
  else if (key == "classes") c.classes = split_list(v);
  else if (key == "severity") c.severity = static_cast<int>(parse_u64(key, v));
  else if (key == "blocks") c.encoder.blocks = sz();
  else if (key == "width") c.encoder.width = c.encoder.feature_dim = sz();
  else if (key == "heads") c.encoder.heads = sz();
  else if (key == "mlp_ratio") c.encoder.mlp_ratio = sz();
  else if (key == "patches") c.encoder.patches = sz();
  else if (key == "neighbors") c.encoder.neighbors = sz();
  else if (key == "encoder_seed") c.encoder_seed = parse_u64(key, v);
  else if (key == "surrogate_per_class") c.surrogate_per_class = sz();
  else if (key == "surrogate_epochs") c.surrogate_epochs = sz();
  else if (key == "surrogate_lr") c.surrogate_lr = parse_double(key, v);
  else if (key == "cache_dir") c.cache_dir = v;
  else if (key == "record_wallclock") c.record_wallclock = parse_bool(key, v);
  else throw Error("unknown config key '" + key + "'");
}

inline std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& [k, v] : config_entries(c)) os << k << " = " << v << '\n';
  return os.str();
}

/// Parses `key = value` lines on top of `base`. Blank lines and `#` comments
/// are ignored.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    try {
      apply_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config file '" + path + "'");
  return parse_config(is, std::move(base));
}

}  // namespace rpt
