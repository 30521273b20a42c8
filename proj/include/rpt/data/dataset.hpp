// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rpt/core/rng.hpp"
#include "rpt/data/shapes.hpp"

namespace rpt {

/// One line of a dataset manifest.
struct ManifestRecord {
  std::string class_name;
  std::string family;  // generator spec, "family" or "family:style"
  std::uint64_t seed = 0;
  std::size_t n_points = 1024;
  std::string split;  // "train", "test", "val" or "pretrain"

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  std::string name;
  std::vector<std::string> classes;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> with_split(const std::string& split) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
      if (r.split == split) out.push_back(r);
    return out;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Recipe for a synthetic dataset. Classes are family names; the style is
/// applied to every class.
struct DatasetSpec {
  std::string name = "synthetic";
  std::vector<std::string> classes = shape_families();
  std::string style = "clean";
  std::size_t train_per_class = 64;
  std::size_t test_per_class = 32;
  std::size_t n_points = 1024;
  std::uint64_t seed = 0;
};

inline std::string family_spec_string(const std::string& cls, const std::string& style) {
  return style == "clean" ? cls : cls + ":" + style;
}

/// Per-sample seed: a pure function of (config seed, class, index), so
/// generation order and parallelism cannot change a manifest.
inline std::uint64_t sample_seed(std::uint64_t config_seed, const std::string& cls, std::size_t index) {
  return derive_seed(config_seed, hash_str(cls), index);
}

inline Manifest make_manifest(const DatasetSpec& spec) {
  if (spec.classes.empty()) throw Error("dataset '" + spec.name + "' has no classes");
  if (spec.n_points < kMinPoints) throw Error("dataset '" + spec.name + "' needs at least 64 points per cloud");
  Manifest m;
  m.name = spec.name;
  m.classes = spec.classes;
  for (const auto& c : spec.classes) {
    const std::string fam = family_spec_string(c, spec.style);
    FamilySpec::parse(fam);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < spec.train_per_class; ++i, ++idx)
      m.records.push_back({c, fam, sample_seed(spec.seed, c, idx), spec.n_points, "train"});
    for (std::size_t i = 0; i < spec.test_per_class; ++i, ++idx)
      m.records.push_back({c, fam, sample_seed(spec.seed, c, idx), spec.n_points, "test"});
  }
  return m;
}

/// Seed namespace of the surrogate pre-train split, disjoint from any
/// benchmark config seed (those derive from small integers).
inline constexpr std::uint64_t kPretrainNamespace = 0x7072657472616e31ULL;

inline Manifest make_pretrain_manifest(const std::vector<std::string>& classes, std::size_t per_class,
                                       std::size_t n_points) {
  Manifest m;
  m.name = "pretrain";
  m.classes = classes;
  for (const auto& c : classes)
    for (std::size_t i = 0; i < per_class; ++i)
      m.records.push_back({c, c, sample_seed(kPretrainNamespace, c, i), n_points, "pretrain"});
  return m;
}

inline PointCloud materialize(const ManifestRecord& r) { return gen_shape(r.family, r.seed, r.n_points); }

// ---------------------------------------------------------------------------
// Manifest text format: "# name <name>", "# classes a b c", then one
// tab-separated record per line: class, family, seed, n_points, split.

inline void write_manifest(std::ostream& os, const Manifest& m) {
  os << "# name " << m.name << '\n' << "# classes";
  for (const auto& c : m.classes) os << ' ' << c;
  os << '\n';
  for (const auto& r : m.records)
    os << r.class_name << '\t' << r.family << '\t' << r.seed << '\t' << r.n_points << '\t' << r.split << '\n';
}

inline Manifest read_manifest(std::istream& is) {
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# name ", 0) == 0) {
      m.name = line.substr(7);
      continue;
    }
    if (line.rfind("# classes", 0) == 0) {
      std::istringstream ss(line.substr(9));
      for (std::string c; ss >> c;) m.classes.push_back(c);
      continue;
    }
    if (line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestRecord r;
    std::string seed, n;
    if (!std::getline(ss, r.class_name, '\t') || !std::getline(ss, r.family, '\t') || !std::getline(ss, seed, '\t') ||
        !std::getline(ss, n, '\t') || !std::getline(ss, r.split))
      throw Error("manifest line " + std::to_string(lineno) + " does not have five fields");
    try {
      r.seed = std::stoull(seed);
      r.n_points = std::stoull(n);
    } catch (const std::exception&) {
      throw Error("manifest line " + std::to_string(lineno) + " has a malformed number");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest '" + path.string() + "'");
  write_manifest(os, m);
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read manifest '" + path.string() + "'");
  return read_manifest(is);
}

// ---------------------------------------------------------------------------
// Point cache: "RPCD", u32 version, u64 N, then N x 3 little-endian float32.

inline constexpr std::array<char, 4> kPointCacheMagic = {'R', 'P', 'C', 'D'};
inline constexpr std::uint32_t kPointCacheVersion = 1;

inline void write_point_cache(std::ostream& os, const PointCloud& pc) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  os.write(kPointCacheMagic.data(), 4);
  const std::uint32_t v = kPointCacheVersion;
  const std::uint64_t n = pc.size();
  os.write(reinterpret_cast<const char*>(&v), 4);
  os.write(reinterpret_cast<const char*>(&n), 8);
  for (const auto& p : pc.points)
    for (double c : p) {
      const float f = static_cast<float>(c);
      os.write(reinterpret_cast<const char*>(&f), 4);
    }
  if (!os) throw Error("failed writing point cache");
}

inline PointCloud read_point_cache(std::istream& is) {
  std::array<char, 4> magic{};
  std::uint32_t v = 0;
  std::uint64_t n = 0;
  if (!is.read(magic.data(), 4) || magic != kPointCacheMagic) throw Error("not a point cache (bad magic)");
  if (!is.read(reinterpret_cast<char*>(&v), 4) || v != kPointCacheVersion)
    throw Error("unsupported point cache version");
  if (!is.read(reinterpret_cast<char*>(&n), 8) || n > (1u << 24)) throw Error("point cache header is malformed");
  PointCloud pc;
  pc.points.resize(n);
  for (auto& p : pc.points)
    for (double& c : p) {
      float f;
      if (!is.read(reinterpret_cast<char*>(&f), 4)) throw Error("point cache truncated");
      c = f;
    }
  return pc;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind { BaseToNew, FewShot, CrossDomain, Corruption };

inline std::string split_kind_name(SplitKind k) {
  switch (k) {
    case SplitKind::BaseToNew: return "base_to_new";
    case SplitKind::FewShot: return "few_shot";
    case SplitKind::CrossDomain: return "cross_domain";
    case SplitKind::Corruption: return "corruption";
  }
  return "?";
}

/// A named evaluation set with its own label space.
struct EvalSet {
  std::string name;
  std::vector<std::string> classes;       // label space (names used for text features)
  std::vector<ManifestRecord> records;
  std::vector<int> labels;                // index into `classes`, one per record
};

struct BenchmarkSplit {
  SplitKind kind = SplitKind::BaseToNew;
  std::vector<std::string> train_classes;
  std::vector<ManifestRecord> train, val;
  std::vector<EvalSet> evals;
  std::size_t shots = 0;

  int train_label(const std::string& cls) const {
    auto it = std::find(train_classes.begin(), train_classes.end(), cls);
    if (it == train_classes.end()) throw Error("class '" + cls + "' is not a training class");
    return static_cast<int>(it - train_classes.begin());
  }
};

namespace detail {

inline EvalSet make_eval(std::string name, std::vector<std::string> classes, const std::vector<ManifestRecord>& recs,
                         const std::map<std::string, std::string>* rename = nullptr) {
  EvalSet e;
  e.name = std::move(name);
  e.classes = std::move(classes);
  for (const auto& r : recs) {
    std::string c = r.class_name;
    if (rename != nullptr) {
      auto it = rename->find(c);
      if (it != rename->end()) c = it->second;
    }
    auto it = std::find(e.classes.begin(), e.classes.end(), c);
    if (it == e.classes.end()) continue;
    e.records.push_back(r);
    e.labels.push_back(static_cast<int>(it - e.classes.begin()));
  }
  return e;
}

/// Seeded 80/20 split of each class's training records.
inline void split_train_val(const std::vector<ManifestRecord>& train, const std::vector<std::string>& classes,
                            std::uint64_t seed, std::vector<ManifestRecord>& out_train,
                            std::vector<ManifestRecord>& out_val) {
  for (const auto& c : classes) {
    std::vector<ManifestRecord> recs;
    for (const auto& r : train)
      if (r.class_name == c) recs.push_back(r);
    Rng rng = make_rng(derive_seed(seed, hash_str(c), 0x76616cULL));
    std::shuffle(recs.begin(), recs.end(), rng);
    const std::size_t n_val = recs.size() / 5;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      ManifestRecord r = recs[i];
      if (i < n_val) {
        r.split = "val";
        out_val.push_back(std::move(r));
      } else {
        out_train.push_back(std::move(r));
      }
    }
  }
}

}  // namespace detail

/// Number of base classes for C classes: ceil(C / 2).
inline std::size_t base_class_count(std::size_t c) { return (c + 1) / 2; }

/// Base-to-new split: the first ceil(C/2) classes (in the manifest's
/// canonical order) are base; new classes only ever appear in test sets.
inline BenchmarkSplit split_base_new(const Manifest& m, std::uint64_t seed) {
  const std::size_t c = m.classes.size();
  if (c < 2) throw Error("base-to-new split needs at least 2 classes, got " + std::to_string(c));
  const std::size_t nb = base_class_count(c);
  BenchmarkSplit s;
  s.kind = SplitKind::BaseToNew;
  s.train_classes.assign(m.classes.begin(), m.classes.begin() + static_cast<std::ptrdiff_t>(nb));
  std::vector<std::string> novel(m.classes.begin() + static_cast<std::ptrdiff_t>(nb), m.classes.end());
  std::vector<ManifestRecord> base_train;
  for (const auto& r : m.records)
    if (r.split == "train" && std::find(s.train_classes.begin(), s.train_classes.end(), r.class_name) !=
                                  s.train_classes.end())
      base_train.push_back(r);
  detail::split_train_val(base_train, s.train_classes, seed, s.train, s.val);
  const auto test = m.with_split("test");
  s.evals.push_back(detail::make_eval("base", s.train_classes, test));
  s.evals.push_back(detail::make_eval("new", novel, test));
  return s;
}

/// Base/new class counts for C classes, without a manifest.
inline std::pair<std::size_t, std::size_t> base_new_counts(std::size_t c) {
  if (c < 2) throw Error("base-to-new split needs at least 2 classes, got " + std::to_string(c));
  return {base_class_count(c), c - base_class_count(c)};
}

inline bool valid_shot_count(std::size_t k) { return k == 1 || k == 2 || k == 4 || k == 8 || k == 16; }

/// Keeps exactly k training samples per class (seeded, without replacement).
/// Evaluation sets are left untouched.
inline BenchmarkSplit sample_few_shot(const BenchmarkSplit& split, std::size_t k, std::uint64_t seed) {
  if (!valid_shot_count(k)) throw Error("shot count must be one of 1, 2, 4, 8, 16; got " + std::to_string(k));
  BenchmarkSplit out = split;
  out.train.clear();
  out.shots = k;
  for (const auto& c : split.train_classes) {
    std::vector<ManifestRecord> recs;
    for (const auto& r : split.train)
      if (r.class_name == c) recs.push_back(r);
    if (recs.size() < k)
      throw Error("class '" + c + "' has " + std::to_string(recs.size()) + " training samples, fewer than " +
                  std::to_string(k) + " shots");
    Rng rng = make_rng(derive_seed(seed, hash_str(c), k));
    std::shuffle(recs.begin(), recs.end(), rng);
    out.train.insert(out.train.end(), recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

/// All classes trained and tested in one domain (few-shot / corruption).
inline BenchmarkSplit split_all_classes(const Manifest& m, SplitKind kind, std::uint64_t seed) {
  BenchmarkSplit s;
  s.kind = kind;
  s.train_classes = m.classes;
  detail::split_train_val(m.with_split("train"), m.classes, seed, s.train, s.val);
  s.evals.push_back(detail::make_eval(m.name, m.classes, m.with_split("test")));
  return s;
}

/// Train on the source's training split; evaluate on each target's test
/// split over the target's own class names. `label_map` renames target
/// classes to source names; every key must be a target class and every
/// value a source class.
inline BenchmarkSplit cross_domain_config(const Manifest& source, const std::vector<Manifest>& targets,
                                          const std::optional<std::map<std::string, std::string>>& label_map,
                                          std::uint64_t seed) {
  if (targets.empty()) throw Error("cross-domain protocol needs at least one target");
  BenchmarkSplit s = split_all_classes(source, SplitKind::CrossDomain, seed);
  s.evals.clear();
  if (label_map) {
    for (const auto& [from, to] : *label_map) {
      bool known = false;
      for (const auto& t : targets)
        known = known || std::find(t.classes.begin(), t.classes.end(), from) != t.classes.end();
      if (!known) throw Error("label_map references unknown target class '" + from + "'");
      if (std::find(source.classes.begin(), source.classes.end(), to) == source.classes.end())
        throw Error("label_map references unknown source class '" + to + "'");
    }
  }
  for (const auto& t : targets) {
    std::vector<std::string> names;
    for (const auto& c : t.classes) {
      std::string n = c;
      if (label_map) {
        auto it = label_map->find(c);
        if (it != label_map->end()) n = it->second;
      }
      names.push_back(n);
    }
    s.evals.push_back(detail::make_eval(t.name, names, t.with_split("test"), label_map ? &*label_map : nullptr));
  }
  return s;
}

}  // namespace rpt
