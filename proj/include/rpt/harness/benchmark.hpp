// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "rpt/data/corruption.hpp"
#include "rpt/data/dataset.hpp"
#include "rpt/harness/config.hpp"
#include "rpt/harness/metrics.hpp"
#include "rpt/harness/report.hpp"
#include "rpt/harness/training.hpp"

namespace rpt {

/// "MAC+TDC+MEC", "MAC+MEC", ..., or "plain" when every constraint is off.
inline std::string constraint_label(bool mac, bool tdc, bool mec) {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += "+";
    s += name;
  };
  add(mac, "MAC");
  add(tdc, "TDC");
  add(mec, "MEC");
  return s.empty() ? "plain" : s;
}

/// The eight (MAC, TDC, MEC) combinations in ablation-table order.
inline std::vector<std::array<bool, 3>> ablation_grid() {
  return {{false, false, false}, {true, false, false}, {false, true, false}, {false, false, true},
          {true, true, false},   {true, false, true},  {false, true, true},  {true, true, true}};
}

inline Manifest benchmark_manifest(const RunConfig& c, const std::string& name, std::vector<std::string> classes,
                                   const std::string& style, std::uint64_t seed) {
  DatasetSpec spec;
  spec.name = name;
  spec.classes = std::move(classes);
  spec.style = style;
  spec.train_per_class = c.train_per_class;
  spec.test_per_class = c.test_per_class;
  spec.n_points = c.n_points;
  spec.seed = seed;
  return make_manifest(spec);
}

/// Manifests behind the protocol. Cross-dataset lists the source first,
/// then the targets.
inline std::vector<Manifest> protocol_manifests(const RunConfig& c) {
  if (c.protocol != Protocol::CrossDataset)
    return {benchmark_manifest(c, "synthetic", c.classes, "clean", c.data_seed)};
  const std::size_t total = c.classes.size();
  if (total < 4) throw Error("cross-dataset protocol needs at least 4 classes");
  const std::size_t n_src = total - total / 4;
  const std::vector<std::string> src(c.classes.begin(), c.classes.begin() + static_cast<std::ptrdiff_t>(n_src));
  std::vector<Manifest> out{benchmark_manifest(c, "source", src, "clean", c.data_seed)};
  for (const auto& style : {"partial", "noisy", "background", "squashed"})
    out.push_back(benchmark_manifest(c, style, c.classes, style, derive_seed(c.data_seed, hash_str(style))));
  const std::size_t n_novel = std::min<std::size_t>(10, total);
  const std::vector<std::string> novel(c.classes.end() - static_cast<std::ptrdiff_t>(n_novel), c.classes.end());
  out.push_back(benchmark_manifest(c, "novel-classes", novel, "clean", derive_seed(c.data_seed, hash_str("novel"))));
  return out;
}

/// The protocol's split before few-shot sampling.
inline BenchmarkSplit protocol_split(const RunConfig& c) {
  std::vector<Manifest> m = protocol_manifests(c);
  switch (c.protocol) {
    case Protocol::BaseToNew:
    case Protocol::Ablation: return split_base_new(m[0], c.data_seed);
    case Protocol::FewShot: return split_all_classes(m[0], SplitKind::FewShot, c.data_seed);
    case Protocol::Corruption: return split_all_classes(m[0], SplitKind::Corruption, c.data_seed);
    case Protocol::CrossDataset: {
      const Manifest source = m[0];
      m.erase(m.begin());
      return cross_domain_config(source, m, std::nullopt, c.data_seed);
    }
  }
  throw Error("unhandled protocol");
}

namespace detail {

/// Accuracies of one parameter set (null = zero-shot) under the protocol.
inline MetricList protocol_metrics(const RunConfig& c, SampleStore& store, const BenchmarkSplit& split,
                                   const PromptSet* prompts) {
  MetricList m;
  switch (c.protocol) {
    case Protocol::BaseToNew:
    case Protocol::Ablation: {
      const double b = evaluate(store, split.evals.at(0), prompts).accuracy;
      const double n = evaluate(store, split.evals.at(1), prompts).accuracy;
      m = {{"base", b}, {"new", n}, {"hm", harmonic_mean(b, n)}};
      break;
    }
    case Protocol::FewShot:
      m = {{"accuracy", evaluate(store, split.evals.at(0), prompts).accuracy}};
      break;
    case Protocol::Corruption: {
      m.emplace_back("clean", evaluate(store, split.evals.at(0), prompts).accuracy);
      double sum = 0.0;
      for (auto kind : kAllCorruptions) {
        const double a =
            evaluate(store, split.evals.at(0), prompts, CorruptionSpec{kind, c.severity, hash_str("corrupt")}).accuracy;
        m.emplace_back(corruption_name(kind), a);
        sum += a;
      }
      m.emplace_back("average", sum / static_cast<double>(kAllCorruptions.size()));
      break;
    }
    case Protocol::CrossDataset: {
      double sum = 0.0;
      for (const auto& e : split.evals) {
        const double a = evaluate(store, e, prompts).accuracy;
        m.emplace_back(e.name, a);
        sum += a;
      }
      m.emplace_back("average", sum / static_cast<double>(split.evals.size()));
      break;
    }
  }
  return m;
}

inline RunRecord trained_run(const RunConfig& c, SampleStore& store, const BenchmarkSplit& split,
                             const std::string& label, std::size_t shots, std::uint64_t seed,
                             const ProgressFn& progress) {
  if (progress) progress("run '" + label + "' seed " + std::to_string(seed));
  const BenchmarkSplit fs = sample_few_shot(split, shots, seed);
  const TrainResult tr = run_training(store, fs, TrainSettings::from(c), seed, progress);
  RunRecord r;
  r.label = label;
  r.metrics = protocol_metrics(c, store, split, &tr.eval_prompts);
  r.curve = tr.epochs;
  r.final_train = tr.final_train;
  r.final_train_accuracy = tr.final_train_accuracy;
  r.steps = tr.steps;
  return r;
}

}  // namespace detail

inline std::string ensemble_label(const RunConfig& c) {
  const auto [mu, sigma] = c.resolved_ensemble();
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s (mu=%g, sigma=%g)", ensemble_mode_name(c.ensemble).c_str(), mu, sigma);
  return buf;
}

/// Runs the configured protocol over every seed against a frozen encoder.
inline MetricsReport run_benchmark(const RunConfig& cfg, const DualEncoder& frozen, const ProgressFn& progress = {},
                                   double surrogate_seconds = 0.0) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SampleStore store(frozen);
  const BenchmarkSplit split = protocol_split(cfg);

  MetricsReport rep;
  rep.config = cfg;
  rep.ensemble_label = ensemble_label(cfg);

  RunRecord zero;
  zero.label = "zero-shot";
  zero.metrics = detail::protocol_metrics(cfg, store, split, nullptr);
  double zs = 0.0;
  std::size_t zs_n = 0;
  for (const auto& [k, v] : zero.metrics)
    if (k != "hm" && k != "average") zs += v, ++zs_n;
  rep.zero_shot_floor = zs / static_cast<double>(zs_n);

  for (auto seed : cfg.seeds) {
    SeedRecord sr;
    sr.seed = seed;
    sr.runs.push_back(zero);
    switch (cfg.protocol) {
      case Protocol::Ablation:
        for (const auto& [mac, tdc, mec] : ablation_grid()) {
          RunConfig c = cfg;
          c.mac = mac;
          c.tdc = tdc;
          c.mec = mec;
          sr.runs.push_back(
              detail::trained_run(c, store, split, constraint_label(mac, tdc, mec), cfg.shots, seed, progress));
        }
        break;
      case Protocol::FewShot:
        for (auto k : cfg.shots_list)
          sr.runs.push_back(detail::trained_run(cfg, store, split, std::to_string(k) + "-shot", k, seed, progress));
        break;
      default:
        sr.runs.push_back(detail::trained_run(cfg, store, split, constraint_label(cfg.mac, cfg.tdc, cfg.mec),
                                              cfg.shots, seed, progress));
        break;
    }
    for (const auto& r : sr.runs) {
      rep.timing.optimizer_steps += r.steps;
      rep.timing.epochs_run += r.curve.size();
    }
    rep.per_seed.push_back(std::move(sr));
  }
  rep.aggregate = aggregate_runs(rep.per_seed);
  rep.timing.encoded_clouds = store.encoded();
  rep.timing.wallclock_recorded = cfg.record_wallclock;
  if (cfg.record_wallclock) {
    rep.timing.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.timing.surrogate_seconds = surrogate_seconds;
  }
  return rep;
}

}  // namespace rpt
