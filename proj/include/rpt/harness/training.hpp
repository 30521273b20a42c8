// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpt/core/graph.hpp"
#include "rpt/core/optim.hpp"
#include "rpt/data/corruption.hpp"
#include "rpt/data/dataset.hpp"
#include "rpt/data/descriptions.hpp"
#include "rpt/harness/config.hpp"
#include "rpt/harness/metrics.hpp"
#include "rpt/model/encoders.hpp"
#include "rpt/prompts/prompt_set.hpp"
#include "rpt/regulation/constraints.hpp"
#include "rpt/regulation/ensemble.hpp"

namespace rpt {

using ProgressFn = std::function<void(const std::string&)>;

inline constexpr std::size_t kEvalBatch = 32;

/// Patch sequences and frozen point features per (record, corruption),
/// computed on first use against one frozen encoder.
class SampleStore {
 public:
  struct Entry {
    PatchSequence sequence;
    std::vector<double> frozen_feature;
  };

  explicit SampleStore(const DualEncoder& frozen) : enc_(&frozen) {}

  const DualEncoder& encoder() const { return *enc_; }

  const Entry& get(const ManifestRecord& r, const std::optional<CorruptionSpec>& c = std::nullopt) {
    return *ensure({&r, 1}, c)[0];
  }

  /// Entries for `records`, materializing and encoding the missing ones in
  /// batches. Pointers stay valid for the store's lifetime.
  std::vector<const Entry*> ensure(std::span<const ManifestRecord> records,
                                   const std::optional<CorruptionSpec>& c = std::nullopt) {
    std::vector<std::string> keys;
    std::vector<std::size_t> missing;
    keys.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      keys.push_back(key(records[i], c));
      if (entries_.find(keys.back()) == entries_.end() &&
          std::find_if(missing.begin(), missing.end(), [&](std::size_t j) { return keys[j] == keys.back(); }) ==
              missing.end())
        missing.push_back(i);
    }
    for (std::size_t b0 = 0; b0 < missing.size(); b0 += kEvalBatch) {
      const std::size_t b1 = std::min(missing.size(), b0 + kEvalBatch);
      std::vector<PatchSequence> seqs;
      for (std::size_t j = b0; j < b1; ++j) {
        const ManifestRecord& r = records[missing[j]];
        PointCloud pc = materialize(r);
        if (c) {
          CorruptionSpec spec = *c;
          spec.seed = derive_seed(r.seed, spec.seed);
          pc = corrupt(pc, spec);
        }
        seqs.push_back(embed_point_patches(pc, *enc_));
      }
      const Tensor f = point_features(*enc_, seqs);
      encoded_ += seqs.size();
      for (std::size_t j = b0; j < b1; ++j) {
        Entry e;
        e.sequence = std::move(seqs[j - b0]);
        const std::size_t d = f.cols();
        e.frozen_feature.assign(f.data().begin() + static_cast<std::ptrdiff_t>((j - b0) * d),
                                f.data().begin() + static_cast<std::ptrdiff_t>((j - b0 + 1) * d));
        entries_.emplace(keys[missing[j]], std::move(e));
      }
    }
    std::vector<const Entry*> out;
    out.reserve(records.size());
    for (const auto& k : keys) out.push_back(&entries_.at(k));
    return out;
  }

  /// Clouds materialized and encoded so far.
  std::size_t encoded() const { return encoded_; }

 private:
  static std::string key(const ManifestRecord& r, const std::optional<CorruptionSpec>& c) {
    std::string k = r.family + "#" + std::to_string(r.seed) + "#" + std::to_string(r.n_points);
    if (c) k += "#" + corruption_name(c->kind) + "@" + std::to_string(c->severity) + "/" + std::to_string(c->seed);
    return k;
  }

  const DualEncoder* enc_;
  std::map<std::string, Entry> entries_;
  std::size_t encoded_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  std::string name;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

inline std::vector<TokenSequence> canonical_tokens(const DualEncoder& enc, const std::vector<std::string>& classes) {
  std::vector<TokenSequence> out;
  for (const auto& c : classes) out.push_back(enc.vocab.encode(render_description(std::string(kCanonicalTemplate), c), c));
  return out;
}

/// Top-1 accuracy over `set`. A null `prompts` is the zero-shot frozen model.
inline EvalResult evaluate(SampleStore& store, const EvalSet& set, const PromptSet* prompts,
                           const std::optional<CorruptionSpec>& corruption = std::nullopt) {
  if (set.records.empty()) throw Error("evaluation set '" + set.name + "' is empty");
  const DualEncoder& enc = store.encoder();
  const Tensor classes = class_text_features(enc, set.classes, prompts);
  const auto entries = store.ensure(set.records, corruption);
  EvalResult res;
  res.name = set.name;
  res.predictions.reserve(entries.size());
  const std::size_t c = classes.rows(), d = classes.cols();
  auto predict = [&](const double* f) {
    std::size_t best = 0;
    double best_s = -1e300;
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += f[i] * classes.at(j, i);
      if (s > best_s) best_s = s, best = j;
    }
    return static_cast<int>(best);
  };
  if (prompts == nullptr) {
    for (const auto* e : entries) res.predictions.push_back(predict(e->frozen_feature.data()));
  } else {
    for (std::size_t b0 = 0; b0 < entries.size(); b0 += kEvalBatch) {
      const std::size_t b1 = std::min(entries.size(), b0 + kEvalBatch);
      std::vector<PatchSequence> seqs;
      for (std::size_t i = b0; i < b1; ++i) seqs.push_back(entries[i]->sequence);
      const Tensor f = point_features(enc, seqs, prompts);
      for (std::size_t i = 0; i < b1 - b0; ++i) res.predictions.push_back(predict(f.data().data() + i * d));
    }
  }
  res.accuracy = accuracy_percent(res.predictions, set.labels);
  return res;
}

// ---------------------------------------------------------------------------
// Training

struct TermValues {
  double ce = 0.0, l_p = 0.0, l_t = 0.0, l_d = 0.0, total = 0.0;

  friend bool operator==(const TermValues&, const TermValues&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;        // learning rate at the epoch's first step
  TermValues mean;        // averaged over the epoch's steps
  double val_accuracy = 0.0;
  double seconds = 0.0;   // wall-clock; 0 unless recorded

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  PromptSet eval_prompts;  // MEC ensemble, or last epoch when MEC is off
  PromptSet last_prompts;
  std::vector<EpochLog> epochs;
  TermValues final_train;  // evaluation parameters on the full train set
  double final_train_accuracy = 0.0;
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
};

/// Frozen text anchors of the training classes: the TDC-pooled description
/// bank, or the canonical template features when TDC is off.
inline Tensor frozen_text_reference(const DualEncoder& enc, const std::vector<std::string>& classes, bool tdc,
                                    std::size_t n_t, std::uint64_t bank_seed) {
  if (!tdc) return class_text_features(enc, classes);
  const DescriptionBank bank = build_description_bank(classes, n_t, bank_seed);
  const std::size_t d = enc.config.feature_dim;
  Tensor out = Tensor::zeros({classes.size(), d});
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<TokenSequence> seqs;
    for (const auto& s : bank.descriptions[k]) seqs.push_back(enc.vocab.encode(s, classes[k]));
    const auto pooled = tdc_pool(text_features(enc, seqs));
    std::copy(pooled.begin(), pooled.end(), out.data().begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  return out;
}

/// softmax(h_P h_T^T / tau) row-wise.
inline Tensor class_distribution(const Tensor& hp, const Tensor& ht, double tau) {
  const std::size_t b = hp.rows(), c = ht.rows(), d = hp.cols();
  Tensor out = Tensor::zeros({b, c});
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> row(hp.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                            hp.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    const auto dist = classify(row, ht, tau);
    std::copy(dist.probs.begin(), dist.probs.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

namespace detail {

struct StepGraph {
  Var loss;
  Var ce;
  MacTerms mac;
  Var logits;
};

/// Builds the objective for one batch. Terms with zero weight are not built.
inline StepGraph build_objective(Graph& g, const DualEncoder& frozen, PromptSet& prompts,
                                 std::span<const PatchSequence> seqs, std::span<const int> labels,
                                 std::span<const TokenSequence> class_tokens, const Tensor& hp_frozen,
                                 const Tensor& ht_ref, const RegulationWeights& w, double tau) {
  const std::size_t b = seqs.size(), c = class_tokens.size();
  Var hp = encode_points(g, frozen, seqs, &prompts);
  Var ht = encode_text(g, frozen, class_tokens, &prompts);
  StepGraph s;
  s.logits = class_logits(hp, ht, tau);
  Var logp = log_softmax(s.logits);
  std::vector<double> onehot(b * c, 0.0);
  for (std::size_t i = 0; i < b; ++i) onehot[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
  s.ce = scale(sum(mul(logp, g.constant({b, c}, std::move(onehot)))), -1.0 / static_cast<double>(b));
  if (w.alpha != 0.0) s.mac.point = l1_agreement(hp, hp_frozen);
  if (w.beta != 0.0) s.mac.text = l1_agreement(ht, ht_ref);
  if (w.gamma != 0.0) s.mac.distribution = kl_divergence(class_distribution(hp_frozen, ht_ref, tau), logp);
  s.loss = total_loss(s.ce, &s.mac, w);
  return s;
}

inline TermValues term_values(const StepGraph& s, const RegulationWeights& w) {
  TermValues t;
  t.ce = s.ce.item();
  if (s.mac.point.valid()) t.l_p = s.mac.point.item();
  if (s.mac.text.valid()) t.l_t = s.mac.text.item();
  if (s.mac.distribution.valid()) t.l_d = s.mac.distribution.item();
  t.total = total_loss(t.ce, t.l_p, t.l_t, t.l_d, w);
  return t;
}

inline void check_finite(const TermValues& t, std::size_t step) {
  const std::pair<const char*, double> terms[] = {
      {"cross-entropy", t.ce}, {"L_p", t.l_p}, {"L_t", t.l_t}, {"L_D", t.l_d}, {"total", t.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw Error("non-finite " + std::string(name) + " loss at step " + std::to_string(step));
}

inline Tensor gather_features(const std::vector<const SampleStore::Entry*>& entries) {
  const std::size_t d = entries.front()->frozen_feature.size();
  std::vector<double> buf;
  buf.reserve(entries.size() * d);
  for (const auto* e : entries) buf.insert(buf.end(), e->frozen_feature.begin(), e->frozen_feature.end());
  return Tensor({entries.size(), d}, std::move(buf));
}

}  // namespace detail

/// Everything run_training needs beyond the frozen encoder and data.
struct TrainSettings {
  std::size_t depth = 9, length = 2, epochs = 20, batch = 32, n_t = 10;
  RegulationWeights weights;
  bool tdc = true, mec = true;
  double mu = 15.0, sigma = 1.0, tau = 0.01, lr = 0.0025, momentum = 0.0;
  double clip = 0.0;  // global gradient-norm bound, 0 = off
  bool record_wallclock = false;

  static TrainSettings from(const RunConfig& c) {
    TrainSettings s;
    s.depth = c.resolved_depth();
    s.length = c.resolved_length();
    s.epochs = c.resolved_epochs();
    s.batch = c.batch;
    s.n_t = c.n_t;
    s.weights = c.effective_weights();
    s.tdc = c.tdc;
    s.mec = c.mec;
    std::tie(s.mu, s.sigma) = c.resolved_ensemble();
    s.tau = c.tau;
    s.lr = c.lr;
    s.momentum = c.momentum;
    s.clip = c.clip;
    s.record_wallclock = c.record_wallclock;
    return s;
  }
};

/// Regulated prompt tuning on `split.train` against the frozen encoder.
/// Only the PromptSet is optimized; the frozen encoder is never written.
inline TrainResult run_training(SampleStore& store, const BenchmarkSplit& split, const TrainSettings& st,
                                std::uint64_t seed, const ProgressFn& progress = {}) {
  const DualEncoder& frozen = store.encoder();
  if (split.train.empty()) throw Error("training split is empty");
  if (st.epochs == 0 || st.batch == 0) throw Error("training needs at least one epoch and a positive batch");
  st.weights.validate();
  const std::size_t n = split.train.size();
  std::vector<int> labels;
  labels.reserve(n);
  for (const auto& r : split.train) labels.push_back(split.train_label(r.class_name));

  const auto entries = store.ensure(split.train);
  const auto class_tokens = canonical_tokens(frozen, split.train_classes);
  const bool need_ref = st.weights.beta != 0.0 || st.weights.gamma != 0.0;
  const Tensor ht_ref = need_ref ? frozen_text_reference(frozen, split.train_classes, st.tdc, st.n_t,
                                                         derive_seed(seed, 0x62616e6bULL))
                                 : Tensor::zeros({split.train_classes.size(), frozen.config.feature_dim});

  EvalSet val;
  val.name = "val";
  val.classes = split.train_classes;
  val.records = split.val;
  for (const auto& r : split.val) val.labels.push_back(split.train_label(r.class_name));

  TrainResult res;
  res.last_prompts = init_prompt_set(st.depth, st.length, st.length, frozen.config.width,
                                     derive_seed(seed, 0x696e6974ULL), frozen.config.blocks);
  PromptSet& prompts = res.last_prompts;
  const std::size_t batch = std::min(st.batch, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  SgdCosine opt(CosineSchedule{st.lr, steps_per_epoch * st.epochs}, st.momentum);
  std::optional<EnsembleAccumulator> ens;
  if (st.mec) ens.emplace(prompts.parameter_count(), st.epochs, st.mu, st.sigma);
  Rng rng = make_rng(derive_seed(seed, 0x6f72646572ULL));
  const auto params = prompts.named_params();

  for (std::size_t epoch = 1; epoch <= st.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = opt.current_lr();
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t b0 = s * batch, b1 = std::min(n, b0 + batch);
      std::vector<PatchSequence> seqs;
      std::vector<int> bl;
      std::vector<const SampleStore::Entry*> be;
      for (std::size_t i = b0; i < b1; ++i) {
        seqs.push_back(entries[order[i]]->sequence);
        bl.push_back(labels[order[i]]);
        be.push_back(entries[order[i]]);
      }
      Graph g;
      const auto sg = detail::build_objective(g, frozen, prompts, seqs, bl, class_tokens, detail::gather_features(be),
                                              ht_ref, st.weights, st.tau);
      const TermValues tv = detail::term_values(sg, st.weights);
      detail::check_finite(tv, res.steps);
      res.clamp_events += sg.mac.clamp_events;
      backward(sg.loss);
      if (st.clip > 0.0) clip_grad_norm(params, st.clip);
      opt.step(params);
      ++res.steps;
      log.mean.ce += tv.ce;
      log.mean.l_p += tv.l_p;
      log.mean.l_t += tv.l_t;
      log.mean.l_d += tv.l_d;
      log.mean.total += tv.total;
    }
    const double k = static_cast<double>(steps_per_epoch);
    log.mean.ce /= k;
    log.mean.l_p /= k;
    log.mean.l_t /= k;
    log.mean.l_d /= k;
    log.mean.total /= k;
    if (ens) ens->accumulate(prompts.flatten(), epoch);
    if (!val.records.empty()) log.val_accuracy = evaluate(store, val, &prompts).accuracy;
    if (st.record_wallclock)
      log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) {
      char buf[192];
      std::snprintf(buf, sizeof buf, "  epoch %zu/%zu  ce %.4f  L_p %.4f  L_t %.4f  L_D %.4f  val %.1f%%", epoch,
                    st.epochs, log.mean.ce, log.mean.l_p, log.mean.l_t, log.mean.l_d, log.val_accuracy);
      progress(buf);
    }
    res.epochs.push_back(log);
  }

  res.eval_prompts = prompts;
  if (ens) res.eval_prompts.load_flat(ens->finalize());
  for (auto& t : res.eval_prompts.point) t.set_requires_grad(false);
  for (auto& t : res.eval_prompts.text) t.set_requires_grad(false);

  // Objective terms of the evaluation parameters over the whole train set.
  // Every term is computed here, whatever its weight, for reporting.
  const RegulationWeights all{1.0, 1.0, 1.0};
  const Tensor ht_all = frozen_text_reference(frozen, split.train_classes, st.tdc, st.n_t,
                                              derive_seed(seed, 0x62616e6bULL));
  PromptSet eval_copy = res.eval_prompts;
  std::size_t correct = 0;
  for (std::size_t b0 = 0; b0 < n; b0 += kEvalBatch) {
    const std::size_t b1 = std::min(n, b0 + kEvalBatch);
    std::vector<PatchSequence> seqs;
    std::vector<int> bl;
    std::vector<const SampleStore::Entry*> be;
    for (std::size_t i = b0; i < b1; ++i) {
      seqs.push_back(entries[i]->sequence);
      bl.push_back(labels[i]);
      be.push_back(entries[i]);
    }
    Graph g;
    const auto sg = detail::build_objective(g, frozen, eval_copy, seqs, bl, class_tokens, detail::gather_features(be),
                                            ht_all, all, st.tau);
    const TermValues tv = detail::term_values(sg, all);
    const double wgt = static_cast<double>(b1 - b0);
    res.final_train.ce += tv.ce * wgt;
    res.final_train.l_p += tv.l_p * wgt;
    res.final_train.l_t += tv.l_t * wgt;
    res.final_train.l_d += tv.l_d * wgt;
    const Tensor logits = sg.logits.to_tensor();
    for (std::size_t i = 0; i < b1 - b0; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      correct += static_cast<int>(best) == bl[i] ? 1 : 0;
    }
  }
  const double nn = static_cast<double>(n);
  res.final_train.ce /= nn;
  res.final_train.l_p /= nn;
  res.final_train.l_t /= nn;
  res.final_train.l_d /= nn;
  res.final_train.total =
      total_loss(res.final_train.ce, res.final_train.l_p, res.final_train.l_t, res.final_train.l_d, st.weights);
  res.final_train_accuracy = 100.0 * static_cast<double>(correct) / nn;
  return res;
}

}  // namespace rpt
