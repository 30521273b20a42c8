// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rpt/core/graph.hpp"
#include "rpt/core/optim.hpp"
#include "rpt/data/dataset.hpp"
#include "rpt/data/descriptions.hpp"
#include "rpt/harness/config.hpp"
#include "rpt/model/checkpoint.hpp"
#include "rpt/model/encoders.hpp"

namespace rpt {

struct SurrogateOptions {
  EncoderConfig encoder;
  std::uint64_t seed = 7;
  std::vector<std::string> classes = shape_families();
  std::size_t per_class = 256;
  std::size_t n_points = 1024;
  std::size_t epochs = 6;
  std::size_t batch = 32;
  std::size_t descriptions = 16;
  double lr = 1e-3;
  double tau = 0.07;  // pre-training temperature only
  double clip = 1.0;
};

inline SurrogateOptions surrogate_options(const RunConfig& c) {
  SurrogateOptions o;
  o.encoder = c.encoder;
  o.seed = c.encoder_seed;
  o.per_class = c.surrogate_per_class;
  o.n_points = c.n_points;
  o.epochs = c.surrogate_epochs;
  o.batch = c.batch;
  o.lr = c.surrogate_lr;
  return o;
}

/// Stable identifier of the options, used as the cache directory name.
inline std::string surrogate_key(const SurrogateOptions& o) {
  std::string s = "v1";
  const auto& e = o.encoder;
  for (auto v : {e.blocks, e.width, e.feature_dim, e.heads, e.mlp_ratio, e.patches, e.neighbors, e.max_text_len,
                 o.per_class, o.n_points, o.epochs, o.batch, o.descriptions})
    s += "|" + std::to_string(v);
  s += "|" + detail::fmt_double(e.init_std) + "|" + detail::fmt_double(o.lr) + "|" + detail::fmt_double(o.tau) + "|" + detail::fmt_double(o.clip) +
       "|" + std::to_string(o.seed);
  for (const auto& c : o.classes) s += "|" + c;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_str(s)));
  return buf;
}

struct SurrogateLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;  // train accuracy in percent
  std::size_t steps = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Supervised pre-training of a randomly initialised dual encoder on the
/// reserved pre-train split: point features against the text feature of one
/// randomly drawn description per class, cross-entropy at temperature tau.
inline DualEncoder pretrain_surrogate(const SurrogateOptions& o, SurrogateLog* log = nullptr,
                                      const ProgressFn& progress = {}) {
  o.encoder.validate();
  if (o.classes.size() < 2) throw Error("surrogate pre-training needs at least 2 classes");
  if (o.batch == 0 || o.epochs == 0 || o.per_class == 0) throw Error("surrogate needs batch, epochs and samples");
  DualEncoder enc = init_dual_encoder(o.encoder, Vocabulary::for_classes(shape_families()), o.seed);
  enc.set_trainable(true);

  const Manifest m = make_pretrain_manifest(o.classes, o.per_class, o.n_points);
  std::vector<PatchGeometry> geos;
  std::vector<int> labels;
  geos.reserve(m.records.size());
  for (const auto& r : m.records) {
    geos.push_back(group_patches(materialize(r), o.encoder.patches, o.encoder.neighbors));
    labels.push_back(static_cast<int>(std::find(o.classes.begin(), o.classes.end(), r.class_name) - o.classes.begin()));
  }
  const DescriptionBank bank = build_description_bank(o.classes, o.descriptions, derive_seed(o.seed, 0x74787431ULL));

  const std::size_t n = geos.size(), c = o.classes.size();
  const std::size_t steps_per_epoch = (n + o.batch - 1) / o.batch;
  const std::size_t total = steps_per_epoch * o.epochs;
  Adam opt(CosineSchedule{o.lr, total, std::min<std::size_t>(total / 10, 100)});
  Rng rng = make_rng(derive_seed(o.seed, 0x73757272ULL));
  auto params = enc.named_params();

  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t b0 = s * o.batch, b1 = std::min(n, b0 + o.batch), bs = b1 - b0;
      std::vector<PatchGeometry> batch;
      std::vector<double> onehot(bs * c, 0.0);
      for (std::size_t i = 0; i < bs; ++i) {
        batch.push_back(geos[order[b0 + i]]);
        onehot[i * c + static_cast<std::size_t>(labels[order[b0 + i]])] = 1.0;
      }
      std::vector<TokenSequence> texts;
      for (std::size_t k = 0; k < c; ++k) {
        const auto& descs = bank.descriptions[k];
        const auto pick = std::uniform_int_distribution<std::size_t>(0, descs.size() - 1)(rng);
        texts.push_back(enc.vocab.encode(descs[pick], o.classes[k]));
      }

      Graph g;
      Var patches = embed_patch_tokens(g, enc.point, std::span<const PatchGeometry>(batch));
      Var cls = add(bind(g, enc.point.cls_token), bind(g, enc.point.cls_pos));
      const std::size_t u = o.encoder.patches;
      std::vector<Var> rows;
      for (std::size_t i = 0; i < bs; ++i) {
        rows.push_back(cls);
        rows.push_back(slice_rows(patches, i * u, (i + 1) * u));
      }
      Var tokens = concat(rows, 0);
      PromptSet* none = nullptr;
      Var hp = encode_point_tokens(g, enc.point, tokens, bs, none, EncodeOptions{}, o.encoder.heads);
      Var ht = encode_text(g, enc, std::span<const TokenSequence>(texts), none);
      Var logp = log_softmax(class_logits(hp, ht, o.tau));
      Var loss = scale(sum(mul(logp, g.constant({bs, c}, std::move(onehot)))), -1.0 / static_cast<double>(bs));
      const double lv = loss.item();
      if (!std::isfinite(lv)) throw Error("surrogate pre-training diverged at epoch " + std::to_string(epoch + 1));
      const Tensor lp = logp.to_tensor();
      for (std::size_t i = 0; i < bs; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k)
          if (lp.at(i, k) > lp.at(i, best)) best = k;
        correct += static_cast<int>(best) == labels[order[b0 + i]] ? 1 : 0;
      }
      backward(loss);
      clip_grad_norm(params, o.clip);
      opt.step(params);
      loss_sum += lv * static_cast<double>(bs);
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    const double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    if (log != nullptr) {
      log->epoch_loss.push_back(mean_loss);
      log->epoch_accuracy.push_back(acc);
      log->steps += steps_per_epoch;
    }
    if (progress) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "surrogate epoch %zu/%zu  loss %.4f  train acc %.1f%%", epoch + 1, o.epochs,
                    mean_loss, acc);
      progress(buf);
    }
  }
  enc.set_trainable(false);
  return enc;
}

/// Loads the surrogate from `<cache_dir>/surrogate-<key>` or builds and saves it.
inline DualEncoder load_or_pretrain_surrogate(const SurrogateOptions& o, const std::string& cache_dir,
                                              const ProgressFn& progress = {}) {
  const std::filesystem::path dir = std::filesystem::path(cache_dir) / ("surrogate-" + surrogate_key(o));
  if (std::filesystem::exists(dir / "point.ckpt") && std::filesystem::exists(dir / "text.ckpt")) {
    if (progress) progress("loading frozen surrogate from " + dir.string());
    return load_encoder(dir);
  }
  if (progress) progress("pre-training frozen surrogate into " + dir.string());
  DualEncoder enc = pretrain_surrogate(o, nullptr, progress);
  save_encoder(dir, enc);
  return enc;
}

}  // namespace rpt
