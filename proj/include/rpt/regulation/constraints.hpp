// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rpt/core/graph.hpp"

namespace rpt {

/// Weights of the regulation terms in the overall objective.
struct RegulationWeights {
  double alpha = 10.0;  // point-feature agreement
  double beta = 25.0;   // text-feature agreement
  double gamma = 1.0;   // prediction agreement (KL)

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0))
      throw Error("regulation weights must be non-negative");
  }

  friend bool operator==(const RegulationWeights&, const RegulationWeights&) = default;
};

inline constexpr double kLogFloor = 1e-12;

/// Mean over rows of KL(p || q) where `reference` holds p (no gradient) and
/// `log_q` holds log q. Zeros in p contribute nothing; p is floored inside the
/// log only.
inline Var kl_divergence(const Tensor& reference, Var log_q) {
  if (reference.size() != log_q.size() || reference.cols() != log_q.cols())
    throw ShapeError("kl_divergence: shape mismatch between " + shape_str(reference.shape()) + " and " +
                     shape_str(log_q.shape()));
  Graph& g = log_q.graph();
  std::vector<double> p_log_p(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double p = reference[i];
    if (p < 0.0) throw Error("reference distribution has a negative entry");
    p_log_p[i] = p > 0.0 ? p * std::log(std::max(p, kLogFloor)) : 0.0;
  }
  const Shape shape = log_q.shape();
  Var p = g.constant(shape, reference.data());
  Var neg_cross = sum(mul(p, log_q));
  Var entropy_term = sum(g.constant(shape, std::move(p_log_p)));
  return scale(sub(entropy_term, neg_cross), 1.0 / static_cast<double>(log_q.rows()));
}

/// Sum over feature dims of |tilde - frozen|, averaged over rows. The frozen
/// side enters as a view and takes no gradient.
inline Var l1_agreement(Var tilde, const Tensor& frozen) {
  if (tilde.size() != frozen.size() || tilde.cols() != frozen.cols())
    throw ShapeError("l1_agreement: features " + shape_str(tilde.shape()) + " vs frozen " + shape_str(frozen.shape()));
  Graph& g = tilde.graph();
  return scale(sum(abs(sub(tilde, g.view(frozen)))), 1.0 / static_cast<double>(tilde.rows()));
}

struct MacTerms {
  Var point;         // L_p
  Var text;          // L_t
  Var distribution;  // L_D
  std::size_t clamp_events = 0;
};

/// Mutual agreement between the promptable and the frozen model.
///
/// L_p and L_t are L1 distances between promptable and frozen features
/// (summed over feature dims, averaged over rows); L_D is KL(frozen || promptable)
/// averaged over samples. Frozen quantities come in as plain tensors and never
/// receive gradient.
inline MacTerms mac_loss(Var hp_tilde, const Tensor& hp_frozen, Var ht_tilde, const Tensor& ht_frozen,
                         Var log_d_tilde, const Tensor& d_frozen) {
  MacTerms t;
  t.point = l1_agreement(hp_tilde, hp_frozen);
  t.text = l1_agreement(ht_tilde, ht_frozen);
  t.distribution = kl_divergence(d_frozen, log_d_tilde);
  return t;
}

/// Same as mac_loss() but takes the promptable distribution as probabilities;
/// entries below 1e-12 are clamped inside the log and counted.
inline MacTerms mac_loss_probs(Var hp_tilde, const Tensor& hp_frozen, Var ht_tilde, const Tensor& ht_frozen,
                               Var d_tilde, const Tensor& d_frozen) {
  Graph& g = d_tilde.graph();
  const std::size_t before = g.clamp_events();
  Var log_q = log(d_tilde, kLogFloor);
  MacTerms t = mac_loss(hp_tilde, hp_frozen, ht_tilde, ht_frozen, log_q, d_frozen);
  t.clamp_events = g.clamp_events() - before;
  return t;
}

/// Text-diversity pooling: the mean of M unit description features,
/// re-normalized to unit length. A mean that cancels to (near) zero is rejected.
inline std::vector<double> tdc_pool(const Tensor& description_features) {
  const std::size_t m = description_features.rows(), d = description_features.cols();
  if (description_features.size() == 0 || m == 0) throw Error("tdc_pool needs at least one description");
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += description_features.at(r, c);
  double n2 = 0.0;
  for (auto& v : mean) {
    v /= static_cast<double>(m);
    n2 += v * v;
  }
  const double n = std::sqrt(n2);
  if (n < 1e-9) throw Error("tdc_pool: description features cancel to a zero mean (degenerate pool)");
  for (auto& v : mean) v /= n;
  return mean;
}

/// L = CE + alpha*L_p + beta*L_t + gamma*L_D.
inline double total_loss(double ce, double l_p, double l_t, double l_d, const RegulationWeights& w) {
  return ce + w.alpha * l_p + w.beta * l_t + w.gamma * l_d;
}

/// Graph form; terms whose weight is zero (or that are absent) are skipped
/// entirely, so disabling a constraint and zeroing its weight coincide.
inline Var total_loss(Var ce, const MacTerms* mac, const RegulationWeights& w) {
  Var out = ce;
  if (mac == nullptr) return out;
  if (w.alpha != 0.0 && mac->point.valid()) out = add(out, scale(mac->point, w.alpha));
  if (w.beta != 0.0 && mac->text.valid()) out = add(out, scale(mac->text, w.beta));
  if (w.gamma != 0.0 && mac->distribution.valid()) out = add(out, scale(mac->distribution, w.gamma));
  return out;
}

}  // namespace rpt
