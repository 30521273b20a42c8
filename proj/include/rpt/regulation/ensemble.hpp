// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rpt/core/tensor.hpp"

namespace rpt {

/// Raw Gaussian epoch weights w_i = exp(-(i-mu)^2 / (2 sigma^2)) / (sigma sqrt(2 pi)), i = 1..e.
inline std::vector<double> gaussian_weights_raw(std::size_t epochs, double mu, double sigma) {
  if (epochs == 0) throw Error("gaussian_weights needs at least one epoch");
  if (!(sigma > 0.0)) throw Error("gaussian_weights needs sigma > 0");
  std::vector<double> w(epochs);
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 1; i <= epochs; ++i) {
    const double z = (static_cast<double>(i) - mu) / sigma;
    w[i - 1] = norm * std::exp(-0.5 * z * z);
  }
  return w;
}

/// Gaussian epoch weights normalized to sum to 1. Computed relative to the
/// largest weight, so they stay positive even when every raw weight underflows.
inline std::vector<double> gaussian_weights(std::size_t epochs, double mu, double sigma) {
  if (epochs == 0) throw Error("gaussian_weights needs at least one epoch");
  if (!(sigma > 0.0)) throw Error("gaussian_weights needs sigma > 0");
  std::vector<double> expo(epochs);
  for (std::size_t i = 1; i <= epochs; ++i) {
    const double z = (static_cast<double>(i) - mu) / sigma;
    expo[i - 1] = -0.5 * z * z;
  }
  const double top = *std::max_element(expo.begin(), expo.end());
  std::vector<double> w(epochs);
  double total = 0.0;
  for (std::size_t i = 0; i < epochs; ++i) {
    w[i] = std::exp(expo[i] - top);
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

/// Default ensemble centre and width for an e-epoch run: (0.75 e, e / 20),
/// which is (15, 1) at e = 20.
inline std::pair<double, double> scaled_ensemble_params(std::size_t epochs) {
  const double e = static_cast<double>(epochs);
  return {0.75 * e, e / 20.0};
}

/// Streaming Gaussian-weighted parameter average across epochs. Holds one
/// running sum regardless of the number of epochs.
class EnsembleAccumulator {
 public:
  EnsembleAccumulator(std::size_t length, std::size_t total_epochs, double mu, double sigma)
      : weighted_sum_(length, 0.0),
        weights_(gaussian_weights(total_epochs, mu, sigma)),
        mu_(mu),
        sigma_(sigma),
        total_epochs_(total_epochs) {}

  /// Adds the end-of-epoch snapshot of epoch `epoch` (1-based, in order).
  void accumulate(std::span<const double> snapshot, std::size_t epoch) {
    if (snapshot.size() != weighted_sum_.size())
      throw ShapeError("ensemble snapshot has " + std::to_string(snapshot.size()) + " values, expected " +
                       std::to_string(weighted_sum_.size()));
    if (epoch != epochs_seen_ + 1)
      throw Error("ensemble expected epoch " + std::to_string(epochs_seen_ + 1) + ", got " + std::to_string(epoch));
    if (epoch > total_epochs_) throw Error("ensemble already holds all " + std::to_string(total_epochs_) + " epochs");
    const double w = weights_[epoch - 1];
    for (std::size_t i = 0; i < snapshot.size(); ++i) weighted_sum_[i] += w * snapshot[i];
    weight_total_ += w;
    epochs_seen_ = epoch;
  }

  /// weighted_sum / weight_total once every epoch has been added.
  std::vector<double> finalize() const {
    if (epochs_seen_ < total_epochs_)
      throw Error("ensemble has " + std::to_string(epochs_seen_) + " of " + std::to_string(total_epochs_) +
                  " epochs; cannot finalize");
    std::vector<double> out(weighted_sum_);
    for (auto& v : out) v /= weight_total_;
    return out;
  }

  std::size_t epochs_seen() const { return epochs_seen_; }
  std::size_t total_epochs() const { return total_epochs_; }
  double weight_total() const { return weight_total_; }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weighted_sum_;
  std::vector<double> weights_;
  double weight_total_ = 0.0;
  double mu_, sigma_;
  std::size_t total_epochs_;
  std::size_t epochs_seen_ = 0;
};

}  // namespace rpt
