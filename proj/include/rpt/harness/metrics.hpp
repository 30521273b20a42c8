// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpt/core/tensor.hpp"

namespace rpt {

/// Percentage of positions where prediction equals label.
inline double accuracy_percent(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw Error("cannot score an empty prediction set");
  if (predictions.size() != labels.size())
    throw Error("prediction count " + std::to_string(predictions.size()) + " differs from label count " +
                std::to_string(labels.size()));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

/// 2bn / (b + n); zero when both are zero.
inline double harmonic_mean(double base, double novel) {
  if (base < 0.0 || novel < 0.0) throw Error("harmonic mean of negative accuracies");
  const double s = base + novel;
  return s > 0.0 ? 2.0 * base * novel / s : 0.0;
}

struct SeedStats {
  double mean = 0.0;
  std::optional<double> std;  // population std; absent for a single seed

  friend bool operator==(const SeedStats&, const SeedStats&) = default;
};

inline SeedStats aggregate_seeds(std::span<const double> values) {
  if (values.empty()) throw Error("cannot aggregate zero seeds");
  SeedStats s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / static_cast<double>(values.size()));
  }
  return s;
}

/// sqrt((a^2 + b^2) / 2): the pooled std of two groups of equal size.
inline double pooled_std(double a, double b) { return std::sqrt(0.5 * (a * a + b * b)); }

}  // namespace rpt
