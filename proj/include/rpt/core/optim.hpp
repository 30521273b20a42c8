// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rpt/core/tensor.hpp"

namespace rpt {

/// A trainable tensor together with a name used in diagnostics.
struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

/// Half-cosine decay from base_lr at step 0 to exactly 0 at total_steps.
struct CosineSchedule {
  double base_lr = 0.0025;
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 0;  // linear ramp before the decay; 0 for none

  double lr(std::size_t step) const {
    if (step >= total_steps) return 0.0;
    if (step < warmup_steps)
      return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (step == 0) return base_lr;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<const NamedParam> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.tensor->has_grad())
      for (double v : *p.tensor->grad()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0)
    for (const auto& p : params) p.tensor->scale_grad(max_norm / norm);
  return norm;
}

/// Plain SGD driven by a cosine schedule. Momentum defaults to 0.
class SgdCosine {
 public:
  SgdCosine(CosineSchedule schedule, double momentum = 0.0)
      : schedule_(schedule), momentum_(momentum) {
    if (schedule_.total_steps == 0) throw Error("optimizer needs total_steps >= 1");
    if (!(schedule_.base_lr >= 0.0)) throw Error("optimizer base_lr must be non-negative");
  }

  std::size_t current_step() const { return step_; }
  const CosineSchedule& schedule() const { return schedule_; }
  double current_lr() const { return schedule_.lr(step_); }

  /// p <- p - lr(step) * grad(p); clears grads and advances the step.
  void step(std::span<const NamedParam> params) {
    if (step_ >= schedule_.total_steps)
      throw Error("optimizer already at total_steps = " + std::to_string(schedule_.total_steps));
    for (const auto& p : params) {
      if (!p.tensor->has_grad()) throw Error("parameter '" + p.name + "' has no gradient");
    }
    if (momentum_ != 0.0 && velocity_.size() != params.size()) {
      velocity_.clear();
      for (const auto& p : params) velocity_.emplace_back(p.tensor->size(), 0.0);
    }
    const double lr = current_lr();
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& t = *params[k].tensor;
      const auto& g = *t.grad();
      auto& d = t.data();
      if (momentum_ != 0.0) {
        auto& v = velocity_[k];
        for (std::size_t i = 0; i < d.size(); ++i) {
          v[i] = momentum_ * v[i] + g[i];
          d[i] -= lr * v[i];
        }
      } else {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
      }
      t.clear_grad();
    }
    ++step_;
  }

 private:
  CosineSchedule schedule_;
  double momentum_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> velocity_;
};

/// Adam, used only to build the frozen surrogate encoders.
class Adam {
 public:
  explicit Adam(CosineSchedule schedule, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : schedule_(schedule), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<const NamedParam> params) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto& p : params) {
        m_.emplace_back(p.tensor->size(), 0.0);
        v_.emplace_back(p.tensor->size(), 0.0);
      }
    }
    const double lr = schedule_.lr(step_);
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& t = *params[k].tensor;
      if (!t.has_grad()) continue;
      const auto& g = *t.grad();
      auto& d = t.data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
        v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
        d[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
      }
      t.clear_grad();
    }
  }

 private:
  CosineSchedule schedule_;
  double beta1_, beta2_, eps_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace rpt
