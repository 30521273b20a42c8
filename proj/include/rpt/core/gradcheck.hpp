// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rpt/core/graph.hpp"
#include "rpt/core/optim.hpp"

namespace rpt {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  bool passed = true;
  bool non_finite = false;
  double worst_rel_error = 0.0;
};

/// Compares reverse-mode gradients of `fn` against central differences.
///
/// `fn` must build its graph on the supplied Graph and return the scalar loss.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor),
/// so gradients that are numerically zero are compared in absolute terms.
inline GradCheckReport finite_diff_check(const std::function<Var(Graph&)>& fn,
                                         std::span<const NamedParam> params, double step, double tol,
                                         double abs_floor = 1e-6) {
  if (!(step > 0.0)) throw Error("finite_diff_check: step must be positive");
  GradCheckReport report;

  for (const auto& p : params) p.tensor->clear_grad();
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    Var loss = fn(g);
    if (!std::isfinite(loss.item())) {
      report.passed = false;
      report.non_finite = true;
      for (const auto& p : params) report.params.push_back({p.name, 0.0, 0.0, false});
      return report;
    }
    backward(loss);
  }
  for (const auto& p : params) {
    analytic.push_back(p.tensor->has_grad() ? *p.tensor->grad() : std::vector<double>(p.tensor->size(), 0.0));
    p.tensor->clear_grad();
  }

  auto eval = [&]() {
    Graph g;
    return fn(g).item();
  };

  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamCheck pc{params[k].name};
    auto& data = params[k].tensor->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double fp = eval();
      data[i] = orig - step;
      const double fm = eval();
      data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        pc.finite = false;
        report.non_finite = true;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[k][i];
      const double abs_err = std::fabs(a - numeric);
      const double rel = abs_err / std::max({std::fabs(a), std::fabs(numeric), abs_floor});
      pc.max_abs_error = std::max(pc.max_abs_error, abs_err);
      pc.max_rel_error = std::max(pc.max_rel_error, rel);
    }
    report.worst_rel_error = std::max(report.worst_rel_error, pc.max_rel_error);
    if (!pc.finite || pc.max_rel_error > tol) report.passed = false;
    report.params.push_back(std::move(pc));
  }
  return report;
}

}  // namespace rpt
