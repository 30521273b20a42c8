// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rpt/core/rng.hpp"
#include "rpt/regulation/constraints.hpp"
#include "rpt/regulation/ensemble.hpp"

using namespace rpt;

namespace {

// Batch oracle for the ensemble: keeps every snapshot and applies weights
// normalized by direct summation of the closed-form Gaussian.
std::vector<double> batch_ensemble(const std::vector<std::vector<double>>& snaps, double mu, double sigma) {
  const std::size_t e = snaps.size();
  std::vector<double> w(e);
  double total = 0.0;
  for (std::size_t i = 0; i < e; ++i) {
    const double x = static_cast<double>(i + 1);
    w[i] = std::exp(-(x - mu) * (x - mu) / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * std::numbers::pi));
    total += w[i];
  }
  std::vector<double> out(snaps[0].size(), 0.0);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += (w[i] / total) * snaps[i][j];
  return out;
}

}  // namespace

TEST(Mac, IdenticalInputsGiveZero) {
  Graph g;
  Tensor h({2, 2}, {0.6, 0.8, 1, 0});
  Tensor d({2, 2}, {0.3, 0.7, 0.5, 0.5});
  auto t = mac_loss_probs(g.constant(h.shape(), h.data()), h, g.constant(h.shape(), h.data()), h,
                          g.constant(d.shape(), d.data()), d);
  EXPECT_DOUBLE_EQ(t.point.item(), 0.0);
  EXPECT_DOUBLE_EQ(t.text.item(), 0.0);
  EXPECT_NEAR(t.distribution.item(), 0.0, 1e-15);
}

TEST(Mac, L1DistanceOfOrthogonalUnitVectors) {
  Graph g;
  Tensor frozen({1, 2}, {1, 0});
  auto t = mac_loss_probs(g.constant({1, 2}, {0, 1}), frozen, g.constant({1, 2}, {1, 0}), frozen,
                          g.constant({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {0.5, 0.5}));
  EXPECT_DOUBLE_EQ(t.point.item(), 2.0);
  EXPECT_DOUBLE_EQ(t.text.item(), 0.0);
}

TEST(Mac, KlMatchesClosedForm) {
  Graph g;
  Tensor h({1, 1}, {1});
  auto t = mac_loss_probs(g.view(h), h, g.view(h), h, g.constant({1, 2}, {0.25, 0.75}), Tensor({1, 2}, {0.5, 0.5}));
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  EXPECT_NEAR(t.distribution.item(), expected, 1e-14);
  EXPECT_NEAR(t.distribution.item(), 0.1438, 1e-4);
}

TEST(Mac, ZeroInPromptableDistributionIsClampedAndFlagged) {
  Graph g;
  Tensor h({1, 1}, {1});
  auto t = mac_loss_probs(g.view(h), h, g.view(h), h, g.constant({1, 2}, {1.0, 0.0}), Tensor({1, 2}, {0.5, 0.5}));
  EXPECT_EQ(t.clamp_events, 1u);
  EXPECT_TRUE(std::isfinite(t.distribution.item()));
  EXPECT_NEAR(t.distribution.item(), 0.5 * std::log(0.5) + 0.5 * (std::log(0.5) - std::log(1e-12)), 1e-9);
}

TEST(Mac, KlIsNonNegative) {
  Rng rng = make_rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = gaussian(rng, 0, 3);
    for (auto& v : b) v = gaussian(rng, 0, 3);
    Tensor p = softmax(g.constant({2, 3}, a)).to_tensor();
    Var logq = log_softmax(g.constant({2, 3}, b));
    EXPECT_GE(kl_divergence(p, logq).item(), -1e-15);
  }
}

TEST(Mac, GradientFlowsOnlyIntoPromptableBranch) {
  Rng rng = make_rng(4);
  Tensor hp = Tensor::randn({3, 4}, 1.0, rng, true), ht = Tensor::randn({2, 4}, 1.0, rng, true);
  Tensor hp_f = Tensor::randn({3, 4}, 1.0, rng, true), ht_f = Tensor::randn({2, 4}, 1.0, rng, true);
  Tensor logits = Tensor::randn({3, 2}, 1.0, rng, true);
  Tensor d_f({3, 2}, {0.2, 0.8, 0.5, 0.5, 0.9, 0.1}, true);
  Graph g;
  auto t = mac_loss(g.param(hp), hp_f, g.param(ht), ht_f, log_softmax(g.param(logits)), d_f);
  backward(total_loss(scale(t.point, 0.0), &t, RegulationWeights{}));
  EXPECT_TRUE(hp.has_grad());
  EXPECT_TRUE(ht.has_grad());
  EXPECT_TRUE(logits.has_grad());
  EXPECT_FALSE(hp_f.has_grad());
  EXPECT_FALSE(ht_f.has_grad());
  EXPECT_FALSE(d_f.has_grad());
}

TEST(Mac, RejectsMismatchedFeatureShapes) {
  Graph g;
  Tensor a({1, 3}, {1, 0, 0});
  Tensor d({1, 2}, {0.5, 0.5});
  EXPECT_THROW(mac_loss_probs(g.constant({1, 2}, {1, 0}), a, g.view(a), a, g.view(d), d), ShapeError);
}

TEST(Tdc, SingleDescriptionIsItself) {
  Tensor f({1, 3}, {0.6, 0.0, 0.8});
  auto p = tdc_pool(f);
  EXPECT_DOUBLE_EQ(p[0], 0.6);
  EXPECT_DOUBLE_EQ(p[2], 0.8);
}

TEST(Tdc, AntipodalPairIsRejected) {
  EXPECT_THROW(tdc_pool(Tensor({2, 2}, {1, 0, -1, 0})), Error);
}

TEST(Tdc, OrderInvariantAndUnitNorm) {
  Rng rng = make_rng(12);
  Graph g;
  std::vector<double> raw(10 * 6);
  for (auto& v : raw) v = gaussian(rng, 0, 1);
  Tensor f = l2_normalize(g.constant({10, 6}, raw)).to_tensor();
  std::vector<double> rev;
  for (std::size_t r = 10; r-- > 0;)
    for (std::size_t c = 0; c < 6; ++c) rev.push_back(f.at(r, c));
  auto a = tdc_pool(f), b = tdc_pool(Tensor({10, 6}, rev));
  double n = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-15);
    n += a[i] * a[i];
  }
  EXPECT_NEAR(n, 1.0, 1e-12);
}

TEST(GaussianWeights, PeakAndNormalizedValue) {
  auto w = gaussian_weights(20, 15, 1);
  EXPECT_EQ(std::max_element(w.begin(), w.end()) - w.begin(), 14);
  double raw_total = 0.0;
  for (int i = 1; i <= 20; ++i) raw_total += std::exp(-(i - 15.0) * (i - 15.0) / 2.0) / std::sqrt(2 * std::numbers::pi);
  const double oracle = (1.0 / std::sqrt(2 * std::numbers::pi)) / raw_total;
  EXPECT_NEAR(w[14], oracle, 1e-12);
  EXPECT_NEAR(w[14], 0.39894, 1e-4);
}

TEST(GaussianWeights, SumToOne) {
  for (std::size_t e : {1u, 3u, 20u, 50u})
    for (double sigma : {0.5, 1.0, 2.5, 1e6}) {
      auto w = gaussian_weights(e, 0.75 * e, sigma);
      double s = 0.0;
      for (double v : w) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(GaussianWeights, FlatLimit) {
  auto w = gaussian_weights(20, 15, 1e6);
  for (double v : w) EXPECT_NEAR(v, 1.0 / 20.0, 1e-9);
}

TEST(GaussianWeights, FarCentreStaysPositive) {
  auto w = gaussian_weights(50, 15, 0.1);
  for (double v : w) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(w[14], 1.0, 1e-12);
  EXPECT_THROW(gaussian_weights(0, 1, 1), Error);
  EXPECT_THROW(gaussian_weights(5, 1, 0), Error);
}

TEST(GaussianWeights, ScaledDefaults) {
  auto [mu, sigma] = scaled_ensemble_params(20);
  EXPECT_DOUBLE_EQ(mu, 15.0);
  EXPECT_DOUBLE_EQ(sigma, 1.0);
}

TEST(Ensemble, SingleEpochReturnsSnapshot) {
  EnsembleAccumulator acc(3, 1, 0.75, 0.05);
  std::vector<double> s{1.5, -2.0, 3.25};
  acc.accumulate(s, 1);
  EXPECT_EQ(acc.finalize(), s);
}

TEST(Ensemble, EqualSnapshotsReturnTheSame) {
  EnsembleAccumulator acc(2, 5, 3, 1);
  std::vector<double> s{0.1, 0.7};
  for (std::size_t e = 1; e <= 5; ++e) acc.accumulate(s, e);
  auto out = acc.finalize();
  EXPECT_NEAR(out[0], 0.1, 1e-15);
  EXPECT_NEAR(out[1], 0.7, 1e-15);
}

TEST(Ensemble, MidpointWithEqualWeights) {
  EnsembleAccumulator acc(1, 2, 1.5, 1);
  acc.accumulate(std::vector<double>{0.0}, 1);
  acc.accumulate(std::vector<double>{2.0}, 2);
  EXPECT_DOUBLE_EQ(acc.finalize()[0], 1.0);
}

TEST(Ensemble, StreamingMatchesBatchOracle) {
  Rng rng = make_rng(77);
  for (std::size_t e : {1u, 3u, 20u, 50u}) {
    for (auto [mu, sigma] : {std::pair{15.0, 1.0}, scaled_ensemble_params(e)}) {
      std::vector<std::vector<double>> snaps(e, std::vector<double>(64));
      for (auto& s : snaps)
        for (auto& v : s) v = gaussian(rng, 0, 1);
      EnsembleAccumulator acc(64, e, mu, sigma);
      for (std::size_t i = 0; i < e; ++i) acc.accumulate(snaps[i], i + 1);
      EXPECT_GT(acc.weight_total(), 0.0);
      auto got = acc.finalize();
      auto want = batch_ensemble(snaps, mu, sigma);
      for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-12) << "e=" << e;
    }
  }
}

TEST(Ensemble, RejectsOutOfOrderAndEarlyFinalize) {
  EnsembleAccumulator acc(2, 3, 2, 1);
  std::vector<double> s{1, 2};
  EXPECT_THROW(acc.accumulate(s, 2), Error);
  acc.accumulate(s, 1);
  EXPECT_THROW(acc.accumulate(s, 1), Error);
  EXPECT_THROW(acc.finalize(), Error);
  EXPECT_THROW(acc.accumulate(std::vector<double>{1}, 2), ShapeError);
}

TEST(TotalLoss, PaperWeights) {
  EXPECT_NEAR(total_loss(1, 0.1, 0.2, 0.3, RegulationWeights{}), 7.3, 1e-12);
  EXPECT_DOUBLE_EQ(total_loss(1.25, 0, 0, 0, RegulationWeights{}), 1.25);
  RegulationWeights bad{.alpha = -1};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(TotalLoss, ZeroWeightsSkipTerms) {
  Graph g;
  Var ce = g.constant({1}, {0.5});
  MacTerms t{g.constant({1}, {1.0}), g.constant({1}, {2.0}), g.constant({1}, {3.0}), 0};
  EXPECT_DOUBLE_EQ(total_loss(ce, &t, RegulationWeights{0, 0, 0}).item(), 0.5);
  EXPECT_EQ(total_loss(ce, &t, RegulationWeights{0, 0, 0}).id(), ce.id());
  EXPECT_DOUBLE_EQ(total_loss(ce, &t, RegulationWeights{}).item(), 0.5 + 10 + 50 + 3);
}
