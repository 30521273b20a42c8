// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "rpt/harness/benchmark.hpp"
#include "rpt/harness/config.hpp"
#include "rpt/harness/metrics.hpp"
#include "rpt/harness/report.hpp"
#include "rpt/harness/surrogate.hpp"
#include "rpt/harness/training.hpp"

using namespace rpt;

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

RunConfig micro_config() {
  RunConfig c;
  c.classes = {"cone", "cube", "sphere", "torus"};
  c.encoder.blocks = 2;
  c.encoder.width = c.encoder.feature_dim = 16;
  c.encoder.heads = 2;
  c.encoder.patches = 8;
  c.encoder.neighbors = 8;
  c.n_points = 128;
  c.depth = 2;
  c.length = 1;
  c.epochs = 2;
  c.batch = 4;
  c.shots = 2;
  c.train_per_class = 10;
  c.test_per_class = 4;
  c.n_t = 3;
  c.seeds = {1, 2};
  c.surrogate_per_class = 4;
  c.surrogate_epochs = 1;
  return c;
}

const DualEncoder& micro_encoder() {
  static const DualEncoder enc = [] {
    SurrogateOptions o = surrogate_options(micro_config());
    o.classes = micro_config().classes;
    return pretrain_surrogate(o);
  }();
  return enc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, AccuracyCountsMatches) {
  const std::vector<int> pred{0, 1, 2, 2}, lab{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(accuracy_percent(pred, lab), 75.0);
  EXPECT_THROW(accuracy_percent(std::vector<int>{}, std::vector<int>{}), Error);
  EXPECT_THROW(accuracy_percent(pred, std::vector<int>{0}), Error);
}

TEST(Metrics, HarmonicMeanMatchesPublishedRows) {
  EXPECT_DOUBLE_EQ(round2(harmonic_mean(95.03, 55.27)), 69.89);
  EXPECT_DOUBLE_EQ(round2(harmonic_mean(91.77, 56.47)), 69.92);
}

TEST(Metrics, HarmonicMeanEdgeCases) {
  EXPECT_DOUBLE_EQ(harmonic_mean(63.5, 63.5), 63.5);
  EXPECT_DOUBLE_EQ(harmonic_mean(0.0, 0.0), 0.0);
  EXPECT_LT(harmonic_mean(1e-9, 80.0), 1e-8);
  EXPECT_THROW(harmonic_mean(-1.0, 2.0), Error);
}

TEST(Metrics, SeedAggregationUsesPopulationStd) {
  const std::vector<double> v{70, 72, 74};
  const SeedStats s = aggregate_seeds(v);
  EXPECT_DOUBLE_EQ(s.mean, 72.0);
  ASSERT_TRUE(s.std.has_value());
  EXPECT_NEAR(*s.std, std::sqrt(8.0 / 3.0), 1e-12);
  EXPECT_NEAR(*s.std, 1.63, 5e-3);
  const std::vector<double> one{70};
  EXPECT_FALSE(aggregate_seeds(one).std.has_value());
  EXPECT_THROW(aggregate_seeds(std::vector<double>{}), Error);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, ProtocolDefaults) {
  RunConfig c;
  EXPECT_EQ(c.resolved_epochs(), 20u);
  EXPECT_EQ(c.resolved_depth(), 9u);
  EXPECT_EQ(c.resolved_length(), 2u);
  for (auto p : {Protocol::CrossDataset, Protocol::FewShot}) {
    c.protocol = p;
    EXPECT_EQ(c.resolved_epochs(), 50u);
    EXPECT_EQ(c.resolved_depth(), 12u);
    EXPECT_EQ(c.resolved_length(), 4u);
  }
  c.protocol = Protocol::Corruption;
  EXPECT_EQ(c.resolved_epochs(), 50u);
  EXPECT_EQ(c.resolved_depth(), 9u);
  c.protocol = Protocol::BaseToNew;
  EXPECT_EQ(c.resolved_ensemble(), std::make_pair(15.0, 1.0));
  c.ensemble = EnsembleMode::Paper;
  c.protocol = Protocol::FewShot;
  EXPECT_EQ(c.resolved_ensemble(), std::make_pair(15.0, 1.0));
  c.ensemble = EnsembleMode::Scaled;
  EXPECT_EQ(c.resolved_ensemble(), std::make_pair(37.5, 2.5));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.batch, 32u);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Config, TextRoundTrip) {
  RunConfig c = micro_config();
  c.protocol = Protocol::Corruption;
  c.weights = {1e4, 1e4, 0.5};
  c.tdc = false;
  c.ensemble = EnsembleMode::Custom;
  c.mu = 3.25;
  c.sigma = 0.7;
  c.lr = 0.1 + 0.2;
  std::istringstream is(format_config(c));
  EXPECT_EQ(parse_config(is), c);
}

TEST(Config, FileOverridesBase) {
  RunConfig flags;
  flags.epochs = 7;
  flags.lr = 0.5;
  std::istringstream is("# comment\nepochs = 3   # trailing\n\nclasses = cube, sphere\nmac = off\n");
  const RunConfig c = parse_config(is, flags);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_DOUBLE_EQ(c.lr, 0.5);
  EXPECT_EQ(c.classes, (std::vector<std::string>{"cube", "sphere"}));
  EXPECT_FALSE(c.mac);
}

TEST(Config, RejectsBadInput) {
  std::istringstream unknown("epochz = 3\n");
  EXPECT_THROW(parse_config(unknown), Error);
  std::istringstream no_eq("epochs 3\n");
  EXPECT_THROW(parse_config(no_eq), Error);
  std::istringstream bad_num("lr = fast\n");
  EXPECT_THROW(parse_config(bad_num), Error);
  RunConfig c;
  c.shots = 3;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.depth = 13;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.classes = {"cube", "blob"};
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.weights.beta = -1;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, DisabledMacZeroesWeights) {
  RunConfig c;
  c.mac = false;
  EXPECT_EQ(c.effective_weights(), (RegulationWeights{0, 0, 0}));
  c.mac = true;
  EXPECT_EQ(c.effective_weights(), (RegulationWeights{10, 25, 1}));
}

// ---------------------------------------------------------------------------
// Surrogate

TEST(Surrogate, PretrainingIsDeterministicAndFrozen) {
  const DualEncoder& a = micro_encoder();
  EXPECT_TRUE(a.frozen());
  SurrogateOptions o = surrogate_options(micro_config());
  o.classes = micro_config().classes;
  const DualEncoder b = pretrain_surrogate(o);
  EXPECT_TRUE(a == b);
  const DualEncoder fresh = init_dual_encoder(o.encoder, Vocabulary::for_classes(shape_families()), o.seed);
  EXPECT_FALSE(a == fresh);
}

TEST(Surrogate, CacheRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "rpt-test-surrogate-cache";
  std::filesystem::remove_all(dir);
  SurrogateOptions o = surrogate_options(micro_config());
  o.classes = {"cube", "sphere"};
  const DualEncoder built = load_or_pretrain_surrogate(o, dir.string());
  const DualEncoder loaded = load_or_pretrain_surrogate(o, dir.string());
  EXPECT_TRUE(built == loaded);
  EXPECT_TRUE(std::filesystem::exists(dir / ("surrogate-" + surrogate_key(o)) / "point.ckpt"));
  o.lr *= 2;
  EXPECT_NE(surrogate_key(o), surrogate_key(surrogate_options(micro_config())));
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Training

namespace {

BenchmarkSplit micro_split(const RunConfig& c, std::uint64_t seed) {
  return sample_few_shot(protocol_split(c), c.shots, seed);
}

}  // namespace

TEST(Training, FrozenEncoderUnchanged) {
  const DualEncoder before = micro_encoder();
  SampleStore store(micro_encoder());
  const RunConfig c = micro_config();
  run_training(store, micro_split(c, 1), TrainSettings::from(c), 1);
  EXPECT_TRUE(before == micro_encoder());
}

TEST(Training, DeterministicForSeed) {
  const RunConfig c = micro_config();
  SampleStore s1(micro_encoder()), s2(micro_encoder());
  const auto a = run_training(s1, micro_split(c, 3), TrainSettings::from(c), 3);
  const auto b = run_training(s2, micro_split(c, 3), TrainSettings::from(c), 3);
  EXPECT_TRUE(a.eval_prompts == b.eval_prompts);
  EXPECT_EQ(a.epochs, b.epochs);
  EXPECT_EQ(a.final_train, b.final_train);
  SampleStore s3(micro_encoder());
  const auto other = run_training(s3, micro_split(c, 4), TrainSettings::from(c), 4);
  EXPECT_FALSE(a.eval_prompts == other.eval_prompts);
}

TEST(Training, DisablingMacEqualsZeroWeights) {
  RunConfig off = micro_config();
  off.mac = false;
  RunConfig zero = micro_config();
  zero.weights = {0, 0, 0};
  SampleStore store(micro_encoder());
  const auto a = run_training(store, micro_split(off, 1), TrainSettings::from(off), 1);
  const auto b = run_training(store, micro_split(zero, 1), TrainSettings::from(zero), 1);
  EXPECT_TRUE(a.eval_prompts == b.eval_prompts);
  EXPECT_EQ(a.epochs, b.epochs);
}

TEST(Training, RegulationChangesTrajectory) {
  RunConfig on = micro_config();
  RunConfig off = micro_config();
  off.weights = {0, 0, 0};
  SampleStore store(micro_encoder());
  const auto a = run_training(store, micro_split(on, 1), TrainSettings::from(on), 1);
  const auto b = run_training(store, micro_split(off, 1), TrainSettings::from(off), 1);
  EXPECT_FALSE(a.last_prompts == b.last_prompts);
  EXPECT_GT(a.epochs[0].mean.l_p, 0.0);
  EXPECT_EQ(b.epochs[0].mean.l_p, 0.0);
}

TEST(Training, MecOffEvaluatesLastEpoch) {
  RunConfig c = micro_config();
  c.mec = false;
  SampleStore store(micro_encoder());
  const auto r = run_training(store, micro_split(c, 1), TrainSettings::from(c), 1);
  EXPECT_EQ(r.eval_prompts.flatten(), r.last_prompts.flatten());
  c.mec = true;
  const auto e = run_training(store, micro_split(c, 1), TrainSettings::from(c), 1);
  EXPECT_NE(e.eval_prompts.flatten(), e.last_prompts.flatten());
}

TEST(Training, NonFiniteLossAbortsNamingStepAndTerm) {
  RunConfig c = micro_config();
  SampleStore store(micro_encoder());
  TrainSettings st = TrainSettings::from(c);
  st.tau = 1e-320;
  try {
    run_training(store, micro_split(c, 1), st, 1);
    FAIL() << "expected an abort";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("cross-entropy"), std::string::npos) << msg;
  }
}

TEST(Training, ZeroShotEvaluationMatchesFrozenClassifier) {
  const RunConfig c = micro_config();
  SampleStore store(micro_encoder());
  const BenchmarkSplit split = protocol_split(c);
  const EvalSet& base = split.evals[0];
  const auto res = evaluate(store, base, nullptr);
  const Tensor cls = class_text_features(micro_encoder(), base.classes);
  for (std::size_t i = 0; i < base.records.size(); ++i) {
    const auto& f = store.get(base.records[i]).frozen_feature;
    EXPECT_EQ(static_cast<int>(classify(f, cls, c.tau).argmax()), res.predictions[i]);
  }
}

// ---------------------------------------------------------------------------
// Benchmark and report

TEST(Benchmark, BaseToNewReportShape) {
  const RunConfig c = micro_config();
  const MetricsReport r = run_benchmark(c, micro_encoder());
  ASSERT_EQ(r.per_seed.size(), 2u);
  ASSERT_EQ(r.aggregate.size(), 2u);
  EXPECT_EQ(r.aggregate[0].label, "zero-shot");
  EXPECT_EQ(r.aggregate[1].label, "MAC+TDC+MEC");
  const auto& row = r.aggregate[1];
  ASSERT_EQ(row.metrics.size(), 3u);
  EXPECT_TRUE(metric(row, "hm").std.has_value());
  for (const auto& s : r.per_seed) {
    const auto& run = s.runs[1];
    EXPECT_NEAR(metric(run, "hm"), harmonic_mean(metric(run, "base"), metric(run, "new")), 1e-12);
    EXPECT_EQ(run.curve.size(), 2u);
  }
  EXPECT_FALSE(r.timing.wallclock_recorded);
  EXPECT_EQ(r.timing.total_seconds, 0.0);
}

TEST(Benchmark, ReportIsByteIdenticalAcrossRuns) {
  const RunConfig c = micro_config();
  EXPECT_EQ(report_json_text(run_benchmark(c, micro_encoder())), report_json_text(run_benchmark(c, micro_encoder())));
}

TEST(Benchmark, CorruptionLayout) {
  RunConfig c = micro_config();
  c.protocol = Protocol::Corruption;
  c.seeds = {1};
  c.epochs = 1;
  const MetricsReport r = run_benchmark(c, micro_encoder());
  const auto& row = r.row("MAC+TDC+MEC");
  ASSERT_EQ(row.metrics.size(), 9u);
  EXPECT_EQ(row.metrics.front().first, "clean");
  EXPECT_EQ(row.metrics.back().first, "average");
  double sum = 0.0;
  for (std::size_t i = 1; i < 8; ++i) {
    EXPECT_EQ(row.metrics[i].first, corruption_name(kAllCorruptions[i - 1]));
    sum += row.metrics[i].second.mean;
  }
  EXPECT_NEAR(row.metrics.back().second.mean, sum / 7.0, 1e-9);
  EXPECT_FALSE(row.metrics[0].second.std.has_value());
  const std::string table = format_table(r);
  for (auto k : kAllCorruptions) EXPECT_NE(table.find(corruption_name(k)), std::string::npos);
}

TEST(Benchmark, CrossDatasetTargets) {
  RunConfig c = micro_config();
  c.protocol = Protocol::CrossDataset;
  const BenchmarkSplit s = protocol_split(c);
  EXPECT_EQ(s.train_classes.size(), 3u);
  ASSERT_EQ(s.evals.size(), 5u);
  EXPECT_EQ(s.evals[0].name, "partial");
  EXPECT_EQ(s.evals[4].name, "novel-classes");
  EXPECT_EQ(s.evals[0].classes.size(), 4u);
  for (const auto& e : s.evals)
    for (const auto& r : e.records) EXPECT_EQ(r.split, "test");
}

TEST(Report, AblationTableHasEightRows) {
  MetricsReport r;
  r.config.protocol = Protocol::Ablation;
  SeedRecord s;
  s.seed = 1;
  for (const auto& [mac, tdc, mec] : ablation_grid()) {
    RunRecord run;
    run.label = constraint_label(mac, tdc, mec);
    run.metrics = {{"base", 90.0}, {"new", 60.0}, {"hm", 72.0}};
    s.runs.push_back(run);
  }
  r.per_seed.push_back(s);
  r.aggregate = aggregate_runs(r.per_seed);
  ASSERT_EQ(r.aggregate.size(), 8u);
  EXPECT_EQ(r.aggregate.front().label, "plain");
  EXPECT_EQ(r.aggregate.back().label, "MAC+TDC+MEC");
  const std::string table = format_table(r);
  std::size_t lines = 0;
  for (char ch : table) lines += ch == '\n' ? 1 : 0;
  EXPECT_EQ(lines, 1u + 2u + 8u);
}

TEST(Report, JsonRoundTrip) {
  RunConfig c = micro_config();
  c.seeds = {5};
  c.epochs = 1;
  c.record_wallclock = true;
  const MetricsReport r = run_benchmark(c, micro_encoder());
  EXPECT_TRUE(r.timing.wallclock_recorded);
  const auto dir = std::filesystem::temp_directory_path() / "rpt-test-report";
  std::filesystem::remove_all(dir);
  emit_report(r, dir / "run.json");
  const MetricsReport back = load_report(dir / "run.json");
  EXPECT_TRUE(back == r);
  EXPECT_TRUE(std::filesystem::exists(dir / "run.txt"));
  std::ifstream csv(dir / "run.curves.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "seed,run,epoch,lr,ce,l_p,l_t,l_d,total,val_accuracy");
  std::filesystem::remove_all(dir);
}

TEST(Report, MissingSectionRejected) {
  json j = report_to_json(MetricsReport{});
  j.erase("timing");
  EXPECT_THROW(report_from_json(j), Error);
}
