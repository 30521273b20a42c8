// SPDX-License-Identifier: Apache-2.0
// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails, except those listed with --expect-fail,
// which still print FAIL.
//
//   acceptance --cache DIR --cli PATH [--only 1,2,...] [--expect-fail 7] [--work DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rpt/core/gradcheck.hpp"
#include "rpt/harness/benchmark.hpp"
#include "rpt/harness/surrogate.hpp"

namespace fs = std::filesystem;
using namespace rpt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string cache = ".rpt-cache";
  std::string cli;
  fs::path work = fs::temp_directory_path() / "rpt-acceptance";
  std::set<int> only;
  std::set<int> expect_fail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

// ---------------------------------------------------------------------------
// Shared state: the frozen surrogate and the benchmark runs several criteria
// read from.

struct Shared {
  Options opt;
  RunConfig base;
  std::optional<DualEncoder> frozen;
  std::optional<DualEncoder> frozen_snapshot;
  std::map<std::string, MetricsReport> reports;

  const DualEncoder& encoder() {
    if (!frozen) {
      const auto t0 = Clock::now();
      frozen = load_or_pretrain_surrogate(surrogate_options(base), opt.cache, note);
      frozen_snapshot = *frozen;
      note(fmt("frozen surrogate ready in %.1f s", since(t0)));
    }
    return *frozen;
  }

  const MetricsReport& report(const std::string& key, const RunConfig& c) {
    auto it = reports.find(key);
    if (it != reports.end()) return it->second;
    const auto t0 = Clock::now();
    note("running " + key);
    RunConfig rc = c;
    rc.record_wallclock = true;
    auto rep = run_benchmark(rc, encoder(), [](const std::string& s) {
      if (s.rfind("run ", 0) == 0) note(s);
    });
    note(fmt("%s finished in %.1f s", key.c_str(), since(t0)));
    return reports.emplace(key, std::move(rep)).first->second;
  }
};

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient checks

Tensor random_tensor(Shape shape, std::uint64_t seed, double std = 1.0) {
  Rng rng = make_rng(seed);
  return Tensor::randn(std::move(shape), std, rng, true);
}

double primitive_worst(std::uint64_t seed, std::string& worst_name) {
  Tensor a = random_tensor({4, 5}, derive_seed(seed, 1));
  Tensor b = random_tensor({5, 3}, derive_seed(seed, 2));
  Tensor c = random_tensor({4, 5}, derive_seed(seed, 3));
  Tensor row = random_tensor({5}, derive_seed(seed, 4));
  Tensor gain = random_tensor({5}, derive_seed(seed, 5));
  Tensor pos = random_tensor({4, 5}, derive_seed(seed, 6));
  for (auto& v : pos.data()) v = std::fabs(v) + 0.5;
  Tensor ref({4, 5}, std::vector<double>(20, 0.0));
  {
    Rng rng = make_rng(derive_seed(seed, 7));
    for (auto& v : ref.data()) v = uniform(rng, -1, 1);
  }
  Tensor dist({4, 3}, std::vector<double>(12, 0.0));
  {
    Rng rng = make_rng(derive_seed(seed, 8));
    for (std::size_t i = 0; i < 4; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < 3; ++j) z += dist.data()[i * 3 + j] = uniform(rng, 0.1, 1.0);
      for (std::size_t j = 0; j < 3; ++j) dist.data()[i * 3 + j] /= z;
    }
  }
  std::vector<NamedParam> params{{"a", &a}, {"b", &b}, {"c", &c}, {"row", &row}, {"gain", &gain}, {"pos", &pos}};
  const std::vector<std::pair<const char*, std::function<Var(Graph&)>>> cases = {
      {"matmul", [&](Graph& g) { return sum(mul(matmul(g.param(a), g.param(b)), matmul(g.param(c), g.param(b)))); }},
      {"matmul_nt", [&](Graph& g) { return sum(softmax(matmul_nt(g.param(a), g.param(c)))); }},
      {"add_sub_mul", [&](Graph& g) {
         auto x = mul(add(g.param(a), g.param(row)), sub(g.param(c), g.param(row)));
         return sum(mul(x, g.param(a)));
       }},
      {"scale", [&](Graph& g) { return sum(mul(scale(g.param(a), -2.5), g.param(c))); }},
      {"concat", [&](Graph& g) {
         auto x = concat({g.param(a), g.param(c)}, 0);
         auto y = concat({g.param(a), g.param(c)}, 1);
         return add(sum(mul(x, x)), sum(mul(y, gelu(y))));
       }},
      {"slice_gather", [&](Graph& g) {
         auto s = slice(g.param(a), 1, 3, 2, 5);
         auto r = gather_rows(g.param(c), {3, 0, 3});
         return add(sum(mul(s, s)), sum(mul(r, softmax(r))));
       }},
      {"mean", [&](Graph& g) {
         auto m0 = mean(g.param(a), 0);
         auto m1 = mean(g.param(c), 1);
         return add(sum(mul(m0, m0)), sum(mul(m1, m1)));
       }},
      {"layer_norm", [&](Graph& g) { return sum(mul(layer_norm(g.param(a), g.param(gain), g.param(row)), g.param(c))); }},
      {"gelu", [&](Graph& g) { return sum(mul(gelu(g.param(a)), g.param(c))); }},
      {"softmax", [&](Graph& g) { return sum(mul(softmax(g.param(a)), g.param(c))); }},
      {"log_softmax", [&](Graph& g) { return sum(mul(log_softmax(g.param(a)), g.param(c))); }},
      {"log", [&](Graph& g) { return sum(mul(log(g.param(pos)), g.param(c))); }},
      {"abs", [&](Graph& g) { return sum(abs(mul(g.param(a), g.param(c)))); }},
      {"l2_normalize", [&](Graph& g) { return sum(mul(l2_normalize(g.param(a)), g.param(c))); }},
      {"max_pool_rows", [&](Graph& g) { return sum(mul(max_pool_rows(g.param(a), 2), slice_rows(g.param(c), 0, 2))); }},
      {"l1_agreement", [&](Graph& g) { return l1_agreement(g.param(a), ref); }},
      {"kl_divergence", [&](Graph& g) { return kl_divergence(dist, log_softmax(matmul(g.param(a), g.param(b)))); }},
  };
  double worst = 0.0;
  for (const auto& [name, fn] : cases) {
    const auto r = finite_diff_check(fn, params, 1e-5, 1e-4);
    const double e = r.non_finite ? INFINITY : r.worst_rel_error;
    if (e > worst) worst = e, worst_name = name;
  }
  return worst;
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.blocks = 2;
  c.width = c.feature_dim = 16;
  c.heads = 2;
  c.patches = 8;
  c.neighbors = 8;
  return c;
}

double full_graph_worst(std::uint64_t seed) {
  const std::vector<std::string> classes = {"cone", "cube", "torus"};
  const DualEncoder enc = init_dual_encoder(tiny_encoder(), Vocabulary::for_classes(shape_families()), seed);
  std::vector<PatchSequence> seqs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 4; ++i) {
    seqs.push_back(embed_point_patches(gen_shape(classes[i % 3], derive_seed(seed, 100 + i), 128), enc));
    labels.push_back(static_cast<int>(i % 3));
  }
  const Tensor hp_frozen = point_features(enc, seqs);
  const Tensor ht_ref = frozen_text_reference(enc, classes, true, 4, seed);
  const auto tokens = canonical_tokens(enc, classes);
  PromptSet ps = init_prompt_set(2, 2, 2, 16, derive_seed(seed, 9), 2);
  for (auto& t : ps.point)
    for (auto& v : t.data()) v *= 10.0;
  for (auto& t : ps.text)
    for (auto& v : t.data()) v *= 10.0;
  const RegulationWeights w{10.0, 25.0, 1.0};
  auto fn = [&](Graph& g) {
    return detail::build_objective(g, enc, ps, seqs, labels, tokens, hp_frozen, ht_ref, w, 0.1).loss;
  };
  const auto params = ps.named_params();
  const auto r = finite_diff_check(fn, params, 1e-5, 1e-3);
  return r.non_finite ? INFINITY : r.worst_rel_error;
}

Outcome criterion_1(Shared&) {
  const auto t0 = Clock::now();
  double prim = 0.0, full = 0.0;
  std::string prim_name;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    std::string name;
    const double e = primitive_worst(s, name);
    if (e > prim) prim = e, prim_name = name;
    full = std::max(full, full_graph_worst(s));
  }
  const double secs = since(t0);
  return {prim <= 1e-4 && full <= 1e-3 && secs < 60.0,
          fmt("20 seeds: worst primitive rel err %.2e (%s) <= 1e-4, full objective %.2e <= 1e-3, %.1f s < 60 s",
              prim, prim_name.c_str(), full, secs)};
}

// ---------------------------------------------------------------------------
// 2. Ensemble streaming vs a batch oracle

std::vector<double> oracle_weights(std::size_t e, double mu, double sigma) {
  std::vector<double> w(e);
  double z = 0.0;
  for (std::size_t i = 0; i < e; ++i) {
    const double x = (static_cast<double>(i + 1) - mu) / sigma;
    z += w[i] = std::exp(-0.5 * x * x);
  }
  for (auto& v : w) v /= z;
  return w;
}

Outcome criterion_2(Shared&) {
  Rng rng = make_rng(2024);
  double worst_stream = 0.0, worst_sum = 0.0;
  for (std::size_t e : {1u, 3u, 20u, 50u}) {
    for (auto [mu, sigma] : {std::pair{15.0, 1.0}, scaled_ensemble_params(e), std::pair{2.0, 4.0}}) {
      const std::size_t n = 97;
      std::vector<std::vector<double>> traj(e, std::vector<double>(n));
      for (auto& s : traj)
        for (auto& v : s) v = gaussian(rng, 0.0, 1.0);
      EnsembleAccumulator acc(n, e, mu, sigma);
      for (std::size_t i = 0; i < e; ++i) acc.accumulate(traj[i], i + 1);
      const auto got = acc.finalize();
      const auto w = oracle_weights(e, mu, sigma);
      for (std::size_t j = 0; j < n; ++j) {
        double want = 0.0;
        for (std::size_t i = 0; i < e; ++i) want += w[i] * traj[i][j];
        worst_stream = std::max(worst_stream, std::fabs(got[j] - want));
      }
      double total = 0.0;
      for (double v : gaussian_weights(e, mu, sigma)) total += v;
      worst_sum = std::max(worst_sum, std::fabs(total - 1.0));
    }
  }
  const double w15 = gaussian_weights(20, 15.0, 1.0)[14];
  const double w15_oracle = oracle_weights(20, 15.0, 1.0)[14];
  const bool ok = worst_stream <= 1e-12 && worst_sum <= 1e-12 && std::fabs(w15 - 0.39894) <= 1e-4 &&
                  std::fabs(w15_oracle - 0.39894) <= 1e-4;
  return {ok, fmt("e in {1,3,20,50}: stream vs oracle %.1e <= 1e-12, |sum w - 1| %.1e <= 1e-12, "
                  "w_15 = %.5f (oracle %.5f) vs 0.39894 +- 1e-4",
                  worst_stream, worst_sum, w15, w15_oracle)};
}

// ---------------------------------------------------------------------------
// 3. Harmonic mean against published rows

Outcome criterion_3(Shared&) {
  auto r2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  const double a = r2(harmonic_mean(95.03, 55.27)), b = r2(harmonic_mean(91.77, 56.47));
  return {a == 69.89 && b == 69.92, fmt("HM(95.03, 55.27) = %.2f (69.89), HM(91.77, 56.47) = %.2f (69.92)", a, b)};
}

// ---------------------------------------------------------------------------
// 4. Base-to-new split counts and leakage

Manifest named_manifest(std::size_t classes, std::size_t train, std::size_t test, std::uint64_t seed) {
  Manifest m;
  m.name = "named";
  for (std::size_t c = 0; c < classes; ++c) m.classes.push_back("class" + std::to_string(c));
  Rng rng = make_rng(seed);
  for (const auto& c : m.classes) {
    for (std::size_t i = 0; i < train; ++i) m.records.push_back({c, "sphere", rng(), 1024, "train"});
    for (std::size_t i = 0; i < test; ++i) m.records.push_back({c, "sphere", rng(), 1024, "test"});
  }
  return m;
}

std::string leak_in(const Manifest& m, std::uint64_t seed) {
  const BenchmarkSplit s = split_base_new(m, seed);
  const std::set<std::string> base(s.evals[0].classes.begin(), s.evals[0].classes.end());
  const std::set<std::string> novel(s.evals[1].classes.begin(), s.evals[1].classes.end());
  for (const auto& c : novel)
    if (base.count(c)) return "class " + c + " in both halves";
  if (base.size() + novel.size() != m.classes.size()) return "halves do not cover the classes";
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& r : m.with_split("test")) test_seeds.insert(r.seed);
  for (const auto* set : {&s.train, &s.val})
    for (const auto& r : *set) {
      if (!base.count(r.class_name)) return "new class " + r.class_name + " in training data";
      if (test_seeds.count(r.seed)) return "test record in training data";
    }
  for (const auto& r : s.train) train_seeds.insert(r.seed);
  for (const auto& r : s.val)
    if (train_seeds.count(r.seed)) return "record in both train and val";
  for (std::size_t k : {1u, 4u}) {
    const BenchmarkSplit fs = sample_few_shot(s, k, seed + 1);
    for (const auto& r : fs.train)
      if (!base.count(r.class_name) || !train_seeds.count(r.seed)) return "few-shot sample outside base train";
  }
  for (std::size_t e = 0; e < 2; ++e)
    for (const auto& r : s.evals[e].records) {
      if (r.split != "test") return "train record in evaluation";
      if (!(e == 0 ? base : novel).count(r.class_name)) return "evaluation record in the wrong half";
    }
  return "";
}

Outcome criterion_4(Shared&) {
  const auto s40 = split_base_new(named_manifest(40, 2, 1, 1), 1);
  const auto s15 = split_base_new(named_manifest(15, 2, 1, 2), 2);
  const auto c40 = std::pair{s40.evals[0].classes.size(), s40.evals[1].classes.size()};
  const auto c15 = std::pair{s15.evals[0].classes.size(), s15.evals[1].classes.size()};
  std::string leak;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 100 && leak.empty(); ++seed) {
    Rng rng = make_rng(derive_seed(seed, 4));
    const std::size_t c = 2 + rng() % 39;
    leak = leak_in(named_manifest(c, 5 + rng() % 20, 1 + rng() % 5, seed), seed);
    ++checked;
  }
  const bool ok = c40 == std::pair<std::size_t, std::size_t>{20, 20} &&
                  c15 == std::pair<std::size_t, std::size_t>{8, 7} && leak.empty() && checked == 100;
  return {ok, fmt("C=40 -> (%zu, %zu), C=15 -> (%zu, %zu); no-leak on %zu manifests%s%s", c40.first, c40.second,
                  c15.first, c15.second, checked, leak.empty() ? "" : ": ", leak.c_str())};
}

// ---------------------------------------------------------------------------
// 5. Zero-shot equivalence and frozen parameters

Outcome criterion_5(Shared& sh) {
  const DualEncoder& enc = sh.encoder();
  RunConfig c = sh.base;
  const Manifest m = benchmark_manifest(c, "probe", c.classes, "clean", 55);
  std::vector<PatchSequence> seqs;
  for (std::size_t i = 0; i < m.records.size() && seqs.size() < 16; i += 7)
    seqs.push_back(embed_point_patches(materialize(m.records[i]), enc));
  const auto tokens = canonical_tokens(enc, c.classes);
  DualEncoder live = enc;
  live.set_trainable(true);
  Graph g;
  const PromptSet* none = nullptr;
  const Tensor p_live = encode_points(g, live, std::span<const PatchSequence>(seqs), none).to_tensor();
  const Tensor t_live = encode_text(g, live, std::span<const TokenSequence>(tokens), none).to_tensor();
  const bool same_points = p_live == point_features(enc, seqs);
  const bool same_text = t_live == class_text_features(enc, c.classes);

  // Every training run the acceptance suite performed used `enc` as its
  // frozen encoder; it must still equal the copy taken at load time.
  if (!sh.reports.count("rc")) sh.report("rc", sh.base);
  std::size_t runs = 0;
  for (const auto& [k, r] : sh.reports)
    for (const auto& s : r.per_seed) runs += s.runs.size() - 1;
  const bool unchanged = enc == *sh.frozen_snapshot;
  return {same_points && same_text && unchanged,
          fmt("prompts-off point features bit-identical: %s, text: %s; frozen parameters bit-unchanged after %zu "
              "training runs: %s",
              same_points ? "yes" : "no", same_text ? "yes" : "no", runs, unchanged ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6. Regulation preserves new-class accuracy

std::pair<SeedStats, SeedStats> new_and_hm(const MetricsReport& r, const std::string& label) {
  const auto& row = r.row(label);
  return {metric(row, "new"), metric(row, "hm")};
}

Outcome criterion_6(Shared& sh) {
  const auto t0 = Clock::now();
  RunConfig off = sh.base;
  off.mac = off.tdc = off.mec = false;
  const auto& rc = sh.report("rc", sh.base);
  const auto& plain = sh.report("no-rc", off);
  const double secs = since(t0);
  const auto [n1, h1] = new_and_hm(rc, "MAC+TDC+MEC");
  const auto [n0, h0] = new_and_hm(plain, "plain");
  const double pn = pooled_std(n1.std.value_or(0.0), n0.std.value_or(0.0));
  const double ph = pooled_std(h1.std.value_or(0.0), h0.std.value_or(0.0));
  const bool ok = n1.mean - n0.mean > pn && h1.mean - h0.mean > ph && secs < 20 * 60;
  return {ok, fmt("New %.2f vs %.2f (margin %.2f, pooled std %.2f); HM %.2f vs %.2f (margin %.2f, pooled std "
                  "%.2f); zero-shot New %.2f; %.0f s < 1200 s",
                  n1.mean, n0.mean, n1.mean - n0.mean, pn, h1.mean, h0.mean, h1.mean - h0.mean, ph,
                  metric(rc.row("zero-shot"), "new").mean, secs)};
}

// ---------------------------------------------------------------------------
// 7. Strong agreement weights anchor the prompts to the frozen model

Outcome criterion_7(Shared& sh) {
  RunConfig c = sh.base;
  c.weights.alpha = c.weights.beta = 1e4;
  const auto& r = sh.report("anchored", c);
  double lp = 0.0, lt = 0.0;
  for (const auto& s : r.per_seed) {
    lp = std::max(lp, s.runs.back().final_train.l_p);
    lt = std::max(lt, s.runs.back().final_train.l_t);
  }
  const double nw = metric(r.row("MAC+TDC+MEC"), "new").mean;
  const double zs = metric(r.row("zero-shot"), "new").mean;
  const bool ok = lp < 1e-2 && lt < 1e-2 && std::fabs(nw - zs) <= 2.0;
  return {ok, fmt("alpha = beta = 1e4: final train L_p %.2e, L_t %.2e (< 1e-2); New %.2f vs zero-shot %.2f "
                  "(|diff| %.2f <= 2)",
                  lp, lt, nw, zs, std::fabs(nw - zs))};
}

// ---------------------------------------------------------------------------
// 8. Corruptions

std::vector<double> pairwise(const PointCloud& pc, std::size_t limit) {
  std::vector<double> d;
  for (std::size_t i = 0; i < limit; ++i)
    for (std::size_t j = 0; j < limit; ++j) d.push_back(std::sqrt(sq_dist(pc.points[i], pc.points[j])));
  return d;
}

Outcome criterion_8(Shared& sh) {
  const PointCloud pc = gen_shape("torus", 81, 1024);
  bool identity = true;
  for (auto k : kAllCorruptions) identity = identity && corrupt(pc, {k, 0, 5}).points == pc.points;
  const std::size_t kept = corrupt(pc, {CorruptionKind::DropGlobal, 2, 5}).points.size();
  double rot_err = 0.0;
  for (int s = 1; s <= 4; ++s) {
    const auto a = pairwise(pc, 1024), b = pairwise(corrupt(pc, {CorruptionKind::Rotate, s, 5}), 1024);
    for (std::size_t i = 0; i < a.size(); ++i) rot_err = std::max(rot_err, std::fabs(a[i] - b[i]));
  }

  // Probe set: 4 test clouds per class, 64 in all.
  const DualEncoder& enc = sh.encoder();
  RunConfig c = sh.base;
  c.test_per_class = 4;
  const Manifest m = benchmark_manifest(c, "probe", c.classes, "clean", 88);
  const auto probe = m.with_split("test");
  SampleStore store(enc);
  const auto clean = store.ensure(probe);
  std::string drift_detail;
  bool monotone = probe.size() == 64;
  for (auto k : {CorruptionKind::Jitter, CorruptionKind::DropGlobal, CorruptionKind::DropLocal, CorruptionKind::Rotate,
                 CorruptionKind::Scale}) {
    double prev = -1.0;
    drift_detail += " " + corruption_name(k) + "[";
    for (int s = 0; s <= 4; ++s) {
      const auto cor = store.ensure(probe, CorruptionSpec{k, s, 17});
      double mean = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < clean[i]->frozen_feature.size(); ++j) {
          const double d = clean[i]->frozen_feature[j] - cor[i]->frozen_feature[j];
          sq += d * d;
        }
        mean += std::sqrt(sq);
      }
      mean /= static_cast<double>(probe.size());
      monotone = monotone && mean >= prev;
      prev = mean;
      drift_detail += fmt(s == 0 ? "%.3f" : " %.3f", mean);
    }
    drift_detail += "]";
  }
  const bool ok = identity && kept == 768 && rot_err <= 1e-9 && monotone;
  return {ok, fmt("severity 0 bitwise identity: %s; drop_global s=2 keeps %zu/1024; rotate distance err %.1e; "
                  "drift on %zu probes non-decreasing: %s;",
                  identity ? "yes" : "no", kept, rot_err, probe.size(), monotone ? "yes" : "no") +
              drift_detail};
}

// ---------------------------------------------------------------------------
// 9. Overfitting a 2-class task without regulation

Outcome criterion_9(Shared& sh) {
  RunConfig c = sh.base;
  c.protocol = Protocol::FewShot;
  c.classes = {shape_families()[0], shape_families()[1]};
  c.shots = 16;
  c.shots_list = {16};
  c.epochs = 20;
  c.seeds = {1};
  c.mac = c.tdc = c.mec = false;
  const auto& r = sh.report("overfit", c);
  const auto& run = r.per_seed[0].runs.back();
  std::size_t first = 0;
  double best = INFINITY;
  for (const auto& e : run.curve) {
    best = std::min(best, e.mean.ce);
    if (first == 0 && e.mean.ce < 0.1) first = e.epoch;
  }
  return {first != 0, first != 0 ? fmt("%s vs %s, 16 shots: train CE %.4f < 0.1 at epoch %zu of 20",
                                       c.classes[0].c_str(), c.classes[1].c_str(), run.curve[first - 1].mean.ce, first)
                                 : fmt("%s vs %s, 16 shots: lowest train CE %.4f in 20 epochs", c.classes[0].c_str(),
                                       c.classes[1].c_str(), best)};
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reports from two executions

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion_10(Shared& sh) {
  if (sh.opt.cli.empty()) return {false, "no --cli given"};
  sh.encoder();
  fs::create_directories(sh.opt.work);
  std::vector<std::string> texts;
  for (int i = 0; i < 2; ++i) {
    const fs::path out = sh.opt.work / ("determinism-" + std::to_string(i) + ".json");
    fs::remove(out);
    const std::string cmd = "\"" + sh.opt.cli + "\" benchmark base-to-new -q --cache-dir \"" + sh.opt.cache +
                            "\" --classes cone,cube,sphere,torus,helix,plane --epochs 3 --seeds 4 --out \"" +
                            out.string() + "\"";
    if (std::system((cmd + " > /dev/null").c_str()) != 0) return {false, "CLI run failed: " + cmd};
    texts.push_back(slurp(out));
  }
  const bool same = !texts[0].empty() && texts[0] == texts[1];
  return {same, fmt("two CLI executions of one config + seed: reports of %zu and %zu bytes, identical: %s",
                    texts[0].size(), texts[1].size(), same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  Shared sh;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) throw std::runtime_error("missing value for " + a);
      return argv[++i];
    };
    if (a == "--cache") sh.opt.cache = next();
    else if (a == "--cli") sh.opt.cli = next();
    else if (a == "--work") sh.opt.work = next();
    else if (a == "--only") {
      for (const auto& s : detail::split_list(next())) sh.opt.only.insert(std::stoi(s));
    } else if (a == "--expect-fail") {
      for (const auto& s : detail::split_list(next())) sh.opt.expect_fail.insert(std::stoi(s));
    } else {
      std::cerr << "usage: acceptance [--cache DIR] [--cli PATH] [--work DIR] [--only 1,2,...] [--expect-fail 7]\n";
      return 2;
    }
  }
  sh.base.cache_dir = sh.opt.cache;

  const std::vector<std::pair<int, std::function<Outcome(Shared&)>>> all = {
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {6, criterion_6},
      {7, criterion_7}, {8, criterion_8}, {9, criterion_9}, {10, criterion_10}, {5, criterion_5}};
  std::map<int, Outcome> results;
  for (const auto& [n, fn] : all) {
    if (!sh.opt.only.empty() && !sh.opt.only.count(n)) continue;
    const auto t0 = Clock::now();
    try {
      results[n] = fn(sh);
    } catch (const std::exception& e) {
      results[n] = {false, std::string("error: ") + e.what()};
    }
    note(fmt("criterion %d done in %.1f s: %s", n, since(t0), results[n].pass ? "PASS" : "FAIL"));
  }
  int failed = 0, unexpected = 0;
  for (const auto& [n, r] : results) {
    const bool expected = sh.opt.expect_fail.count(n) != 0;
    std::cout << fmt("criterion %2d  %s  ", n, r.pass ? "PASS" : "FAIL") << r.detail
              << (expected && !r.pass ? "  [known failure]" : "") << '\n';
    failed += r.pass ? 0 : 1;
    unexpected += r.pass || expected ? 0 : 1;
  }
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed";
  if (failed != unexpected) std::cout << " (" << failed - unexpected << " known failure)";
  std::cout << '\n';
  return unexpected == 0 ? 0 : 1;
}
