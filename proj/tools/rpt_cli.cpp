// SPDX-License-Identifier: Apache-2.0
// rpt: data generation, frozen-encoder pre-training, prompt training and
// benchmarking from the command line.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "rpt/harness/benchmark.hpp"
#include "rpt/harness/surrogate.hpp"
#include "rpt/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace rpt;

namespace {

struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::string config_file;
  bool quiet = false;

  void attach(CLI::App* app, bool with_benchmark) {
    for (const auto& [key, def] : config_entries(RunConfig{})) {
      if (key == "benchmark" && !with_benchmark) continue;
      std::string names = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) names += ",--" + dashed;
      app->add_option(names, values[key], "default: " + def)->group("Run configuration");
    }
    app->add_option("--config", config_file, "key = value file; its entries override flags")
        ->check(CLI::ExistingFile);
    app->add_flag("-q,--quiet", quiet, "suppress progress output");
  }

  RunConfig resolve(RunConfig base = {}) const {
    for (const auto& [key, def] : config_entries(RunConfig{})) {
      auto it = values.find(key);
      if (it != values.end() && !it->second.empty()) apply_config_value(base, key, it->second);
    }
    if (!config_file.empty()) base = load_config(config_file, base);
    base.validate();
    return base;
  }

  ProgressFn progress() const {
    if (quiet) return {};
    return [](const std::string& s) { std::cerr << "[rpt] " << s << '\n'; };
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DualEncoder frozen_encoder(const RunConfig& c, const ProgressFn& progress, double* seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  DualEncoder enc = load_or_pretrain_surrogate(surrogate_options(c), c.cache_dir, progress);
  if (seconds != nullptr) *seconds = seconds_since(t0);
  return enc;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

void cmd_gen_data(const RunConfig& c, const fs::path& out, bool points, const ProgressFn& progress) {
  fs::create_directories(out);
  std::size_t clouds = 0;
  for (const Manifest& m : protocol_manifests(c)) {
    save_manifest(out / (m.name + ".manifest"), m);
    if (progress) progress("wrote " + (out / (m.name + ".manifest")).string() + " (" + std::to_string(m.records.size()) + " records)");
    if (!points) continue;
    const fs::path dir = out / m.name;
    fs::create_directories(dir);
    for (const auto& r : m.records) {
      std::ofstream os(dir / (r.class_name + "-" + r.split + "-" + std::to_string(r.seed) + ".rpc"), std::ios::binary);
      write_point_cache(os, materialize(r));
      ++clouds;
    }
  }
  std::ostringstream bank;
  write_description_bank(bank, build_description_bank(c.classes, c.n_t, c.data_seed));
  write_text(out / "descriptions.txt", bank.str());
  write_text(out / "run.cfg", format_config(c));
  std::cout << "data written to " << out.string();
  if (points) std::cout << " (" << clouds << " point clouds)";
  std::cout << '\n';
}

void cmd_train(const RunConfig& c, const fs::path& out, const ProgressFn& progress) {
  double surrogate_seconds = 0.0;
  const DualEncoder enc = frozen_encoder(c, progress, &surrogate_seconds);
  const auto t0 = std::chrono::steady_clock::now();
  SampleStore store(enc);
  const BenchmarkSplit split = protocol_split(c);
  MetricsReport rep;
  rep.config = c;
  rep.ensemble_label = ensemble_label(c);
  fs::create_directories(out);
  for (auto seed : c.seeds) {
    if (progress) progress("training seed " + std::to_string(seed));
    const BenchmarkSplit fs_split = sample_few_shot(split, c.shots, seed);
    const TrainResult tr = run_training(store, fs_split, TrainSettings::from(c), seed, progress);
    save_checkpoint(out / ("prompts-seed" + std::to_string(seed) + ".ckpt"), prompt_checkpoint(tr.eval_prompts));
    RunRecord r;
    r.label = constraint_label(c.mac, c.tdc, c.mec);
    r.metrics = detail::protocol_metrics(c, store, split, &tr.eval_prompts);
    r.curve = tr.epochs;
    r.final_train = tr.final_train;
    r.final_train_accuracy = tr.final_train_accuracy;
    r.steps = tr.steps;
    rep.timing.optimizer_steps += r.steps;
    rep.timing.epochs_run += r.curve.size();
    rep.per_seed.push_back({seed, {r}});
  }
  rep.aggregate = aggregate_runs(rep.per_seed);
  rep.timing.encoded_clouds = store.encoded();
  rep.timing.wallclock_recorded = c.record_wallclock;
  if (c.record_wallclock) {
    rep.timing.total_seconds = seconds_since(t0);
    rep.timing.surrogate_seconds = surrogate_seconds;
  }
  emit_report(rep, out / "train.json");
  std::cout << format_table(rep) << "prompts and report written to " << out.string() << '\n';
}

void cmd_benchmark(const RunConfig& c, fs::path out, const ProgressFn& progress) {
  double surrogate_seconds = 0.0;
  const DualEncoder enc = frozen_encoder(c, progress, &surrogate_seconds);
  const MetricsReport rep = run_benchmark(c, enc, progress, surrogate_seconds);
  if (out.empty()) out = fs::path("reports") / (protocol_name(c.protocol) + ".json");
  emit_report(rep, out);
  std::cout << format_table(rep) << "report written to " << out.string() << '\n';
}

void cmd_report(const fs::path& path, const std::string& format) {
  const MetricsReport rep = load_report(path);
  if (format == "table") std::cout << format_table(rep);
  else if (format == "json") std::cout << report_json_text(rep);
  else if (format == "csv") std::cout << format_curves_csv(rep);
  else if (format == "config") std::cout << format_config(rep.config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regulated prompt tuning for frozen point-cloud/text encoders"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, pre_flags, train_flags, bench_flags;

  auto* gen = app.add_subcommand("gen-data", "write the manifests and description bank of a configuration");
  std::string gen_out = "data";
  bool gen_points = false;
  gen->add_option("-o,--out", gen_out, "output directory");
  gen->add_flag("--points", gen_points, "also materialize every point cloud");
  gen_flags.attach(gen, true);

  auto* pre = app.add_subcommand("pretrain-frozen", "build (or load) the cached frozen encoder");
  pre_flags.attach(pre, false);

  auto* train = app.add_subcommand("train", "train prompts for each seed and save them");
  std::string train_out = "runs/train";
  train->add_option("-o,--out", train_out, "output directory");
  train_flags.attach(train, true);

  auto* bench = app.add_subcommand("benchmark", "run an evaluation protocol across seeds");
  std::string protocol;
  std::string bench_out;
  bench->add_option("protocol", protocol, "evaluation protocol")
      ->required()
      ->check(CLI::IsMember({"base-to-new", "cross-dataset", "corruption", "few-shot", "ablation"}));
  bench->add_option("-o,--out", bench_out, "report path (default reports/<protocol>.json)");
  bench_flags.attach(bench, false);

  auto* report = app.add_subcommand("report", "print a saved report");
  std::string report_path, report_format = "table";
  report->add_option("path", report_path, "report JSON")->required()->check(CLI::ExistingFile);
  report->add_option("-f,--format", report_format, "table, json, csv or config")
      ->check(CLI::IsMember({"table", "json", "csv", "config"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      cmd_gen_data(gen_flags.resolve(), gen_out, gen_points, gen_flags.progress());
    } else if (pre->parsed()) {
      const RunConfig c = pre_flags.resolve();
      double seconds = 0.0;
      const DualEncoder enc = frozen_encoder(c, pre_flags.progress(), &seconds);
      std::cout << "frozen encoder: " << enc.parameter_count() << " parameters, "
                << (fs::path(c.cache_dir) / ("surrogate-" + surrogate_key(surrogate_options(c)))).string() << '\n';
    } else if (train->parsed()) {
      cmd_train(train_flags.resolve(), train_out, train_flags.progress());
    } else if (bench->parsed()) {
      RunConfig base;
      base.protocol = parse_protocol(protocol);
      cmd_benchmark(bench_flags.resolve(base), bench_out, bench_flags.progress());
    } else if (report->parsed()) {
      cmd_report(report_path, report_format);
    }
  } catch (const std::exception& e) {
    std::cerr << "rpt: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
