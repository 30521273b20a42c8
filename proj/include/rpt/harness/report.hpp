// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rpt/harness/config.hpp"
#include "rpt/harness/metrics.hpp"
#include "rpt/harness/training.hpp"

namespace rpt {

using json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

using MetricList = std::vector<std::pair<std::string, double>>;

/// One trained (or zero-shot) configuration within one seed.
struct RunRecord {
  std::string label;
  MetricList metrics;             // accuracies in percent
  std::vector<EpochLog> curve;    // empty for zero-shot rows
  TermValues final_train;
  double final_train_accuracy = 0.0;
  std::size_t steps = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct SeedRecord {
  std::uint64_t seed = 0;
  std::vector<RunRecord> runs;

  friend bool operator==(const SeedRecord&, const SeedRecord&) = default;
};

struct AggregateRow {
  std::string label;
  std::vector<std::pair<std::string, SeedStats>> metrics;

  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

struct TimingInfo {
  bool wallclock_recorded = false;
  double total_seconds = 0.0;
  double surrogate_seconds = 0.0;
  std::size_t optimizer_steps = 0;
  std::size_t encoded_clouds = 0;
  std::size_t epochs_run = 0;

  friend bool operator==(const TimingInfo&, const TimingInfo&) = default;
};

struct MetricsReport {
  RunConfig config;
  std::string ensemble_label;  // e.g. "scaled (mu=15, sigma=1)"
  double zero_shot_floor = 0.0;
  std::vector<SeedRecord> per_seed;
  std::vector<AggregateRow> aggregate;
  TimingInfo timing;

  const AggregateRow& row(const std::string& label) const {
    for (const auto& r : aggregate)
      if (r.label == label) return r;
    throw Error("report has no aggregate row '" + label + "'");
  }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline const SeedStats& metric(const AggregateRow& row, const std::string& name) {
  for (const auto& [n, s] : row.metrics)
    if (n == name) return s;
  throw Error("aggregate row '" + row.label + "' has no metric '" + name + "'");
}

inline double metric(const RunRecord& run, const std::string& name) {
  for (const auto& [n, v] : run.metrics)
    if (n == name) return v;
  throw Error("run '" + run.label + "' has no metric '" + name + "'");
}

/// Mean/std over seeds for every run label, in first-seen order.
inline std::vector<AggregateRow> aggregate_runs(const std::vector<SeedRecord>& seeds) {
  std::vector<AggregateRow> rows;
  if (seeds.empty()) return rows;
  for (const auto& run : seeds.front().runs) {
    AggregateRow row;
    row.label = run.label;
    for (const auto& [name, v0] : run.metrics) {
      (void)v0;
      std::vector<double> vals;
      for (const auto& s : seeds)
        for (const auto& r : s.runs)
          if (r.label == run.label) vals.push_back(metric(r, name));
      row.metrics.emplace_back(name, aggregate_seeds(vals));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// JSON

inline json config_to_json(const RunConfig& c) {
  json j = json::object();
  for (const auto& [k, v] : config_entries(c)) {
    if (k == "benchmark" || k == "ensemble" || k == "cache_dir") {
      j[k] = v;
    } else if (k == "mac" || k == "tdc" || k == "mec" || k == "record_wallclock") {
      j[k] = v == "true";
    } else if (k == "classes") {
      j[k] = c.classes;
    } else if (k == "seeds") {
      j[k] = c.seeds;
    } else if (k == "shots_list") {
      j[k] = c.shots_list;
    } else if (v.find_first_of(".eE") != std::string::npos || k == "alpha" || k == "beta" || k == "gamma" ||
               k == "mu" || k == "sigma" || k == "tau" || k == "lr" || k == "momentum" || k == "clip" || k == "surrogate_lr") {
      j[k] = std::stod(v);
    } else {
      j[k] = std::stoull(v);
    }
  }
  j["resolved"] = {{"epochs", c.resolved_epochs()},
                   {"depth", c.resolved_depth()},
                   {"length", c.resolved_length()},
                   {"mu", c.resolved_ensemble().first},
                   {"sigma", c.resolved_ensemble().second}};
  return j;
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "resolved") continue;
    std::string s;
    if (v.is_string()) s = v.get<std::string>();
    else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
    else if (v.is_number_float()) s = detail::fmt_double(v.get<double>());
    else if (v.is_number()) s = std::to_string(v.get<std::uint64_t>());
    else if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += v[i].is_string() ? v[i].get<std::string>() : std::to_string(v[i].get<std::uint64_t>());
      }
    } else {
      throw Error("config field '" + k + "' has an unsupported JSON type");
    }
    apply_config_value(c, k, s);
  }
  return c;
}

inline json terms_to_json(const TermValues& t) {
  return {{"ce", t.ce}, {"l_p", t.l_p}, {"l_t", t.l_t}, {"l_d", t.l_d}, {"total", t.total}};
}

inline TermValues terms_from_json(const json& j) {
  return TermValues{j.at("ce").get<double>(), j.at("l_p").get<double>(), j.at("l_t").get<double>(),
                    j.at("l_d").get<double>(), j.at("total").get<double>()};
}

inline json report_to_json(const MetricsReport& r) {
  json out = json::object();
  out["schema_version"] = kReportSchemaVersion;
  out["config"] = config_to_json(r.config);
  json per_seed = json::array();
  for (const auto& s : r.per_seed) {
    json runs = json::array();
    for (const auto& run : s.runs) {
      json m = json::object();
      for (const auto& [k, v] : run.metrics) m[k] = v;
      json curve = json::array();
      for (const auto& e : run.curve)
        curve.push_back({{"epoch", e.epoch},
                         {"lr", e.lr},
                         {"loss", terms_to_json(e.mean)},
                         {"val_accuracy", e.val_accuracy},
                         {"seconds", e.seconds}});
      runs.push_back({{"label", run.label},
                      {"metrics", m},
                      {"final_train", terms_to_json(run.final_train)},
                      {"final_train_accuracy", run.final_train_accuracy},
                      {"steps", run.steps},
                      {"epochs", curve}});
    }
    per_seed.push_back({{"seed", s.seed}, {"runs", runs}});
  }
  out["per_seed"] = per_seed;
  json agg = json::array();
  for (const auto& row : r.aggregate) {
    json m = json::object();
    for (const auto& [k, s] : row.metrics) {
      json e = {{"mean", s.mean}};
      e["std"] = s.std ? json(*s.std) : json(nullptr);
      m[k] = e;
    }
    agg.push_back({{"label", row.label}, {"metrics", m}});
  }
  out["aggregate"] = {{"ensemble", r.ensemble_label}, {"zero_shot_floor", r.zero_shot_floor}, {"rows", agg}};
  out["timing"] = {{"wallclock_recorded", r.timing.wallclock_recorded},
                   {"total_seconds", r.timing.total_seconds},
                   {"surrogate_seconds", r.timing.surrogate_seconds},
                   {"optimizer_steps", r.timing.optimizer_steps},
                   {"encoded_clouds", r.timing.encoded_clouds},
                   {"epochs_run", r.timing.epochs_run}};
  return out;
}

inline MetricsReport report_from_json(const json& j) {
  for (const char* k : {"config", "per_seed", "aggregate", "timing"})
    if (!j.contains(k)) throw Error(std::string("report is missing the '") + k + "' section");
  if (j.value("schema_version", 0) != kReportSchemaVersion) throw Error("unsupported report schema version");
  MetricsReport r;
  r.config = config_from_json(j.at("config"));
  for (const auto& s : j.at("per_seed")) {
    SeedRecord sr;
    sr.seed = s.at("seed").get<std::uint64_t>();
    for (const auto& run : s.at("runs")) {
      RunRecord rr;
      rr.label = run.at("label").get<std::string>();
      for (const auto& [k, v] : run.at("metrics").items()) rr.metrics.emplace_back(k, v.get<double>());
      rr.final_train = terms_from_json(run.at("final_train"));
      rr.final_train_accuracy = run.at("final_train_accuracy").get<double>();
      rr.steps = run.at("steps").get<std::size_t>();
      for (const auto& e : run.at("epochs")) {
        EpochLog l;
        l.epoch = e.at("epoch").get<std::size_t>();
        l.lr = e.at("lr").get<double>();
        l.mean = terms_from_json(e.at("loss"));
        l.val_accuracy = e.at("val_accuracy").get<double>();
        l.seconds = e.at("seconds").get<double>();
        rr.curve.push_back(l);
      }
      sr.runs.push_back(std::move(rr));
    }
    r.per_seed.push_back(std::move(sr));
  }
  const json& agg = j.at("aggregate");
  r.ensemble_label = agg.at("ensemble").get<std::string>();
  r.zero_shot_floor = agg.at("zero_shot_floor").get<double>();
  for (const auto& row : agg.at("rows")) {
    AggregateRow ar;
    ar.label = row.at("label").get<std::string>();
    for (const auto& [k, v] : row.at("metrics").items()) {
      SeedStats s;
      s.mean = v.at("mean").get<double>();
      if (!v.at("std").is_null()) s.std = v.at("std").get<double>();
      ar.metrics.emplace_back(k, s);
    }
    r.aggregate.push_back(std::move(ar));
  }
  const json& t = j.at("timing");
  r.timing.wallclock_recorded = t.at("wallclock_recorded").get<bool>();
  r.timing.total_seconds = t.at("total_seconds").get<double>();
  r.timing.surrogate_seconds = t.at("surrogate_seconds").get<double>();
  r.timing.optimizer_steps = t.at("optimizer_steps").get<std::size_t>();
  r.timing.encoded_clouds = t.at("encoded_clouds").get<std::size_t>();
  r.timing.epochs_run = t.at("epochs_run").get<std::size_t>();
  return r;
}

inline std::string report_json_text(const MetricsReport& r) { return report_to_json(r).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Human-readable table and CSV curves

namespace detail {

inline std::string cell(const SeedStats& s) {
  char buf[48];
  if (s.std)
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", s.mean, *s.std);
  else
    std::snprintf(buf, sizeof buf, "%.2f", s.mean);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t w) {
  // Column widths count code points so that "±" lines up.
  std::size_t len = 0;
  for (unsigned char ch : s) len += (ch & 0xC0) != 0x80 ? 1 : 0;
  return s + std::string(w > len ? w - len : 0, ' ');
}

}  // namespace detail

/// One row per aggregate label, one column per metric of the first row.
inline std::string format_table(const MetricsReport& r) {
  std::ostringstream os;
  os << "benchmark: " << protocol_name(r.config.protocol) << "   seeds: " << r.per_seed.size()
     << "   ensemble: " << r.ensemble_label << "\n";
  if (r.aggregate.empty()) return os.str();
  std::vector<std::string> cols;
  for (const auto& [k, s] : r.aggregate.front().metrics) cols.push_back(k);
  std::size_t lw = 8;
  for (const auto& row : r.aggregate) lw = std::max(lw, row.label.size() + 2);
  const std::size_t cw = 17;
  os << detail::pad("Method", lw);
  for (const auto& c : cols) os << detail::pad(c, cw);
  os << '\n' << std::string(lw + cw * cols.size(), '-') << '\n';
  for (const auto& row : r.aggregate) {
    os << detail::pad(row.label, lw);
    for (const auto& c : cols) {
      std::string v = "-";
      for (const auto& [k, s] : row.metrics)
        if (k == c) v = detail::cell(s);
      os << detail::pad(v, cw);
    }
    os << '\n';
  }
  return os.str();
}

inline std::string format_curves_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "seed,run,epoch,lr,ce,l_p,l_t,l_d,total,val_accuracy\n";
  for (const auto& s : r.per_seed)
    for (const auto& run : s.runs)
      for (const auto& e : run.curve)
        os << s.seed << ',' << run.label << ',' << e.epoch << ',' << e.lr << ',' << e.mean.ce << ',' << e.mean.l_p
           << ',' << e.mean.l_t << ',' << e.mean.l_d << ',' << e.mean.total << ',' << e.val_accuracy << '\n';
  return os.str();
}

/// Writes `<stem>.json`, `<stem>.txt` and `<stem>.curves.csv` for a path
/// `<stem>.json` (or any other name, used as the stem).
inline void emit_report(const MetricsReport& r, const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".json") stem.replace_extension();
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write '" + p.string() + "'");
    os << text;
    if (!os) throw Error("failed writing '" + p.string() + "'");
  };
  write(stem.string() + ".json", report_json_text(r));
  write(stem.string() + ".txt", format_table(r));
  write(stem.string() + ".curves.csv", format_curves_csv(r));
}

inline MetricsReport load_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read report '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error("report '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return report_from_json(j);
}

}  // namespace rpt
