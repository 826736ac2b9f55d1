#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scdem/harness/experiment.hpp"

namespace scdem {

namespace detail {

// Shortest decimal that round-trips, so reports are byte-stable.
inline std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const MetricsReport& m) {
  return {{"mode", to_string(m.mode)},
          {"accuracy_matrix", m.accuracy_matrix},
          {"test_sizes", m.test_sizes},
          {"average_micro", m.average_micro},
          {"average_macro", m.average_macro},
          {"last", m.last},
          {"forgetting", m.forgetting},
          {"routing_accuracy", m.routing_accuracy},
          {"seen_average", m.seen_average}};
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["variant"] = to_string(r.variant);
  j["config"] = to_json(r.config);
  j["pretrain"] = nlohmann::json::array();
  for (const auto& p : r.pretrain) {
    j["pretrain"].push_back({{"backbone", p.backbone_id},
                             {"source_accuracy", p.source_accuracy},
                             {"epochs_run", p.epochs_run},
                             {"reached_target", p.reached_target},
                             {"warning", p.warning}});
  }
  j["tasks"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.class_sets.size(); ++i) {
    j["tasks"].push_back({{"task", i + 1}, {"domain", r.task_domains[i]}, {"classes", r.class_sets[i]}});
  }
  j["task_il"] = to_json(r.metrics.task_il);
  j["class_il"] = to_json(r.metrics.class_il);
  return j;
}

/// Rows: after_task, then one column per test task.
inline std::string accuracy_matrix_csv(const nlohmann::json& metrics) {
  const auto& a = metrics.at("accuracy_matrix");
  std::string out = "after_task";
  for (std::size_t j = 0; j < a.size(); ++j) out += ",task" + std::to_string(j + 1);
  out += "\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    out += std::to_string(i + 1);
    for (const auto& v : a[i]) out += "," + detail::fmt(v.get<double>());
    out += "\n";
  }
  return out;
}

/// Accuracy-vs-task curves: mean accuracy on tasks seen so far, after each task.
inline std::string series_csv(const nlohmann::json& report) {
  const auto& til = report.at("task_il").at("seen_average");
  const auto& cil = report.at("class_il").at("seen_average");
  std::string out = "task,task_il_seen_average,class_il_seen_average\n";
  for (std::size_t i = 0; i < til.size(); ++i) {
    out += std::to_string(i + 1) + "," + detail::fmt(til[i].get<double>()) + "," + detail::fmt(cil[i].get<double>()) +
           "\n";
  }
  return out;
}

inline std::string summary_csv(const nlohmann::json& report) {
  std::string out = "mode,average_micro,average_macro,last,mean_forgetting,routing_accuracy\n";
  for (const char* mode : {"task_il", "class_il"}) {
    const auto& m = report.at(mode);
    double f = 0.0;
    for (const auto& v : m.at("forgetting")) f += v.get<double>();
    f /= static_cast<double>(std::max<std::size_t>(1, m.at("forgetting").size()));
    out += std::string(mode) + "," + detail::fmt(m.at("average_micro").get<double>()) + "," +
           detail::fmt(m.at("average_macro").get<double>()) + "," + detail::fmt(m.at("last").get<double>()) + "," +
           detail::fmt(f) + "," + detail::fmt(m.at("routing_accuracy").get<double>()) + "\n";
  }
  return out;
}

inline std::string diagnostics_csv(const std::vector<StepDiagnostics>& diags) {
  std::string out = "step,task,L_cls,L_COM,L_Fused,L_FDC,total\n";
  for (const auto& d : diags) {
    out += std::to_string(d.step) + "," + std::to_string(d.task) + "," + detail::fmt(d.cls) + "," +
           detail::fmt(d.com) + "," + detail::fmt(d.fused) + "," + detail::fmt(d.fdc) + "," + detail::fmt(d.total) +
           "\n";
  }
  return out;
}

/// Writes report.json, summary/accuracy/series CSVs and the per-step
/// diagnostics into `dir`.
inline void write_run_outputs(const std::filesystem::path& dir, const RunReport& r) {
  std::filesystem::create_directories(dir);
  const nlohmann::json j = to_json(r);
  detail::write_text(dir / "report.json", j.dump(2) + "\n");
  detail::write_text(dir / "summary.csv", summary_csv(j));
  detail::write_text(dir / "accuracy_task_il.csv", accuracy_matrix_csv(j.at("task_il")));
  detail::write_text(dir / "accuracy_class_il.csv", accuracy_matrix_csv(j.at("class_il")));
  detail::write_text(dir / "series.csv", series_csv(j));
  detail::write_text(dir / "diagnostics.csv", diagnostics_csv(r.diagnostics));
}

/// Per-variant results over a shared seed list.
struct AblationReport {
  Variant variant = Variant::full;
  std::vector<std::uint64_t> seeds;
  std::vector<RunReport> runs;

  std::vector<double> macro_averages(EvalMode mode) const {
    std::vector<double> out;
    for (const auto& r : runs)
      out.push_back(mode == EvalMode::task_il ? r.metrics.task_il.average_macro : r.metrics.class_il.average_macro);
    return out;
  }
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Runs every variant on every seed. Backbones are pretrained once per seed
/// and shared by all variants, so comparisons are paired.
inline std::vector<AblationReport> run_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                                const std::vector<Variant>& variants) {
  if (seeds.empty()) throw ConfigurationError("ablation needs at least one seed");
  std::vector<AblationReport> out;
  for (auto v : variants) out.push_back({v, seeds, {}});
  for (auto seed : seeds) {
    const PretrainedBackbones bbs = pretrain_backbones(cfg, seed);
    for (auto& rep : out) rep.runs.push_back(run_experiment(cfg, seed, rep.variant, bbs).report);
  }
  return out;
}

inline nlohmann::json to_json(const AblationReport& a) {
  nlohmann::json j;
  j["variant"] = to_string(a.variant);
  j["seeds"] = a.seeds;
  for (auto mode : {EvalMode::task_il, EvalMode::class_il}) {
    const auto v = a.macro_averages(mode);
    j[to_string(mode)] = {{"average_macro_per_seed", v}, {"mean", mean_of(v)}, {"stddev", stddev_of(v)}};
  }
  j["runs"] = nlohmann::json::array();
  for (const auto& r : a.runs) j["runs"].push_back(to_json(r));
  return j;
}

inline void write_ablation_outputs(const std::filesystem::path& dir, const std::vector<AblationReport>& reports) {
  std::filesystem::create_directories(dir);
  std::string table = "variant,seed,task_il_average_macro,class_il_average_macro\n";
  for (const auto& a : reports) {
    detail::write_text(dir / ("ablation_" + to_string(a.variant) + ".json"), to_json(a).dump(2) + "\n");
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
      table += to_string(a.variant) + "," + std::to_string(a.seeds[i]) + "," +
               detail::fmt(a.runs[i].metrics.task_il.average_macro) + "," +
               detail::fmt(a.runs[i].metrics.class_il.average_macro) + "\n";
    }
  }
  detail::write_text(dir / "ablation_summary.csv", table);
}

}  // namespace scdem
