// Command-line entry point: pretrain, run, eval, ablate, report.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "scdem/scdem.hpp"

namespace fs = std::filesystem;
using namespace scdem;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigurationError("bad seed '" + item + "' in --seeds");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigurationError("--seeds must list at least one seed");
  return out;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + out + "' for writing");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void log_pretrain(const std::vector<PretrainInfo>& info) {
  for (const auto& p : info) {
    std::cerr << "backbone " << p.backbone_id << ": source accuracy " << p.source_accuracy << " after " << p.epochs_run
              << " epochs\n";
    if (!p.warning.empty()) std::cerr << "  warning: " << p.warning << "\n";
  }
}

int cmd_pretrain(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  const ExperimentConfig cfg = load_config(config);
  const auto bbs = pretrain_backbones(cfg, seed.value_or(cfg.seed));
  log_pretrain(bbs.info);
  save_checkpoint(make_state(bbs.backbones, cfg.train), out);
  std::cerr << "wrote " << out << "\n";
  return 0;
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& variant,
            const std::string& out_dir, const std::string& checkpoint) {
  const ExperimentConfig cfg = load_config(config);
  const std::uint64_t s = seed.value_or(cfg.seed);
  const auto bbs = pretrain_backbones(cfg, s);
  log_pretrain(bbs.info);
  const RunResult r = run_experiment(cfg, s, parse_variant(variant), bbs);
  write_run_outputs(out_dir, r.report);
  if (!checkpoint.empty()) save_checkpoint(r.state, checkpoint);
  std::cerr << "task-IL average " << r.report.metrics.task_il.average_macro << ", class-IL average "
            << r.report.metrics.class_il.average_macro << "\n";
  return 0;
}

int cmd_eval(const std::string& config, std::optional<std::uint64_t> seed, const std::string& checkpoint,
             const std::string& mode_text, const std::string& out) {
  const ExperimentConfig cfg = load_config(config);
  const EvalMode mode = parse_eval_mode(mode_text);
  const TrainState state = load_checkpoint(checkpoint);
  const TaskStream stream = build_stream(cfg, seed.value_or(cfg.seed));
  const auto row = evaluate_row(state, stream, mode, cfg.routing);
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["experts"] = state.experts.size();
  j["tasks"] = nlohmann::json::array();
  std::size_t correct = 0, total = 0, routed = 0;
  double macro = 0.0;
  for (std::size_t t = 0; t < row.size(); ++t) {
    nlohmann::json e{{"task", t + 1}, {"accuracy", row[t].accuracy()}, {"correct", row[t].correct},
                     {"total", row[t].total}};
    if (mode == EvalMode::class_il) e["routed_correct"] = row[t].routed_correct;
    j["tasks"].push_back(e);
    correct += row[t].correct;
    total += row[t].total;
    routed += row[t].routed_correct;
    macro += row[t].accuracy();
  }
  j["average_micro"] = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  j["average_macro"] = row.empty() ? 0.0 : macro / static_cast<double>(row.size());
  if (mode == EvalMode::class_il) {
    j["routing_accuracy"] = total ? static_cast<double>(routed) / static_cast<double>(total) : 0.0;
  }
  emit(j.dump(2) + "\n", out);
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& seeds, const std::string& out_dir, bool all_off) {
  const ExperimentConfig cfg = load_config(config);
  std::vector<Variant> variants{Variant::full, Variant::no_com, Variant::no_ot, Variant::no_attention};
  if (all_off) variants.push_back(Variant::all_off);
  const auto reports = run_ablation(cfg, parse_seeds(seeds), variants);
  write_ablation_outputs(out_dir, reports);
  for (const auto& a : reports) {
    const auto v = a.macro_averages(EvalMode::task_il);
    std::cerr << to_string(a.variant) << ": task-IL average " << mean_of(v) << " +- " << stddev_of(v) << "\n";
  }
  return 0;
}

int cmd_report(const std::string& input, const std::string& format, const std::string& out) {
  const nlohmann::json j = nlohmann::json::parse(read_text(input));
  if (!j.contains("task_il") || !j.contains("class_il")) throw ParseError(input + ": not a run report");
  if (format == "json") {
    emit(nlohmann::json{{"task_il", j["task_il"]}, {"class_il", j["class_il"]}}.dump(2) + "\n", out);
  } else if (format == "csv") {
    emit(summary_csv(j) + "\ntask_il\n" + accuracy_matrix_csv(j["task_il"]) + "\nclass_il\n" +
             accuracy_matrix_csv(j["class_il"]),
         out);
  } else if (format == "series") {
    emit(series_csv(j), out);
  } else {
    throw ConfigurationError("unknown report format '" + format + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning with dynamic experts over frozen backbones"};
  app.require_subcommand(1);

  std::string config, out, out_dir, checkpoint, mode = "task_il", seeds = "1,2,3,4,5", variant = "full";
  std::string input, format = "csv";
  std::optional<std::uint64_t> seed;
  bool all_off = false;

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain stand-in backbones and store them");
  pretrain->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--seed", seed, "Seed (defaults to the config's)");
  pretrain->add_option("--out", out, "Checkpoint to write")->required();

  auto* run = app.add_subcommand("run", "Train on the configured task stream and write reports");
  run->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Seed (defaults to the config's)");
  run->add_option("--variant", variant, "full, no_com, no_ot, no_attention or all_off");
  run->add_option("--out-dir", out_dir, "Directory for report files")->required();
  run->add_option("--checkpoint", checkpoint, "Also save the final state here");

  auto* eval = app.add_subcommand("eval", "Evaluate a saved state on the configured stream");
  eval->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  eval->add_option("--seed", seed, "Seed for stream construction (defaults to the config's)");
  eval->add_option("--checkpoint", checkpoint, "Saved state")->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", mode, "task_il or class_il");
  eval->add_option("--out", out, "Output JSON (stdout if omitted)");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation variants on a shared seed list");
  ablate->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "Comma-separated seeds");
  ablate->add_option("--out-dir", out_dir, "Directory for ablation reports")->required();
  ablate->add_flag("--include-all-off", all_off, "Also run with every regularizer disabled");

  auto* report = app.add_subcommand("report", "Render a run's report.json as CSV, JSON or plot series");
  report->add_option("--input", input, "report.json written by run")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "csv, json or series");
  report->add_option("--out", out, "Output file (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) return cmd_pretrain(config, seed, out);
    if (*run) return cmd_run(config, seed, variant, out_dir, checkpoint);
    if (*eval) return cmd_eval(config, seed, checkpoint, mode, out);
    if (*ablate) return cmd_ablate(config, seeds, out_dir, all_off);
    if (*report) return cmd_report(input, format, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
