#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "scdem/harness/checkpoint.hpp"
#include "scdem/harness/config.hpp"
#include "scdem/harness/metrics.hpp"
#include "scdem/harness/stream.hpp"

namespace scdem {

/// Configurations compared in the ablation study.
enum class Variant { full, no_com, no_ot, no_attention, all_off };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_com: return "no_com";
    case Variant::no_ot: return "no_ot";
    case Variant::no_attention: return "no_attention";
    case Variant::all_off: return "all_off";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::full, Variant::no_com, Variant::no_ot, Variant::no_attention, Variant::all_off})
    if (s == to_string(v)) return v;
  throw ConfigurationError("unknown variant '" + std::string(s) + "'");
}

/// no_attention swaps the attention-fused OT term for the plain per-layer
/// one at the same weight; no_ot drops OT regularization entirely.
inline TrainConfig apply_variant(TrainConfig cfg, Variant v) {
  const double ot_weight = cfg.lambda_fused + cfg.lambda_fdc;
  switch (v) {
    case Variant::full: break;
    case Variant::no_com: cfg.lambda_com = 0.0; break;
    case Variant::no_ot:
      cfg.mode = RegularizerMode::none;
      cfg.lambda_fused = cfg.lambda_fdc = 0.0;
      break;
    case Variant::no_attention:
      cfg.mode = RegularizerMode::fdc;
      cfg.lambda_fused = 0.0;
      cfg.lambda_fdc = ot_weight;
      break;
    case Variant::all_off:
      cfg.lambda_com = 0.0;
      cfg.mode = RegularizerMode::none;
      cfg.lambda_fused = cfg.lambda_fdc = 0.0;
      break;
  }
  return cfg;
}

/// Derives an independent 64-bit seed for a named purpose.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + purpose + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct PretrainInfo {
  std::size_t backbone_id = 0;
  double source_accuracy = 0.0;
  std::size_t epochs_run = 0;
  bool reached_target = false;
  std::string warning;
};

struct PretrainedBackbones {
  std::vector<Backbone> backbones;
  std::vector<PretrainInfo> info;
};

/// Pretrains `count` backbones, each on its own synthetic source task, or
/// loads them from the configured checkpoint.
inline PretrainedBackbones pretrain_backbones(const ExperimentConfig& cfg, std::uint64_t seed) {
  PretrainedBackbones out;
  if (!cfg.backbones.checkpoint.empty()) {
    TrainState loaded = load_checkpoint(cfg.backbones.checkpoint);
    if (loaded.backbones.size() != cfg.backbones.count) {
      throw ConfigurationError("backbone checkpoint holds " + std::to_string(loaded.backbones.size()) +
                               " backbones, config expects " + std::to_string(cfg.backbones.count));
    }
    for (auto& bb : loaded.backbones) {
      if (bb.input_dim() != cfg.data.input_dim) throw DimensionError("checkpoint backbone input width mismatch");
      out.info.push_back({bb.id(), 0.0, 0, true, "loaded from " + cfg.backbones.checkpoint});
      out.backbones.push_back(std::move(bb));
    }
    return out;
  }
  for (std::size_t k = 1; k <= cfg.backbones.count; ++k) {
    const SplitDataset source =
        synth_gaussian_tasks(cfg.backbones.source_classes, cfg.data.input_dim, cfg.backbones.source_per_class,
                             cfg.backbones.source_separation, derive_seed(seed, 1000 + k), "source" + std::to_string(k));
    PretrainResult r = pretrain_backbone(k, cfg.backbones.arch, source.train, source.test, source.num_classes,
                                         cfg.backbones.pretrain, derive_seed(seed, 2000 + k));
    out.info.push_back({k, r.source_accuracy, r.epochs_run, r.reached_target, r.warning});
    out.backbones.push_back(std::move(r.backbone));
  }
  return out;
}

/// The task stream described by the config's data section.
inline TaskStream build_stream(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<DomainData> domains;
  for (std::size_t i = 0; i < cfg.data.domains.size(); ++i) {
    const auto& d = cfg.data.domains[i];
    if (d.kind == "synthetic") {
      SplitDataset s = synth_gaussian_tasks(d.n_classes, cfg.data.input_dim, d.per_class, d.separation,
                                            derive_seed(seed, 3000 + i), d.name);
      domains.push_back({d.name, std::move(s.train), std::move(s.test), d.n_classes});
    } else {
      domains.push_back({d.name, load_dataset(d.train_path, cfg.data.input_dim, d.n_classes, Split::train),
                         load_dataset(d.test_path, cfg.data.input_dim, d.n_classes, Split::test), d.n_classes});
    }
  }
  if (domains.size() == 1) return build_class_incremental_stream(domains.front(), cfg.data.steps_per_domain);
  return build_multi_domain_stream(domains, cfg.data.steps_per_domain);
}

struct RunReport {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
  std::vector<PretrainInfo> pretrain;
  std::vector<std::vector<std::size_t>> class_sets;
  std::vector<std::string> task_domains;
  StreamOutcome metrics;
  std::vector<StepDiagnostics> diagnostics;
};

struct RunResult {
  RunReport report;
  TrainState state;
};

/// Builds the stream and trains the chosen variant on it.
inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, Variant variant,
                                const PretrainedBackbones& backbones, const StepObserver& observer = {}) {
  cfg.validate();
  TrainConfig tcfg = apply_variant(cfg.train, variant);
  tcfg.seed = derive_seed(seed, 4000);
  const TaskStream stream = build_stream(cfg, seed);

  RunResult out{RunReport{}, make_state(backbones.backbones, tcfg)};
  out.report.metrics = run_stream(out.state, stream, tcfg, cfg.routing, observer);
  out.report.config = cfg;
  out.report.config.train = tcfg;
  out.report.seed = seed;
  out.report.variant = variant;
  out.report.pretrain = backbones.info;
  for (const auto& t : stream.tasks) {
    out.report.class_sets.push_back(t.class_set);
    out.report.task_domains.push_back(t.domain);
  }
  out.report.diagnostics = out.state.diagnostics;
  return out;
}

inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, Variant variant = Variant::full) {
  return run_experiment(cfg, seed, variant, pretrain_backbones(cfg, seed));
}

}  // namespace scdem
