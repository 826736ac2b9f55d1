#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scdem/backbones.hpp"
#include "scdem/experts.hpp"
#include "scdem/harness/dataset.hpp"
#include "scdem/regularizers/losses.hpp"

namespace scdem {

enum class RegularizerMode { fused, fdc, both, none };

inline RegularizerMode parse_regularizer_mode(std::string_view s) {
  if (s == "fused") return RegularizerMode::fused;
  if (s == "fdc") return RegularizerMode::fdc;
  if (s == "both") return RegularizerMode::both;
  if (s == "none") return RegularizerMode::none;
  throw ConfigurationError("unknown regularizer_mode '" + std::string(s) + "'");
}

inline std::string to_string(RegularizerMode m) {
  switch (m) {
    case RegularizerMode::fused: return "fused";
    case RegularizerMode::fdc: return "fdc";
    case RegularizerMode::both: return "both";
    case RegularizerMode::none: return "none";
  }
  return "?";
}

struct TrainConfig {
  double lambda_cls = 1.0;
  double lambda_com = 1.0;
  double lambda_fused = 1.0;
  double lambda_fdc = 0.0;
  std::size_t epochs_per_task = 20;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  std::size_t expert_dim = 64;
  OTConfig ot{};
  std::uint64_t seed = 0;
  RegularizerMode mode = RegularizerMode::fused;

  void validate() const {
    for (double l : {lambda_cls, lambda_com, lambda_fused, lambda_fdc}) {
      if (!(l >= 0.0)) throw ConfigurationError("loss weights must be nonnegative");
    }
    if (batch_size < 1) throw ConfigurationError("batch_size must be >= 1");
    if (expert_dim < 1) throw ConfigurationError("expert_dim must be >= 1");
    const bool fused_off = mode == RegularizerMode::fdc || mode == RegularizerMode::none;
    const bool fdc_off = mode == RegularizerMode::fused || mode == RegularizerMode::none;
    if (fused_off && lambda_fused != 0.0) {
      throw ConfigurationError("regularizer_mode " + to_string(mode) + " requires lambda_fused == 0");
    }
    if (fdc_off && lambda_fdc != 0.0) {
      throw ConfigurationError("regularizer_mode " + to_string(mode) + " requires lambda_fdc == 0");
    }
    ot.validate();
  }
};

struct StepDiagnostics {
  std::size_t step = 0;
  std::size_t task = 0;  // 1-based
  double cls = 0.0;
  double com = 0.0;
  double fused = 0.0;
  double fdc = 0.0;
  double total = 0.0;
};

/// Everything the training loop mutates between tasks.
struct TrainState {
  std::vector<Backbone> backbones;
  std::vector<BackboneSnapshot> snapshots;  // latest set only
  ExpertRegistry experts;
  std::vector<Selector> selectors;  // re-created for every task after the first
  std::size_t expert_dim = 64;
  std::size_t tasks_trained = 0;
  std::size_t global_step = 0;
  Rng rng{0};
  std::vector<StepDiagnostics> diagnostics;

  std::size_t combined_dim() const {
    std::size_t d = 0;
    for (const auto& bb : backbones) d += bb.feature_dim();
    return d;
  }
};

inline TrainState make_state(std::vector<Backbone> backbones, const TrainConfig& cfg) {
  if (backbones.empty()) throw ConfigurationError("at least one backbone is required");
  TrainState s;
  s.backbones = std::move(backbones);
  for (auto& bb : s.backbones) {
    bb.freeze_trunk();
    bb.set_tail_trainable(true);
  }
  s.expert_dim = cfg.expert_dim;
  s.rng = Rng(cfg.seed);
  return s;
}

struct LossBreakdown {
  Tensor total;
  double cls = 0.0;
  double com = 0.0;
  double fused = 0.0;
  double fdc = 0.0;
};

/// Objective for one minibatch of the newest expert's task:
///   l_cls*CE + [t > 1] (l_com*COM + l_fused*Fused + l_fdc*FDC).
/// `local_labels` index into the newest expert's class set.
inline LossBreakdown total_loss(const TrainState& state, const Tensor& x, const std::vector<std::size_t>& local_labels,
                                const TrainConfig& cfg) {
  if (state.experts.empty()) throw ContractError("total_loss: no current expert");
  const std::size_t t = state.experts.size();
  const Expert& current = state.experts.back();

  const LayerFeatures live = collect_layers(state.backbones, x);
  std::vector<Tensor> last;
  for (const auto& layers : live) last.push_back(layers.back());
  const Tensor combined = concat(last);

  LossBreakdown out;
  const Tensor ce = cross_entropy(softmax(current.logits(combined)), local_labels);
  out.cls = ce.item();
  std::vector<Tensor> terms{scale(ce, cfg.lambda_cls)};

  if (t > 1) {
    const bool want_com = cfg.lambda_com > 0.0;
    const bool want_fused = cfg.lambda_fused > 0.0;
    const bool want_fdc = cfg.lambda_fdc > 0.0;
    if (want_com || want_fused || want_fdc) {
      if (state.snapshots.size() != state.backbones.size()) throw ContractError("total_loss: snapshots missing");
      const LayerFeatures frozen = collect_layers(state.snapshots, x);
      if (want_com) {
        std::vector<Tensor> frozen_last;
        for (const auto& layers : frozen) frozen_last.push_back(layers.back());
        const std::span<const Expert> prior(&state.experts[0], t - 1);
        const Tensor com = com_loss(prior, combined, concat(frozen_last));
        out.com = com.item();
        terms.push_back(scale(com, cfg.lambda_com));
      }
      if (want_fused) {
        const Tensor fused = fused_loss(live, frozen, state.selectors, cfg.ot);
        out.fused = fused.item();
        terms.push_back(scale(fused, cfg.lambda_fused));
      }
      if (want_fdc) {
        const Tensor fdc = fdc_loss(live, frozen, cfg.ot);
        out.fdc = fdc.item();
        terms.push_back(scale(fdc, cfg.lambda_fdc));
      }
    }
  }
  out.total = sum_scalars(terms);
  return out;
}

/// Parameters updated while training the newest task: its expert, every
/// backbone tail, and (after the first task) the selectors.
inline ParamSet task_parameters(const TrainState& state) {
  ParamSet set;
  for (const auto& bb : state.backbones) bb.register_tail(set, "backbone" + std::to_string(bb.id()));
  if (!state.experts.empty()) state.experts.back().register_params(set, "expert" + std::to_string(state.experts.size()));
  for (const auto& sel : state.selectors) sel.register_params(set, "selector" + std::to_string(sel.backbone_id()));
  return set;
}

/// Called once per step after gradients are computed and before the update.
using StepObserver = std::function<void(const TrainState&, const ParamSet&, const StepDiagnostics&)>;

/// Trains the next task of the stream on its own data only, then snapshots
/// every backbone and freezes the task's expert.
inline void train_task(TrainState& state, const Dataset& train, const std::vector<std::size_t>& class_set,
                       const TrainConfig& cfg, const StepObserver& observer = {}) {
  cfg.validate();
  if (train.size() == 0) throw ConfigurationError("train_task: empty dataset");
  if (class_set.empty()) throw ConfigurationError("train_task: empty class set");
  const std::size_t task = state.tasks_trained + 1;

  Rng init = state.rng.fork();
  state.experts.create(task, state.combined_dim(), state.expert_dim, class_set, init);
  state.selectors.clear();
  if (task > 1) {
    for (const auto& bb : state.backbones) state.selectors.push_back(Selector::create(bb.id(), bb.feature_dim(), init));
  }
  const Expert& expert = state.experts.back();

  std::vector<std::size_t> local(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    local[i] = expert.local_index(train.labels[i]);
    if (local[i] >= expert.num_classes()) {
      throw ValidationError("train_task: label " + std::to_string(train.labels[i]) + " not in the task's class set");
    }
  }

  ParamSet params = task_parameters(state);
  AdamState opt(cfg.adam);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = state.rng.fork();

  for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<std::size_t> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(local[i]);

      const LossBreakdown loss = total_loss(state, train.gather(idx), labels, cfg);
      StepDiagnostics diag{state.global_step, task, loss.cls, loss.com, loss.fused, loss.fdc, loss.total.item()};
      if (!std::isfinite(diag.total)) {
        throw ContractError("non-finite loss at step " + std::to_string(state.global_step));
      }
      params.zero_grad();
      backward(loss.total);
      if (observer) observer(state, params, diag);
      adam_step(params, opt);
      state.diagnostics.push_back(diag);
      ++state.global_step;
    }
  }

  state.snapshots = snapshot_all(state.backbones);
  state.experts.back().freeze();
  state.tasks_trained = task;
}

}  // namespace scdem
