#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "scdem/harness/stream.hpp"
#include "scdem/inference.hpp"

namespace scdem {

enum class EvalMode { task_il, class_il };

inline std::string to_string(EvalMode m) { return m == EvalMode::task_il ? "task_il" : "class_il"; }

inline EvalMode parse_eval_mode(std::string_view s) {
  if (s == "task_il") return EvalMode::task_il;
  if (s == "class_il") return EvalMode::class_il;
  throw ConfigurationError("unknown evaluation mode '" + std::string(s) + "'");
}

/// Outcome on one task's test set.
struct TaskEval {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t routed_correct = 0;  // class-IL only: samples sent to the task's own expert

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Accuracy on every task of the stream for the current state. Tasks that
/// have no expert yet score 0 in task-IL mode.
inline std::vector<TaskEval> evaluate_row(const TrainState& state, const TaskStream& stream, EvalMode mode,
                                          const RoutingConfig& routing = {}) {
  std::vector<TaskEval> row(stream.size());
  for (std::size_t j = 0; j < stream.size(); ++j) {
    const Task& task = stream.tasks[j];
    row[j].total = task.test.size();
    if (state.experts.empty()) continue;
    std::vector<std::size_t> pred;
    if (mode == EvalMode::task_il) {
      if (j >= state.experts.size()) continue;
      pred = task_il_predict(state, task.test.inputs, j + 1);
    } else {
      const auto routed = class_il_route(state, task.test.inputs, routing);
      pred = routed.label;
      for (auto e : routed.expert) row[j].routed_correct += (e == j + 1);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) row[j].correct += pred[i] == task.test.labels[i];
  }
  return row;
}

/// Accuracy matrix and its summaries. Row i holds accuracies after training
/// task i+1; column j is test task j+1.
struct MetricsReport {
  EvalMode mode = EvalMode::task_il;
  std::vector<std::vector<double>> accuracy_matrix;
  std::vector<std::size_t> test_sizes;
  double average_micro = 0.0;  // pooled correct / pooled samples after the final task
  double average_macro = 0.0;  // unweighted mean of final-row accuracies
  double last = 0.0;  // final-task accuracy after the final task
  std::vector<double> forgetting;  // best earlier accuracy minus final accuracy
  double routing_accuracy = 0.0;  // class-IL: fraction routed to the right expert
  /// Mean accuracy over tasks seen so far, after each task.
  std::vector<double> seen_average;
};

inline MetricsReport build_report(EvalMode mode, const std::vector<std::vector<TaskEval>>& rows) {
  if (rows.empty()) throw ContractError("build_report: no evaluation rows");
  const std::size_t n = rows.size();
  for (const auto& r : rows)
    if (r.size() != n) throw DimensionError("build_report: accuracy matrix must be square");
  MetricsReport rep;
  rep.mode = mode;
  for (const auto& r : rows) {
    std::vector<double> acc;
    for (const auto& e : r) acc.push_back(e.accuracy());
    rep.accuracy_matrix.push_back(std::move(acc));
  }
  const auto& final_row = rows.back();
  std::size_t correct = 0, total = 0, routed = 0;
  for (const auto& e : final_row) {
    correct += e.correct;
    total += e.total;
    routed += e.routed_correct;
    rep.test_sizes.push_back(e.total);
  }
  rep.average_micro = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  rep.routing_accuracy = total && mode == EvalMode::class_il ? static_cast<double>(routed) / static_cast<double>(total) : 0.0;
  const auto& a = rep.accuracy_matrix;
  rep.average_macro = std::accumulate(a.back().begin(), a.back().end(), 0.0) / static_cast<double>(n);
  rep.last = a[n - 1][n - 1];
  for (std::size_t j = 0; j < n; ++j) {
    double best = 0.0;
    for (std::size_t i = j; i < n; ++i) best = std::max(best, a[i][j]);
    rep.forgetting.push_back(best - a[n - 1][j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += a[i][j];
    rep.seen_average.push_back(s / static_cast<double>(i + 1));
  }
  return rep;
}

/// Reports for both evaluation protocols from one pass over the stream.
struct StreamOutcome {
  MetricsReport task_il;
  MetricsReport class_il;
};

/// Trains every task in order, evaluating after each one. train_task only
/// ever sees the current task's training split.
inline StreamOutcome run_stream(TrainState& state, const TaskStream& stream, const TrainConfig& cfg,
                                const RoutingConfig& routing = {}, const StepObserver& observer = {}) {
  if (stream.size() == 0) throw ConfigurationError("run_stream: empty stream");
  std::vector<std::vector<TaskEval>> til, cil;
  for (const auto& task : stream.tasks) {
    train_task(state, task.train, task.class_set, cfg, observer);
    til.push_back(evaluate_row(state, stream, EvalMode::task_il, routing));
    cil.push_back(evaluate_row(state, stream, EvalMode::class_il, routing));
  }
  return {build_report(EvalMode::task_il, til), build_report(EvalMode::class_il, cil)};
}

}  // namespace scdem
