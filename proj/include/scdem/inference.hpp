#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "scdem/engine.hpp"

namespace scdem {

struct RoutingConfig {
  double gamma = 1.0;  // weight of the divergence term
  double temperature = 1.0;

  void validate() const {
    if (!(gamma >= 0.0)) throw ConfigurationError("routing gamma must be >= 0");
    if (!(temperature > 0.0)) throw ConfigurationError("routing temperature must be > 0");
  }
};

inline Tensor combined_input_features(const TrainState& state, const Tensor& x) {
  return combined_features(state.backbones, x).combined;
}

/// Predictions of the expert trained on task `task_id` (1-based).
inline std::vector<std::size_t> task_il_predict(const TrainState& state, const Tensor& x, std::size_t task_id) {
  if (task_id < 1 || task_id > state.experts.size()) {
    throw IndexError("task id " + std::to_string(task_id) + " outside [1," + std::to_string(state.experts.size()) + "]");
  }
  return state.experts[task_id - 1].predict(combined_input_features(state, x));
}

namespace detail {

// p log(p / q) summed, with the shared probability floor.
inline double floored_kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c)
    s += p[c] * (std::log(std::max(p[c], kProbFloor)) - std::log(std::max(q[c], kProbFloor)));
  return s;
}

inline double floored_entropy(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) s -= v * std::log(std::max(v, kProbFloor));
  return s;
}

}  // namespace detail

/// Confidence of every expert on every row of `combined`: [expert][sample].
///
/// Each expert's tempered softmax p_i is embedded in the union label space
/// (zero outside its classes) and averaged over experts; that mean is floored,
/// renormalized, restricted back to expert i's classes and renormalized again
/// to give q_i. The score is -H(p_i) + gamma * KL(p_i || q_i).
inline std::vector<std::vector<double>> confidence_scores(const TrainState& state, const Tensor& combined,
                                                          const RoutingConfig& cfg) {
  cfg.validate();
  const std::size_t n_exp = state.experts.size();
  const std::size_t rows = combined.dim(0);
  std::map<std::size_t, std::size_t> union_index;
  for (const auto& e : state.experts)
    for (auto c : e.class_set()) union_index.emplace(c, union_index.size());
  const std::size_t u = union_index.size();

  std::vector<Tensor> probs;
  probs.reserve(n_exp);
  for (const auto& e : state.experts) probs.push_back(softmax(scale(e.logits(combined), 1.0 / cfg.temperature)));

  std::vector<std::vector<double>> scores(n_exp, std::vector<double>(rows));
  std::vector<double> global(u);
  std::vector<double> restricted;
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(global.begin(), global.end(), 0.0);
    for (std::size_t i = 0; i < n_exp; ++i) {
      const auto& cs = state.experts[i].class_set();
      for (std::size_t c = 0; c < cs.size(); ++c) global[union_index[cs[c]]] += probs[i][r * cs.size() + c];
    }
    double z = 0.0;
    for (auto& g : global) z += (g = std::max(g / static_cast<double>(n_exp), kProbFloor));
    for (auto& g : global) g /= z;
    for (std::size_t i = 0; i < n_exp; ++i) {
      const auto& cs = state.experts[i].class_set();
      const std::span<const double> p(probs[i].values().data() + r * cs.size(), cs.size());
      restricted.resize(cs.size());
      double zr = 0.0;
      for (std::size_t c = 0; c < cs.size(); ++c) zr += (restricted[c] = global[union_index[cs[c]]]);
      for (auto& q : restricted) q /= zr;
      scores[i][r] = -detail::floored_entropy(p) + cfg.gamma * detail::floored_kl(p, restricted);
    }
  }
  return scores;
}

/// Per-sample confidence of expert `expert_id` (1-based).
inline std::vector<double> expert_confidence(const TrainState& state, const Tensor& x, std::size_t expert_id,
                                             const RoutingConfig& cfg) {
  if (expert_id < 1 || expert_id > state.experts.size()) throw IndexError("expert id out of range");
  return confidence_scores(state, combined_input_features(state, x), cfg)[expert_id - 1];
}

struct RoutedPrediction {
  std::vector<std::size_t> expert;  // 1-based id of the selected expert
  std::vector<std::size_t> label;  // global class
};

/// Task-free prediction: the most confident expert (lowest id on ties)
/// labels each row. Never consults a task identifier.
inline RoutedPrediction class_il_route(const TrainState& state, const Tensor& x, const RoutingConfig& cfg) {
  if (state.experts.empty()) throw ContractError("class_il_predict: no experts");
  const Tensor combined = combined_input_features(state, x);
  const auto scores = confidence_scores(state, combined, cfg);
  const std::size_t rows = combined.dim(0);
  RoutedPrediction out;
  out.expert.assign(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i][r] > scores[best][r]) best = i;
    out.expert[r] = best;
  }
  std::vector<std::vector<std::size_t>> per_expert;
  for (const auto& e : state.experts) per_expert.push_back(e.predict(combined));
  out.label.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out.label[r] = per_expert[out.expert[r]][r];
    out.expert[r] += 1;
  }
  return out;
}

inline std::vector<std::size_t> class_il_predict(const TrainState& state, const Tensor& x, const RoutingConfig& cfg) {
  return class_il_route(state, x, cfg).label;
}

}  // namespace scdem
