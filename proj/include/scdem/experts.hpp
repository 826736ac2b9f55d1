#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "scdem/numerics/dense.hpp"

namespace scdem {

/// Per-task head: an adapter (affine + gelu) from the combined backbone
/// feature to a task representation, and a linear classifier over the
/// task's own classes. Class indices are local inside, global outside.
class Expert {
 public:
  Expert(std::size_t task_id, Dense adapter, Dense classifier, std::vector<std::size_t> class_set, bool frozen = false)
      : task_id_(task_id), adapter_(std::move(adapter)), classifier_(std::move(classifier)),
        class_set_(std::move(class_set)) {
    if (class_set_.empty()) throw ConfigurationError("expert needs a nonempty class set");
    if (adapter_.out_dim() != classifier_.in_dim() || classifier_.out_dim() != class_set_.size()) {
      throw DimensionError("expert: adapter/classifier widths do not match class set");
    }
    if (frozen) freeze();
  }

  static Expert create(std::size_t task_id, std::size_t input_dim, std::size_t expert_dim,
                       std::vector<std::size_t> class_set, Rng& rng) {
    if (class_set.empty()) throw ConfigurationError("expert needs a nonempty class set");
    Dense adapter = Dense::glorot(input_dim, expert_dim, Activation::gelu, rng);
    Dense classifier = Dense::glorot(expert_dim, class_set.size(), std::nullopt, rng);
    return Expert(task_id, std::move(adapter), std::move(classifier), std::move(class_set));
  }

  std::size_t task_id() const { return task_id_; }
  const std::vector<std::size_t>& class_set() const { return class_set_; }
  std::size_t input_dim() const { return adapter_.in_dim(); }
  std::size_t num_classes() const { return class_set_.size(); }
  bool frozen() const { return frozen_; }

  /// Task-specific representation from a combined feature [b x d_z*t'].
  Tensor adapt(const Tensor& combined) const {
    if (combined.rank() != 2 || combined.dim(1) != adapter_.in_dim()) {
      throw DimensionError("expert " + std::to_string(task_id_) + " expects features of width " +
                           std::to_string(adapter_.in_dim()) + ", got " + shape_string(combined.shape()));
    }
    return adapter_.forward(combined);
  }

  Tensor classify(const Tensor& representation) const {
    if (representation.rank() != 2 || representation.dim(1) != classifier_.in_dim()) {
      throw DimensionError("expert classifier width mismatch");
    }
    return classifier_.forward(representation);
  }

  Tensor logits(const Tensor& combined) const { return classify(adapt(combined)); }

  /// Local argmax (lowest index on ties) mapped into the global label space.
  std::vector<std::size_t> predict(const Tensor& combined) const {
    auto local = argmax_rows(logits(combined));
    for (auto& c : local) c = class_set_[c];
    return local;
  }

  /// Local index of a global label, or class count if not owned.
  std::size_t local_index(std::size_t global) const {
    auto it = std::find(class_set_.begin(), class_set_.end(), global);
    return static_cast<std::size_t>(it - class_set_.begin());
  }

  /// Irreversible. Parameters stop requiring grad, so gradients still flow
  /// through this expert to its inputs but never into its own weights.
  void freeze() {
    frozen_ = true;
    adapter_.set_trainable(false);
    classifier_.set_trainable(false);
  }

  void register_params(ParamSet& set, const std::string& prefix) const {
    adapter_.register_params(set, prefix + ".adapter");
    classifier_.register_params(set, prefix + ".classifier");
  }

  std::uint64_t param_hash() const { return classifier_.hash(adapter_.hash()); }
  std::size_t param_count() const { return adapter_.param_count() + classifier_.param_count(); }

  const Dense& adapter() const { return adapter_; }
  const Dense& classifier() const { return classifier_; }

 private:
  std::size_t task_id_;
  Dense adapter_;
  Dense classifier_;
  std::vector<std::size_t> class_set_;
  bool frozen_ = false;
};

/// Experts in task order; one per trained task.
class ExpertRegistry {
 public:
  Expert& create(std::size_t task_id, std::size_t input_dim, std::size_t expert_dim,
                 std::vector<std::size_t> class_set, Rng& rng) {
    check_new(task_id);
    experts_.push_back(Expert::create(task_id, input_dim, expert_dim, std::move(class_set), rng));
    return experts_.back();
  }

  Expert& add(Expert e) {
    check_new(e.task_id());
    experts_.push_back(std::move(e));
    return experts_.back();
  }

  std::size_t size() const { return experts_.size(); }
  bool empty() const { return experts_.empty(); }
  const Expert& operator[](std::size_t i) const { return experts_.at(i); }
  Expert& operator[](std::size_t i) { return experts_.at(i); }
  const Expert& back() const { return experts_.back(); }
  Expert& back() { return experts_.back(); }
  auto begin() const { return experts_.begin(); }
  auto end() const { return experts_.end(); }

 private:
  void check_new(std::size_t task_id) const {
    for (const auto& e : experts_)
      if (e.task_id() == task_id) throw ConfigurationError("expert for task " + std::to_string(task_id) + " already exists");
  }

  std::vector<Expert> experts_;
};

}  // namespace scdem
