#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "scdem/numerics/tensor.hpp"

namespace scdem {

/// 64-bit FNV-1a over the raw bytes of a value array.
inline std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

/// Ordered collection of named parameters. Iteration follows insertion order.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  void add(std::string name, Tensor tensor, bool trainable) {
    if (index_.count(name)) throw ConfigurationError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(tensor), trainable});
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
    return entries_[it->second].tensor;
  }

  /// Gives every entry an all-zero gradient so unreachable parameters read as 0.
  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.tensor.numel();
    return n;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& e : entries_) h = fnv1a(e.tensor.values(), h);
    return h;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers keyed by parameter name.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// Bias-corrected adaptive-moment update over the trainable entries, then
/// clears every gradient in the set. Frozen entries are never touched.
inline void adam_step(ParamSet& params, AdamState& state) {
  for (const auto& e : params.entries()) {
    if (e.trainable && !e.tensor.has_grad()) {
      throw ContractError("adam_step: trainable parameter '" + e.name + "' has no gradient");
    }
  }
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& e : params.entries()) {
    Tensor tensor = e.tensor;
    if (e.trainable) {
      auto& m = state.first_moment[e.name];
      auto& v = state.second_moment[e.name];
      if (m.empty()) {
        m.assign(tensor.numel(), 0.0);
        v.assign(tensor.numel(), 0.0);
      }
      auto theta = tensor.mutable_values();
      const auto g = tensor.grad();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
      }
    }
    tensor.clear_grad();
  }
}

}  // namespace scdem
