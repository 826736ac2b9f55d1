#pragma once

#include <optional>
#include <string>

#include "scdem/numerics/ops.hpp"
#include "scdem/numerics/optim.hpp"
#include "scdem/numerics/random.hpp"

namespace scdem {

/// Affine map with an optional elementwise activation.
///
/// Copies are deep: a copied layer owns fresh parameter storage, so a copy
/// taken before training keeps its values no matter what happens to the
/// original afterwards.
class Dense {
 public:
  Dense() = default;

  Dense(Tensor weight, Tensor bias, std::optional<Activation> act)
      : weight_(std::move(weight)), bias_(std::move(bias)), act_(act) {
    if (weight_.rank() != 2 || bias_.numel() != weight_.dim(1)) {
      throw DimensionError("dense: weight " + shape_string(weight_.shape()) + " and bias " +
                           shape_string(bias_.shape()) + " do not conform");
    }
  }

  static Dense glorot(std::size_t in, std::size_t out, std::optional<Activation> act, Rng& rng) {
    return Dense(glorot_uniform(in, out, rng), Tensor::zeros({out}, true), act);
  }

  Dense(const Dense& other)
      : weight_(other.weight_.clone()), bias_(other.bias_.clone()), act_(other.act_) {}
  Dense& operator=(const Dense& other) {
    if (this != &other) {
      weight_ = other.weight_.clone();
      bias_ = other.bias_.clone();
      act_ = other.act_;
    }
    return *this;
  }
  Dense(Dense&&) noexcept = default;
  Dense& operator=(Dense&&) noexcept = default;

  Tensor forward(const Tensor& x) const {
    Tensor y = affine(x, weight_, bias_);
    return act_ ? activation(y, *act_) : y;
  }

  std::size_t in_dim() const { return weight_.dim(0); }
  std::size_t out_dim() const { return weight_.dim(1); }
  std::size_t param_count() const { return weight_.numel() + bias_.numel(); }
  std::optional<Activation> act() const { return act_; }

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

  void set_trainable(bool flag) {
    weight_.set_requires_grad(flag);
    bias_.set_requires_grad(flag);
  }
  bool trainable() const { return weight_.requires_grad(); }

  void register_params(ParamSet& set, const std::string& prefix) const {
    set.add(prefix + ".weight", weight_, trainable());
    set.add(prefix + ".bias", bias_, trainable());
  }

  std::uint64_t hash(std::uint64_t seed = 1469598103934665603ULL) const {
    return fnv1a(bias_.values(), fnv1a(weight_.values(), seed));
  }

 private:
  Tensor weight_;
  Tensor bias_;
  std::optional<Activation> act_;
};

}  // namespace scdem
