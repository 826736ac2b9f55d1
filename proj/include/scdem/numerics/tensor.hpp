#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scdem/errors.hpp"

namespace scdem {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

// One node of the define-by-run graph. Leaves have no backward function;
// op outputs hold strong references to their inputs so the graph lives as
// long as the loss tensor does.
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward;

  std::vector<double>& ensure_grad() {
    if (!grad) grad.emplace(values.size(), 0.0);
    return *grad;
  }
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// A Tensor is a shared handle: copying it aliases the same storage, which is
/// what lets an optimizer update parameters that layers also reference. Use
/// clone() for an independent value copy.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor of shape " + shape_string(shape) + " cannot hold " +
                           std::to_string(values.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    const auto n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(impl_); }

  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return impl().shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl().shape.at(axis); }
  std::size_t numel() const { return impl().values.size(); }
  std::size_t rows() const { return rank() == 1 ? 1 : impl().shape[0]; }
  std::size_t cols() const { return impl().shape.back(); }

  std::span<const double> values() const { return impl().values; }
  // Direct write access. Only initializers and optimizers should use this.
  std::span<double> mutable_values() { return impl().values; }

  double operator[](std::size_t i) const { return impl().values[i]; }
  double at(std::size_t r, std::size_t c) const { return impl().values[r * cols() + c]; }
  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return impl().values[0];
  }

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool flag) { impl().requires_grad = flag; }

  bool has_grad() const { return impl().grad.has_value(); }
  std::span<const double> grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return *impl().grad;
  }
  std::span<double> mutable_grad() { return impl().ensure_grad(); }
  void zero_grad() { impl().grad.emplace(numel(), 0.0); }
  void clear_grad() { impl().grad.reset(); }

  /// Independent leaf with copied values and no graph history.
  Tensor clone() const { return Tensor(shape(), impl().values, requires_grad()); }

  /// Leaf sharing nothing with this tensor's graph; never requires grad.
  Tensor detach() const { return Tensor(shape(), impl().values, false); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

 private:
  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                               std::function<void(detail::TensorImpl&)>);

  detail::TensorImpl& impl() const {
    if (!impl_) throw ContractError("use of undefined tensor");
    return *impl_;
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Builds an op output. The backward closure is recorded only when some input
/// requires grad; it reads self.grad and accumulates into self.parents[i].
inline Tensor make_op_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                             std::function<void(detail::TensorImpl&)> backward) {
  Tensor out(std::move(shape), std::move(values), false);
  const bool track = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    out.impl_->requires_grad = true;
    out.impl_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.impl_->parents.push_back(in.handle());
    out.impl_->backward = std::move(backward);
  }
  return out;
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable leaf that requires grad; intermediate buffers are released.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  using Impl = detail::TensorImpl;
  std::vector<Impl*> order;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  std::unordered_set<Impl*> visited;

  // Iterative post-order DFS over nodes that require grad.
  Impl* root = loss.handle().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Impl* n : order) {
    if (n->backward) n->grad.reset();
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* n = *it;
    if (!n->backward) continue;
    n->ensure_grad();
    n->backward(*n);
  }
  for (Impl* n : order) {
    if (n->backward) n->grad.reset();
  }
}

}  // namespace scdem
