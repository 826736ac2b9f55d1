#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "scdem/scdem.hpp"

namespace scdem::testkit {

/// Fixed-seed generator for hand-rolled property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  std::vector<double> values(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  Tensor matrix(std::size_t r, std::size_t c, bool grad = false, double lo = -1.0, double hi = 1.0) {
    return Tensor::matrix(r, c, values(r * c, lo, hi), grad);
  }
  /// Rows on the simplex, bounded away from zero.
  Tensor simplex(std::size_t r, std::size_t c, bool grad = false) {
    std::vector<double> v(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += (v[i * c + j] = uniform(0.05, 1.0));
      for (std::size_t j = 0; j < c; ++j) v[i * c + j] /= z;
    }
    return Tensor::matrix(r, c, std::move(v), grad);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Central differences of `f` with respect to every entry of `leaf`.
inline std::vector<double> numeric_grad(Tensor leaf, const std::function<double()>& f, double h = 1e-5) {
  auto v = leaf.mutable_values();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double up = f();
    v[i] = orig - h;
    const double down = f();
    v[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max |a-b| / max(|a|_inf, |b|_inf, floor): one number per gradient vector.
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

/// Worst relative error between reverse-mode and central-difference
/// gradients of `loss` over all `leaves`.
inline double gradient_check(const std::vector<Tensor>& leaves, const std::function<Tensor()>& loss) {
  for (auto leaf : leaves) leaf.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto numeric = numeric_grad(leaves[i], [&] { return loss().item(); });
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

inline std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace scdem::testkit
