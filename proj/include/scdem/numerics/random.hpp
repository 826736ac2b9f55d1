#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scdem/numerics/tensor.hpp"

namespace scdem {

/// Seeded generator shared by every initializer and sampler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

  /// Independent child stream, so adding draws in one place does not shift another.
  Rng fork() { return Rng(engine_()); }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void restore(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (!is) throw ParseError("invalid generator state");
  }

 private:
  std::mt19937_64 engine_;
};

/// Glorot-uniform [fan_in x fan_out] weight matrix.
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& x : w) x = rng.uniform(-limit, limit);
  return Tensor::matrix(fan_in, fan_out, std::move(w), requires_grad);
}

}  // namespace scdem
