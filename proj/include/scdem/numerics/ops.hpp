#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "scdem/numerics/tensor.hpp"

namespace scdem {

/// Floor applied to probabilities inside every logarithm.
inline constexpr double kProbFloor = 1e-12;

enum class Activation { relu, gelu, tanh };

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigurationError("unknown activation '" + std::string(name) + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

namespace detail {

inline std::vector<double>* grad_of(TensorImpl& self, std::size_t parent) {
  auto& p = *self.parents[parent];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " must be a matrix, got " + shape_string(t.shape()));
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace detail

/// out = x * W + bias, with x [b x in], W [in x out], bias [out].
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  detail::require_matrix(x, "affine input");
  detail::require_matrix(w, "affine weight");
  const std::size_t b = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in || bias.numel() != out) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + ", weight " + shape_string(w.shape()) +
                         ", bias " + shape_string(bias.shape()) + " do not conform");
  }
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = bias.values();
  std::vector<double> y(b * out);
  for (std::size_t i = 0; i < b; ++i) {
    double* row = &y[i * out];
    for (std::size_t j = 0; j < out; ++j) row[j] = bv[j];
    for (std::size_t k = 0; k < in; ++k) {
      const double xik = xv[i * in + k];
      const double* wrow = &wv[k * out];
      for (std::size_t j = 0; j < out; ++j) row[j] += xik * wrow[j];
    }
  }
  return make_op_result({b, out}, std::move(y), {x, w, bias}, [b, in, out](detail::TensorImpl& self) {
    const auto& g = *self.grad;
    const auto& xv = self.parents[0]->values;
    const auto& wv = self.parents[1]->values;
    if (auto* gx = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < in; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < out; ++j) acc += g[i * out + j] * wv[k * out + j];
          (*gx)[i * in + k] += acc;
        }
    }
    if (auto* gw = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < in; ++k) {
          const double xik = xv[i * in + k];
          double* grow = &(*gw)[k * out];
          for (std::size_t j = 0; j < out; ++j) grow[j] += xik * g[i * out + j];
        }
    }
    if (auto* gb = detail::grad_of(self, 2)) {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < out; ++j) (*gb)[j] += g[i * out + j];
    }
  });
}

/// Elementwise nonlinearity. gelu uses the exact erf form.
inline Tensor activation(const Tensor& x, Activation kind) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    switch (kind) {
      case Activation::relu: y[i] = xv[i] > 0.0 ? xv[i] : 0.0; break;
      case Activation::gelu: y[i] = detail::gelu(xv[i]); break;
      case Activation::tanh: y[i] = std::tanh(xv[i]); break;
    }
  }
  return make_op_result(x.shape(), std::move(y), {x}, [kind](detail::TensorImpl& self) {
    auto* gx = detail::grad_of(self, 0);
    if (!gx) return;
    const auto& g = *self.grad;
    const auto& xv = self.parents[0]->values;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::relu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::gelu: d = detail::gelu_grad(xv[i]); break;
        case Activation::tanh: d = 1.0 - self.values[i] * self.values[i]; break;
      }
      (*gx)[i] += g[i] * d;
    }
  });
}

/// Softmax over the last axis, computed with max subtraction.
inline Tensor softmax(const Tensor& logits) {
  const std::size_t u = logits.cols();
  const std::size_t rows = logits.numel() / u;
  const auto lv = logits.values();
  std::vector<double> p(lv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &lv[r * u];
    double* out = &p[r * u];
    double mx = in[0];
    for (std::size_t c = 1; c < u; ++c) mx = std::max(mx, in[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < u; ++c) z += (out[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < u; ++c) out[c] /= z;
  }
  return make_op_result(logits.shape(), std::move(p), {logits}, [rows, u](detail::TensorImpl& self) {
    auto* gx = detail::grad_of(self, 0);
    if (!gx) return;
    const auto& g = *self.grad;
    const auto& p = self.values;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < u; ++c) dot += g[r * u + c] * p[r * u + c];
      for (std::size_t c = 0; c < u; ++c) (*gx)[r * u + c] += p[r * u + c] * (g[r * u + c] - dot);
    }
  });
}

/// Mean over rows of -log(max(p[i, label_i], floor)).
inline Tensor cross_entropy(const Tensor& probs, const std::vector<std::size_t>& labels) {
  const std::size_t u = probs.cols();
  const std::size_t b = probs.numel() / u;
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) + " rows");
  }
  for (auto y : labels) {
    if (y >= u) throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(u) + ")");
  }
  const auto pv = probs.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) loss -= std::log(std::max(pv[i * u + labels[i]], kProbFloor));
  loss /= static_cast<double>(b);
  return make_op_result({1}, {loss}, {probs}, [labels, b, u](detail::TensorImpl& self) {
    auto* gp = detail::grad_of(self, 0);
    if (!gp) return;
    const double g = (*self.grad)[0] / static_cast<double>(b);
    const auto& pv = self.parents[0]->values;
    for (std::size_t i = 0; i < b; ++i) {
      const double p = pv[i * u + labels[i]];
      if (p > kProbFloor) (*gp)[i * u + labels[i]] -= g / p;
    }
  });
}

/// Mean over rows of KL(P_i || Q_i) with floored logarithms. For 1-D inputs
/// this is the plain divergence of two distributions.
inline Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape()) {
    throw DimensionError("kl_divergence: shapes " + shape_string(p.shape()) + " and " + shape_string(q.shape()));
  }
  const std::size_t u = p.cols();
  const std::size_t rows = p.numel() / u;
  const auto pv = p.values();
  const auto qv = q.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    total += pv[i] * (std::log(std::max(pv[i], kProbFloor)) - std::log(std::max(qv[i], kProbFloor)));
  }
  total /= static_cast<double>(rows);
  return make_op_result({1}, {total}, {p, q}, [rows](detail::TensorImpl& self) {
    const double g = (*self.grad)[0] / static_cast<double>(rows);
    const auto& pv = self.parents[0]->values;
    const auto& qv = self.parents[1]->values;
    if (auto* gp = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double dp = std::log(std::max(pv[i], kProbFloor)) + (pv[i] > kProbFloor ? 1.0 : 0.0) -
                          std::log(std::max(qv[i], kProbFloor));
        (*gp)[i] += g * dp;
      }
    }
    if (auto* gq = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < qv.size(); ++i) {
        if (qv[i] > kProbFloor) (*gq)[i] -= g * pv[i] / qv[i];
      }
    }
  });
}

/// Mean over rows of the Shannon entropy -sum p log p (floored).
inline Tensor entropy(const Tensor& p) {
  const std::size_t u = p.cols();
  const std::size_t rows = p.numel() / u;
  const auto pv = p.values();
  double total = 0.0;
  for (double x : pv) total -= x * std::log(std::max(x, kProbFloor));
  total /= static_cast<double>(rows);
  return make_op_result({1}, {total}, {p}, [rows](detail::TensorImpl& self) {
    auto* gp = detail::grad_of(self, 0);
    if (!gp) return;
    const double g = (*self.grad)[0] / static_cast<double>(rows);
    const auto& pv = self.parents[0]->values;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      (*gp)[i] -= g * (std::log(std::max(pv[i], kProbFloor)) + (pv[i] > kProbFloor ? 1.0 : 0.0));
    }
  });
}

/// Column-wise concatenation of [b x d_i] matrices, preserving input order.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (parts.size() == 1) return parts.front();
  const std::size_t b = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : parts) {
    detail::require_matrix(t, "concat operand");
    if (t.dim(0) != b) throw DimensionError("concat: batch sizes differ");
    widths.push_back(t.dim(1));
    total += t.dim(1);
  }
  std::vector<double> y(b * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(&v[i * widths[p]], widths[p], &y[i * total + offset]);
    offset += widths[p];
  }
  return make_op_result({b, total}, std::move(y), parts, [b, total, widths](detail::TensorImpl& self) {
    const auto& g = *self.grad;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (auto* gp = detail::grad_of(self, p)) {
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t c = 0; c < widths[p]; ++c) (*gp)[i * widths[p] + c] += g[i * total + offset + c];
      }
      offset += widths[p];
    }
  });
}

inline Tensor sum(const Tensor& x) {
  const auto v = x.values();
  double s = 0.0;
  for (double e : v) s += e;
  return make_op_result({1}, {s}, {x}, [](detail::TensorImpl& self) {
    if (auto* gx = detail::grad_of(self, 0))
      for (auto& e : *gx) e += (*self.grad)[0];
  });
}

inline Tensor mean(const Tensor& x) {
  const auto n = static_cast<double>(x.numel());
  const auto v = x.values();
  double s = 0.0;
  for (double e : v) s += e;
  return make_op_result({1}, {s / n}, {x}, [n](detail::TensorImpl& self) {
    if (auto* gx = detail::grad_of(self, 0))
      for (auto& e : *gx) e += (*self.grad)[0] / n;
  });
}

/// Elementwise a + b for equal shapes.
inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("add: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return make_op_result(a.shape(), std::move(y), {a, b}, [](detail::TensorImpl& self) {
    const auto& g = *self.grad;
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* gp = detail::grad_of(self, p))
        for (std::size_t i = 0; i < g.size(); ++i) (*gp)[i] += g[i];
  });
}

inline Tensor scale(const Tensor& x, double factor) {
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = v[i] * factor;
  return make_op_result(x.shape(), std::move(y), {x}, [factor](detail::TensorImpl& self) {
    if (auto* gx = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += (*self.grad)[i] * factor;
  });
}

/// Gathers scalar tensors into a 1-D tensor of length n.
inline Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw DimensionError("stack of zero scalars");
  std::vector<double> y;
  y.reserve(scalars.size());
  for (const auto& s : scalars) y.push_back(s.item());
  const std::size_t n = y.size();
  return make_op_result({n}, std::move(y), scalars, [n](detail::TensorImpl& self) {
    for (std::size_t p = 0; p < n; ++p)
      if (auto* gp = detail::grad_of(self, p)) (*gp)[0] += (*self.grad)[p];
  });
}

/// sum_k weights[k] * parts[k] for equally shaped parts.
inline Tensor weighted_sum(const Tensor& weights, const std::vector<Tensor>& parts) {
  if (weights.numel() != parts.size() || parts.empty()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.numel()) + " weights for " +
                         std::to_string(parts.size()) + " tensors");
  }
  const Shape shape = parts.front().shape();
  for (const auto& t : parts)
    if (t.shape() != shape) throw DimensionError("weighted_sum: operand shapes differ");
  const auto wv = weights.values();
  std::vector<double> y(shape_numel(shape), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += wv[k] * v[i];
  }
  std::vector<Tensor> inputs{weights};
  inputs.insert(inputs.end(), parts.begin(), parts.end());
  const std::size_t n = parts.size();
  return make_op_result(shape, std::move(y), std::move(inputs), [n](detail::TensorImpl& self) {
    const auto& g = *self.grad;
    const auto& wv = self.parents[0]->values;
    if (auto* gw = detail::grad_of(self, 0)) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto& v = self.parents[k + 1]->values;
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * v[i];
        (*gw)[k] += acc;
      }
    }
    for (std::size_t k = 0; k < n; ++k)
      if (auto* gp = detail::grad_of(self, k + 1))
        for (std::size_t i = 0; i < g.size(); ++i) (*gp)[i] += g[i] * wv[k];
  });
}

/// Index of the largest entry in each row; ties go to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Tensor& x) {
  const std::size_t u = x.cols();
  const std::size_t rows = x.numel() / u;
  const auto v = x.values();
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < u; ++c)
      if (v[r * u + c] > v[r * u + best]) best = c;
    out[r] = best;
  }
  return out;
}

/// Rows [begin, end) of a matrix, with gradient routed back to the source.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_rows input");
  if (begin >= end || end > x.dim(0)) throw IndexError("slice_rows: bad range");
  const std::size_t d = x.dim(1);
  const auto v = x.values();
  std::vector<double> y(v.begin() + static_cast<std::ptrdiff_t>(begin * d),
                        v.begin() + static_cast<std::ptrdiff_t>(end * d));
  return make_op_result({end - begin, d}, std::move(y), {x}, [begin, d](detail::TensorImpl& self) {
    if (auto* gx = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad->size(); ++i) (*gx)[begin * d + i] += (*self.grad)[i];
  });
}

inline bool all_finite(const Tensor& x) {
  for (double v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace scdem
