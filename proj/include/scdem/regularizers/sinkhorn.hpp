#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "scdem/numerics/ops.hpp"

namespace scdem {

struct OTConfig {
  double epsilon = 0.05;  // relative to the largest pairwise cost
  std::size_t max_iters = 200;
  double tol = 1e-6;  // L1 violation of the marginals

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigurationError("OT epsilon must be > 0");
    if (max_iters < 1) throw ConfigurationError("OT max_iters must be >= 1");
    if (!(tol > 0.0)) throw ConfigurationError("OT tol must be > 0");
  }
};

/// Converged (or last) entropic plan between uniform measures.
struct EntropicPlan {
  std::vector<double> plan;  // n x m, row-major
  double transport_cost = 0.0;  // <P, C>
  double relative_entropy = 0.0;  // KL(P || a b^T)
  double objective = 0.0;  // transport_cost + eps * relative_entropy
  std::size_t iterations = 0;
  double marginal_error = 0.0;
  bool converged = false;
};

namespace detail {

inline double log_sum_exp(const double* v, std::size_t n, std::size_t stride = 1) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}

inline void finish_plan(EntropicPlan& out, std::span<const double> cost, std::size_t n, std::size_t m, double eps) {
  const double log_ab = -std::log(static_cast<double>(n)) - std::log(static_cast<double>(m));
  double tc = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < n * m; ++i) {
    const double p = out.plan[i];
    tc += p * cost[i];
    if (p > 0.0) kl += p * (std::log(p) - log_ab);
  }
  out.transport_cost = tc;
  out.relative_entropy = kl;
  out.objective = tc + eps * kl;
}

// Dual potentials (f, g) with plan P_ij = exp((f_i + g_j - C_ij) / eps).
struct Potentials {
  std::vector<double> f, g;
  std::size_t iterations = 0;
};

// Scaling-vector iterations on the Gibbs kernel. Used when the kernel
// exp(-C/eps) stays comfortably inside double range.
inline Potentials sinkhorn_kernel(std::span<const double> cost, std::size_t n, std::size_t m, double eps,
                                  std::size_t max_iters, double tol) {
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  std::vector<double> kernel(n * m);
  for (std::size_t i = 0; i < n * m; ++i) kernel[i] = std::exp(-cost[i] / eps);
  std::vector<double> u(n, 1.0), v(m, 1.0), kv(n), ktu(m);
  Potentials out;
  auto apply_k = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += kernel[i * m + j] * v[j];
      kv[i] = s;
    }
  };
  apply_k();
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) u[i] = a / kv[i];
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ktu[j] += kernel[i * m + j] * u[i];
    for (std::size_t j = 0; j < m; ++j) v[j] = b / ktu[j];
    apply_k();
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += std::abs(u[i] * kv[i] - a);
    out.iterations = it + 1;
    if (err < tol) break;
  }
  out.f.resize(n);
  out.g.resize(m);
  for (std::size_t i = 0; i < n; ++i) out.f[i] = eps * std::log(u[i]);
  for (std::size_t j = 0; j < m; ++j) out.g[j] = eps * std::log(v[j]);
  return out;
}

// Log-domain potentials with geometric epsilon annealing, for small eps.
inline Potentials sinkhorn_log(std::span<const double> cost, std::size_t n, std::size_t m, double eps,
                               double cost_scale, std::size_t max_iters, double tol) {
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const double a = 1.0 / static_cast<double>(n);
  Potentials out;
  auto& f = out.f;
  auto& g = out.g;
  f.assign(n, 0.0);
  g.assign(m, 0.0);
  std::vector<double> buf(std::max(n, m));

  auto update_f = [&](double e) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost[i * m + j]) / e;
      f[i] = e * log_a - e * log_sum_exp(buf.data(), m);
    }
  };
  auto update_g = [&](double e) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost[i * m + j]) / e;
      g[j] = e * log_b - e * log_sum_exp(buf.data(), n);
    }
  };
  auto row_error = [&](double e) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += std::exp((f[i] + g[j] - cost[i * m + j]) / e);
      err += std::abs(row - a);
    }
    return err;
  };

  double stage_eps = std::max(eps, cost_scale);
  while (stage_eps > eps) {
    for (std::size_t it = 0; it < 100; ++it) {
      update_f(stage_eps);
      update_g(stage_eps);
      if (row_error(stage_eps) < 1e-3) break;
    }
    stage_eps = std::max(eps, stage_eps * 0.5);
  }
  for (std::size_t it = 0; it < max_iters; ++it) {
    update_f(eps);
    update_g(eps);
    out.iterations = it + 1;
    if (row_error(eps) < tol) break;
  }
  return out;
}

// L1 violation of both marginals.
// Backward rule for a locally constant output: parents get zero gradient.
inline void touch_parents(TensorImpl& self) {
  for (std::size_t k = 0; k < self.parents.size(); ++k) grad_of(self, k);
}

inline double marginal_violation(std::span<const double> plan, std::size_t n, std::size_t m) {
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  std::vector<double> col(m, 0.0);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row += plan[i * m + j];
      col[j] += plan[i * m + j];
    }
    err += std::abs(row - a);
  }
  for (std::size_t j = 0; j < m; ++j) err += std::abs(col[j] - b);
  return err;
}

inline std::vector<double> plan_from(const Potentials& p, std::span<const double> cost, std::size_t n, std::size_t m,
                                     double eps) {
  std::vector<double> plan(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) plan[i * m + j] = std::exp((p.f[i] + p.g[j] - cost[i * m + j]) / eps);
  return plan;
}

// Dense solve with partial pivoting; false when the system is singular.
inline bool solve_linear(std::vector<double>& mat, std::vector<double>& rhs, std::size_t k) {
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(mat[r * k + c]) > std::abs(mat[piv * k + c])) piv = r;
    if (!(std::abs(mat[piv * k + c]) > 0.0)) return false;
    if (piv != c) {
      for (std::size_t j = 0; j < k; ++j) std::swap(mat[c * k + j], mat[piv * k + j]);
      std::swap(rhs[c], rhs[piv]);
    }
    for (std::size_t r = c + 1; r < k; ++r) {
      const double factor = mat[r * k + c] / mat[c * k + c];
      if (factor == 0.0) continue;
      for (std::size_t j = c; j < k; ++j) mat[r * k + j] -= factor * mat[c * k + j];
      rhs[r] -= factor * rhs[c];
    }
  }
  for (std::size_t c = k; c-- > 0;) {
    double s = rhs[c];
    for (std::size_t j = c + 1; j < k; ++j) s -= mat[c * k + j] * rhs[j];
    rhs[c] = s / mat[c * k + c];
  }
  return true;
}

// Newton iterations on the dual, started from Sinkhorn potentials. Sinkhorn
// slows to a crawl when the plan is close to a permutation with near-ties;
// Newton converges quadratically from there. g_{m-1} is pinned to remove the
// (f + c, g - c) gauge freedom.
inline std::size_t newton_polish(Potentials& p, std::span<const double> cost, std::size_t n, std::size_t m, double eps,
                                 double tol, std::size_t max_steps = 50) {
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  const std::size_t k = n + m - 1;
  auto plan = plan_from(p, cost, n, m, eps);
  double err = marginal_violation(plan, n, m);
  std::size_t steps = 0;
  while (err >= tol && steps < max_steps) {
    ++steps;
    std::vector<double> row(n, 0.0), col(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        row[i] += plan[i * m + j];
        col[j] += plan[i * m + j];
      }
    std::vector<double> mat(k * k, 0.0), rhs(k);
    for (std::size_t i = 0; i < n; ++i) {
      mat[i * k + i] = row[i];
      rhs[i] = eps * (a - row[i]);
      for (std::size_t j = 0; j + 1 < m; ++j) {
        mat[i * k + n + j] = plan[i * m + j];
        mat[(n + j) * k + i] = plan[i * m + j];
      }
    }
    for (std::size_t j = 0; j + 1 < m; ++j) {
      mat[(n + j) * k + n + j] = col[j];
      rhs[n + j] = eps * (b - col[j]);
    }
    if (!solve_linear(mat, rhs, k)) break;
    bool improved = false;
    for (double step = 1.0; step > 1e-6; step *= 0.5) {
      Potentials trial = p;
      for (std::size_t i = 0; i < n; ++i) trial.f[i] += step * rhs[i];
      for (std::size_t j = 0; j + 1 < m; ++j) trial.g[j] += step * rhs[n + j];
      auto trial_plan = plan_from(trial, cost, n, m, eps);
      const double trial_err = marginal_violation(trial_plan, n, m);
      if (trial_err < err) {
        p = std::move(trial);
        plan = std::move(trial_plan);
        err = trial_err;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return steps;
}

}  // namespace detail

/// Entropic OT between uniform measures on n and m points for an explicit
/// cost matrix and absolute regularization strength `eps`. Sinkhorn runs for
/// at most `max_iters` sweeps; if the marginals are still off by more than
/// `tol`, a few Newton steps on the dual finish the job.
inline EntropicPlan solve_entropic_ot(std::span<const double> cost, std::size_t n, std::size_t m, double eps,
                                      std::size_t max_iters, double tol) {
  if (n == 0 || m == 0 || cost.size() != n * m) throw DimensionError("solve_entropic_ot: bad cost matrix");
  if (!(eps > 0.0)) throw ConfigurationError("solve_entropic_ot: eps must be > 0");
  const double cmax = *std::max_element(cost.begin(), cost.end());
  auto pot = cmax / eps <= 50.0 ? detail::sinkhorn_kernel(cost, n, m, eps, max_iters, tol)
                                : detail::sinkhorn_log(cost, n, m, eps, cmax, max_iters, tol);
  EntropicPlan out;
  out.iterations = pot.iterations + detail::newton_polish(pot, cost, n, m, eps, tol);
  out.plan = detail::plan_from(pot, cost, n, m, eps);
  out.marginal_error = detail::marginal_violation(out.plan, n, m);
  out.converged = out.marginal_error < tol;
  detail::finish_plan(out, cost, n, m, eps);
  return out;
}

/// Entropic self-transport of the uniform measure on n points onto itself,
/// for a symmetric cost. The optimal plan is symmetric, P_ij = exp((f_i + f_j
/// - C_ij) / eps), so a single potential suffices. Averaged fixed-point sweeps
/// with eps annealing, then Newton on f, whose Jacobian diag(P1) + P stays well
/// conditioned even when the plan is nearly diagonal.
inline EntropicPlan solve_symmetric_ot(std::span<const double> cost, std::size_t n, double eps, std::size_t max_iters,
                                       double tol) {
  if (n == 0 || cost.size() != n * n) throw DimensionError("solve_symmetric_ot: bad cost matrix");
  if (!(eps > 0.0)) throw ConfigurationError("solve_symmetric_ot: eps must be > 0");
  const double a = 1.0 / static_cast<double>(n);
  const double log_a = std::log(a);
  std::vector<double> f(n, 0.0), next(n), buf(n), row(n);
  auto sweep = [&](double e) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) buf[j] = (f[j] - cost[i * n + j]) / e;
      next[i] = e * log_a - e * detail::log_sum_exp(buf.data(), n);
    }
    for (std::size_t i = 0; i < n; ++i) f[i] = 0.5 * (f[i] + next[i]);
  };
  auto row_error = [&](const std::vector<double>& pot) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < n; ++j) r += std::exp((pot[i] + pot[j] - cost[i * n + j]) / eps);
      row[i] = r;
      err += std::abs(r - a);
    }
    return 2.0 * err;  // the column marginal is the row marginal
  };

  const double cmax = *std::max_element(cost.begin(), cost.end());
  for (double stage = std::max(eps, cmax); stage > eps; stage = std::max(eps, stage * 0.5))
    for (std::size_t it = 0; it < 20; ++it) sweep(stage);
  EntropicPlan out;
  double err = row_error(f);
  for (std::size_t it = 0; it < max_iters && err >= tol; ++it) {
    sweep(eps);
    ++out.iterations;
    err = row_error(f);
  }
  for (std::size_t step_count = 0; step_count < 50 && err >= tol; ++step_count) {
    ++out.iterations;
    std::vector<double> mat(n * n), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) mat[i * n + j] = std::exp((f[i] + f[j] - cost[i * n + j]) / eps);
      mat[i * n + i] += row[i];
      rhs[i] = eps * (a - row[i]);
    }
    if (!detail::solve_linear(mat, rhs, n)) break;
    bool improved = false;
    for (double step = 1.0; step > 1e-6; step *= 0.5) {
      std::vector<double> trial(f);
      for (std::size_t i = 0; i < n; ++i) trial[i] += step * rhs[i];
      const double trial_err = row_error(trial);
      if (trial_err < err) {
        f = std::move(trial);
        err = trial_err;
        improved = true;
        break;
      }
    }
    row_error(f);
    if (!improved) break;
  }
  out.plan.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.plan[i * n + j] = std::exp((f[i] + f[j] - cost[i * n + j]) / eps);
  out.marginal_error = detail::marginal_violation(out.plan, n, n);
  out.converged = out.marginal_error < tol;
  detail::finish_plan(out, cost, n, n, eps);
  return out;
}

/// Squared Euclidean cost between rows of X [n x d] and Y [m x d].
inline std::vector<double> squared_distances(std::span<const double> x, std::size_t n, std::span<const double> y,
                                             std::size_t m, std::size_t d) {
  std::vector<double> c(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x[i * d + k] - y[j * d + k];
        s += diff * diff;
      }
      c[i * m + j] = s;
    }
  return c;
}

struct SinkhornDiagnostics {
  double value = 0.0;
  double transport_cost = 0.0;  // <P*, C> of the cross term
  std::size_t iterations = 0;  // cross-term iterations
  double marginal_error = 0.0;
  bool converged = true;
};

/// Debiased entropic OT divergence between the empirical measures of X and Y
/// (uniform weights, squared Euclidean cost):
///
///   S(X, Y) = W(X, Y) - W(X, X) / 2 - W(Y, Y) / 2,
///   W(A, B) = min_P <P, C_AB> + eps' KL(P || a b^T),  eps' = epsilon * max C_XY.
///
/// S is symmetric, vanishes when X == Y, and tends to the exact OT cost as
/// epsilon -> 0. Gradients hold the converged plans fixed (envelope rule),
/// including the dependence of eps' on the largest cross cost.
/// Non-convergence within max_iters is reported through `diag`, not thrown.
inline Tensor sinkhorn_distance(const Tensor& x, const Tensor& y, const OTConfig& cfg,
                                SinkhornDiagnostics* diag = nullptr) {
  cfg.validate();
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
    throw DimensionError("sinkhorn_distance: point sets " + shape_string(x.shape()) + " and " +
                         shape_string(y.shape()) + " are incompatible");
  }
  const std::size_t d = x.dim(1);
  // Canonical argument order makes the result exactly symmetric.
  bool swapped = x.dim(0) > y.dim(0);
  if (x.dim(0) == y.dim(0)) {
    const auto xv = x.values();
    const auto yv = y.values();
    swapped = std::lexicographical_compare(yv.begin(), yv.end(), xv.begin(), xv.end());
  }
  const Tensor& a_pts = swapped ? y : x;
  const Tensor& b_pts = swapped ? x : y;
  const std::size_t n = a_pts.dim(0), m = b_pts.dim(0);
  const auto av = a_pts.values();
  const auto bv = b_pts.values();

  const auto c_ab = squared_distances(av, n, bv, m, d);
  const auto c_aa = squared_distances(av, n, av, n, d);
  const auto c_bb = squared_distances(bv, m, bv, m, d);
  const auto max_it = std::max_element(c_ab.begin(), c_ab.end());
  const double scale = *max_it;
  const std::size_t argmax = static_cast<std::size_t>(max_it - c_ab.begin());

  if (!(scale > 0.0) || (n == m && std::equal(av.begin(), av.end(), bv.begin()))) {
    if (diag) *diag = SinkhornDiagnostics{};
    return make_op_result({1}, {0.0}, {x, y}, detail::touch_parents);
  }

  const double eps = cfg.epsilon * scale;
  auto p_ab = solve_entropic_ot(c_ab, n, m, eps, cfg.max_iters, cfg.tol);
  auto p_aa = solve_symmetric_ot(c_aa, n, eps, cfg.max_iters, cfg.tol);
  auto p_bb = solve_symmetric_ot(c_bb, m, eps, cfg.max_iters, cfg.tol);
  const double raw = p_ab.objective - 0.5 * p_aa.objective - 0.5 * p_bb.objective;
  const double value = std::max(raw, 0.0);
  if (diag) {
    diag->value = value;
    diag->transport_cost = p_ab.transport_cost;
    diag->iterations = p_ab.iterations;
    diag->marginal_error = std::max({p_ab.marginal_error, p_aa.marginal_error, p_bb.marginal_error});
    diag->converged = p_ab.converged && p_aa.converged && p_bb.converged;
  }
  const double d_eps = p_ab.relative_entropy - 0.5 * p_aa.relative_entropy - 0.5 * p_bb.relative_entropy;
  if (raw <= 0.0) return make_op_result({1}, {value}, {x, y}, detail::touch_parents);

  return make_op_result(
      {1}, {value}, {x, y},
      [swapped, n, m, d, argmax, d_eps, epsilon = cfg.epsilon, pab = std::move(p_ab.plan),
       paa = std::move(p_aa.plan), pbb = std::move(p_bb.plan)](detail::TensorImpl& self) {
        const double g = (*self.grad)[0];
        const auto& av = self.parents[swapped ? 1 : 0]->values;
        const auto& bv = self.parents[swapped ? 0 : 1]->values;
        auto* ga = detail::grad_of(self, swapped ? 1 : 0);
        auto* gb = detail::grad_of(self, swapped ? 0 : 1);
        // dS/dC for each cost matrix; C_ij = |p_i - q_j|^2.
        auto chain = [&](const std::vector<double>& weights, double coef, std::size_t extra_index, double extra,
                         const std::vector<double>& pv, std::size_t rows, const std::vector<double>& qv,
                         std::size_t cols, std::vector<double>* gp, std::vector<double>* gq) {
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
              double w = coef * weights[i * cols + j];
              if (i * cols + j == extra_index) w += extra;
              if (w == 0.0) continue;
              w *= g;
              for (std::size_t k = 0; k < d; ++k) {
                const double diff = 2.0 * (pv[i * d + k] - qv[j * d + k]);
                if (gp) (*gp)[i * d + k] += w * diff;
                if (gq) (*gq)[j * d + k] -= w * diff;
              }
            }
        };
        const std::size_t none = static_cast<std::size_t>(-1);
        chain(pab, 1.0, argmax, epsilon * d_eps, av, n, bv, m, ga, gb);
        chain(paa, -0.5, none, 0.0, av, n, av, n, ga, ga);
        chain(pbb, -0.5, none, 0.0, bv, m, bv, m, gb, gb);
      });
}

/// Exact optimal assignment cost between equally sized point sets under
/// squared Euclidean cost, divided by the set size (Hungarian algorithm).
inline double exact_ot(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1) || x.dim(0) != y.dim(0)) {
    throw DimensionError("exact_ot: point sets must have equal shapes");
  }
  const std::size_t n = x.dim(0);
  if (n > 16) throw ContractError("exact_ot supports at most 16 points, got " + std::to_string(n));
  const auto c = squared_distances(x.values(), n, y.values(), n, x.dim(1));

  // Potentials-based Kuhn-Munkres, 1-indexed; column 0 is a sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c[(i0 - 1) * n + (j - 1)] - row_pot[i0] - col_pot[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          row_pot[match[j]] += delta;
          col_pot[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += c[(match[j] - 1) * n + (j - 1)];
  return total / static_cast<double>(n);
}

}  // namespace scdem
