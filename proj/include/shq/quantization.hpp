#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shq/distributions.hpp"
#include "shq/errors.hpp"

namespace shq {

/// Anything with a CDF and a first partial moment E[X 1{X <= x}].
template <class L>
concept QuantizableLaw = requires(const L& law, double x) {
  { law.cdf(x) } -> std::convertible_to<double>;
  { law.partial_moment(x) } -> std::convertible_to<double>;
  { law.mean() } -> std::convertible_to<double>;
  { law.variance() } -> std::convertible_to<double>;
  { law.support_min() } -> std::convertible_to<double>;
};

/// Sorted grid, Voronoi cell probabilities and quadratic distortion of a law.
struct Quantizer1D {
  std::vector<double> grid;
  std::vector<double> weights;
  double distortion = 0.0;
  std::string law_tag;

  std::size_t size() const { return grid.size(); }
  /// Throws InvalidArgument unless the grid is strictly increasing and weights form a distribution.
  void validate() const;
};

/// Cell boundaries x_{1/2} < ... < x_{N+1/2}.
struct VoronoiEdges {
  std::vector<ExtendedReal> half_points;
};

VoronoiEdges voronoi_edges(std::span<const double> grid, double support_min);

struct LloydOptions {
  double tolerance = 1e-10;  // relative sup-norm of the grid update
  int max_iters = 10'000;
  bool anderson = false;
  int anderson_window = 5;
  bool newton = false;  // Newton steps on the tridiagonal distortion Hessian once the residual is small
  std::vector<double>* residual_trace = nullptr;  // receives one residual per iteration when set
};

std::string quantizer_to_json(const Quantizer1D& q);
Quantizer1D quantizer_from_json(const std::string& text);

namespace detail {

struct EdgeValues {
  std::vector<double> x, F, K, S, U;
  LawValues view() { return {F, K, S, U}; }
};

/// Law quantities at the N-1 interior edges (grid midpoints), batched when the law supports it.
/// Laws without an upper-tail API fall back to complements.
template <QuantizableLaw Law>
void interior_moments(const Law& law, std::span<const double> grid, EdgeValues& e) {
  const std::size_t m = grid.size() - 1;
  for (auto* v : {&e.x, &e.F, &e.K, &e.S, &e.U}) v->resize(m);
  for (std::size_t i = 0; i < m; ++i) e.x[i] = 0.5 * (grid[i] + grid[i + 1]);
  if constexpr (requires { law.evaluate(std::span<const double>(e.x), e.view()); }) {
    law.evaluate(std::span<const double>(e.x), e.view());
  } else {
    const double mean = law.mean();
    for (std::size_t i = 0; i < m; ++i) {
      e.F[i] = law.cdf(e.x[i]);
      e.K[i] = law.partial_moment(e.x[i]);
      if constexpr (requires { law.survival(0.0); law.upper_partial_moment(0.0); }) {
        e.S[i] = law.survival(e.x[i]);
        e.U[i] = law.upper_partial_moment(e.x[i]);
      } else {
        e.S[i] = 1.0 - e.F[i];
        e.U[i] = mean - e.K[i];
      }
    }
  }
}

/// Per-cell masses and partial moments; differences are taken in whichever tail keeps
/// them free of cancellation.
inline void cell_moments(double mean, const EdgeValues& e, std::vector<double>& mass,
                         std::vector<double>& moment) {
  const std::size_t n = e.F.size() + 1;
  mass.resize(n);
  moment.resize(n);
  double fa = 0.0, ka = 0.0, sa = 1.0, ua = mean;
  for (std::size_t i = 0; i < n; ++i) {
    const bool last = i + 1 == n;
    const double fb = last ? 1.0 : e.F[i];
    const double kb = last ? mean : e.K[i];
    const double sb = last ? 0.0 : e.S[i];
    const double ub = last ? 0.0 : e.U[i];
    if (fb <= 0.5) {
      mass[i] = fb - fa;
      moment[i] = kb - ka;
    } else {
      mass[i] = sa - sb;
      moment[i] = ua - ub;
    }
    fa = fb;
    ka = kb;
    sa = sb;
    ua = ub;
  }
}

inline bool strictly_increasing(std::span<const double> x) {
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) return false;
  return true;
}

}  // namespace detail

/// One Lloyd update: each point moves to the conditional mean of its Voronoi cell.
template <QuantizableLaw Law>
std::vector<double> lloyd_iterate(std::span<const double> grid, const Law& law) {
  if (grid.empty()) throw InvalidArgument("lloyd_iterate: empty grid");
  if (!detail::strictly_increasing(grid)) throw InvalidArgument("lloyd_iterate: grid must be strictly increasing");
  detail::EdgeValues e;
  std::vector<double> mass, moment;
  detail::interior_moments(law, grid, e);
  detail::cell_moments(law.mean(), e, mass, moment);
  std::vector<double> out(grid.size());
  const double lo = law.support_min();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(mass[i] >= 1e-300)) throw EmptyCell("lloyd_iterate: cell " + std::to_string(i) + " has no mass");
    out[i] = std::max(moment[i] / mass[i], lo);
  }
  return out;
}

/// Half the mean squared distance to the nearest grid point.
template <QuantizableLaw Law>
double distortion(std::span<const double> grid, const Law& law) {
  detail::EdgeValues e;
  std::vector<double> mass, moment;
  detail::interior_moments(law, grid, e);
  detail::cell_moments(law.mean(), e, mass, moment);
  // Centred at the mean to limit cancellation against the variance.
  const double m = law.mean();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double d = grid[i] - m;
    s += 2.0 * d * (moment[i] - m * mass[i]) - d * d * mass[i];
  }
  return std::max(0.0, 0.5 * (law.variance() - s));
}

/// Quantile grid F^{-1}((2i-1)/(2N)) located by bisection.
template <QuantizableLaw Law>
std::vector<double> quantile_grid(const Law& law, std::size_t n) {
  const double mean = law.mean();
  const double sd = std::sqrt(std::max(law.variance(), 0.0));
  const double lo_support = law.support_min();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
    double lo = std::isfinite(lo_support) ? lo_support : mean - sd;
    double step = std::max(sd, 1e-300);
    while (!std::isfinite(lo_support) && law.cdf(lo) > target) {
      lo -= step;
      step *= 2.0;
    }
    double hi = mean + sd;
    step = std::max(sd, 1e-300);
    while (law.cdf(hi) < target) {
      hi += step;
      step *= 2.0;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (law.cdf(mid) < target ? lo : hi) = mid;
    }
    out[i] = 0.5 * (lo + hi);
  }
  // Plateaus of the CDF can produce ties; nudge them apart.
  for (std::size_t i = 1; i < n; ++i)
    if (!(out[i] > out[i - 1])) out[i] = std::nextafter(out[i - 1], INFINITY) + 1e-12 * std::max(sd, 1e-300);
  return out;
}

namespace detail {

inline double relative_step(std::span<const double> a, std::span<const double> b, double scale) {
  double num = 0.0, den = scale;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(a[i]));
  }
  return num / den;
}

// Newton step for the distortion gradient x_i m_i - K_i. The Hessian is tridiagonal with
// off-diagonal -f(e) (x_{i+1} - x_i) / 4 at each interior edge e. nullopt when the step is unusable.
template <QuantizableLaw Law>
std::optional<std::vector<double>> newton_step(const Law& law, const std::vector<double>& x, const EdgeValues& e,
                                               const std::vector<double>& mass, const std::vector<double>& g,
                                               double lo) {
  if constexpr (!requires { law.density(0.0); }) {
    return std::nullopt;
  } else {
    const std::size_t n = x.size();
    std::vector<double> c(n - 1), diag(n), rhs(n);
    for (std::size_t i = 0; i + 1 < n; ++i) c[i] = 0.25 * law.density(e.x[i]) * (x[i + 1] - x[i]);
    for (std::size_t i = 0; i < n; ++i) {
      diag[i] = mass[i] - (i > 0 ? c[i - 1] : 0.0) - (i + 1 < n ? c[i] : 0.0);
      rhs[i] = mass[i] * (x[i] - g[i]);
    }
    // Thomas algorithm
    std::vector<double> cp(n), dp(n);
    if (!(diag[0] > 0.0)) return std::nullopt;
    cp[0] = n > 1 ? -c[0] / diag[0] : 0.0;
    dp[0] = rhs[0] / diag[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double den = diag[i] + c[i - 1] * cp[i - 1];
      if (!(den > 0.0)) return std::nullopt;
      cp[i] = i + 1 < n ? -c[i] / den : 0.0;
      dp[i] = (rhs[i] + c[i - 1] * dp[i - 1]) / den;
    }
    std::vector<double> d(n);
    d[n - 1] = dp[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) d[i] = dp[i] - cp[i] * d[i + 1];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = x[i] - d[i];
      if (!std::isfinite(out[i]) || out[i] < lo || (i > 0 && !(out[i] > out[i - 1]))) return std::nullopt;
    }
    return out;
  }
}

template <QuantizableLaw Law>
Quantizer1D run_lloyd(const Law& law, std::vector<double> x, const LloydOptions& opts, const std::string& tag) {
  const std::size_t n = x.size();
  const double scale = std::sqrt(std::max(law.variance(), 0.0));
  const double lo = law.support_min();

  // Anderson history: residual and image differences.
  const int window = std::max(1, opts.anderson_window);
  std::deque<Eigen::VectorXd> dF, dG;
  Eigen::VectorXd f_prev, g_prev;
  double residual = INFINITY;

  bool newton = opts.newton;
  bool newton_last = false;
  double prev_residual = INFINITY;
  EdgeValues e;
  std::vector<double> mass, moment;

  for (int it = 0; it < opts.max_iters; ++it) {
    interior_moments(law, std::span<const double>(x), e);
    cell_moments(law.mean(), e, mass, moment);
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mass[i] >= 1e-300)) throw EmptyCell("lloyd_iterate: cell " + std::to_string(i) + " has no mass");
      g[i] = std::max(moment[i] / mass[i], lo);
    }
    residual = relative_step(g, x, scale);
    if (opts.residual_trace) opts.residual_trace->push_back(residual);
    if (residual <= opts.tolerance) {
      x = std::move(g);
      break;
    }
    if (newton_last && !(residual < prev_residual)) newton = false;
    prev_residual = residual;
    newton_last = false;
    if (newton && residual < 1e-4) {
      if (auto step = newton_step(law, x, e, mass, g, lo)) {
        x = std::move(*step);
        newton_last = true;
        dF.clear();
        dG.clear();
        f_prev.resize(0);
        continue;
      }
    }
    if (!opts.anderson) {
      x = std::move(g);
      continue;
    }
    Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(n));
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd f = gv - xv;
    if (f_prev.size() == f.size()) {
      dF.push_back(f - f_prev);
      dG.push_back(gv - g_prev);
      if (static_cast<int>(dF.size()) > window) {
        dF.pop_front();
        dG.pop_front();
      }
    }
    f_prev = f;
    g_prev = gv;
    std::vector<double> next(g);
    if (!dF.empty()) {
      const auto m = static_cast<Eigen::Index>(dF.size());
      Eigen::MatrixXd A(static_cast<Eigen::Index>(n), m), B(static_cast<Eigen::Index>(n), m);
      for (Eigen::Index j = 0; j < m; ++j) {
        A.col(j) = dF[static_cast<std::size_t>(j)];
        B.col(j) = dG[static_cast<std::size_t>(j)];
      }
      const Eigen::VectorXd gamma = A.colPivHouseholderQr().solve(f);
      const Eigen::VectorXd candidate = gv - B * gamma;
      bool ok = candidate.allFinite();
      for (Eigen::Index i = 0; ok && i < candidate.size(); ++i) {
        if (candidate[i] < lo) ok = false;
        if (i > 0 && !(candidate[i] > candidate[i - 1])) ok = false;
      }
      if (ok) {
        for (std::size_t i = 0; i < n; ++i) next[i] = candidate[static_cast<Eigen::Index>(i)];
      } else {
        dF.clear();
        dG.clear();
      }
    }
    x = std::move(next);
    if (it + 1 == opts.max_iters) break;
  }
  if (!(residual <= opts.tolerance))
    throw NoConvergence("Lloyd iteration did not converge for " + tag, residual);

  Quantizer1D q;
  q.grid = x;
  interior_moments(law, std::span<const double>(x), e);
  cell_moments(law.mean(), e, mass, moment);
  q.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) q.weights[i] = std::max(mass[i], 0.0);
  q.distortion = distortion(std::span<const double>(x), law);
  q.law_tag = tag;
  return q;
}

}  // namespace detail

/// Optimal quadratic quantizer of size n by Lloyd's fixed-point method.
/// Without `init` the quantile grid is used. A first EmptyCell failure restarts once
/// from a fresh quantile grid with plain Lloyd steps.
template <QuantizableLaw Law>
Quantizer1D optimize(const Law& law, std::size_t n, const LloydOptions& opts = {},
                     std::optional<std::vector<double>> init = std::nullopt, const std::string& tag = "") {
  if (n == 0) throw InvalidArgument("optimize: N must be at least 1");
  if (n == 1) {
    Quantizer1D q;
    q.grid = {law.mean()};
    q.weights = {1.0};
    q.distortion = 0.5 * law.variance();
    q.law_tag = tag;
    return q;
  }
  std::vector<double> x0;
  if (init) {
    if (init->size() != n || !detail::strictly_increasing(*init))
      throw InvalidArgument("optimize: init must be a strictly increasing grid of size N");
    x0 = *init;
  } else {
    x0 = quantile_grid(law, n);
  }
  try {
    return detail::run_lloyd(law, std::move(x0), opts, tag);
  } catch (const EmptyCell&) {
    LloydOptions plain = opts;
    plain.anderson = false;
    return detail::run_lloyd(law, quantile_grid(law, n), plain, tag);
  }
}

/// Quantizer of the invariant Gamma(theta*beta, beta) law, beta = 2 kappa / xi^2,
/// obtained from the unit-rate quantizer rescaled by 1/beta.
Quantizer1D stationary_vol_quantizer(double theta, double kappa, double xi, std::size_t n,
                                     const LloydOptions& opts = {});

}  // namespace shq
