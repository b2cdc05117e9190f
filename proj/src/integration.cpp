#include "shq/integration.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <queue>

#include "shq/errors.hpp"

namespace shq {

namespace {

using Kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
using Gauss = boost::math::quadrature::gauss<double, 10>;

struct Piece {
  double a, b;
  std::vector<double> kronrod;
  double error;
  bool operator<(const Piece& o) const { return error < o.error; }
};

Piece rule(const VectorIntegrand& f, std::size_t dim, double a, double b, std::vector<double>& buf, int& evals) {
  const auto& x = Kronrod::abscissa();
  const auto& wk = Kronrod::weights();
  const auto& wg = Gauss::weights();
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  Piece p{a, b, std::vector<double>(dim, 0.0), 0.0};
  std::vector<double> gauss(dim, 0.0);
  buf.resize(dim);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int sgn : {1, -1}) {
      if (i == 0 && sgn < 0) continue;
      f(c + sgn * h * x[i], buf);
      ++evals;
      for (std::size_t d = 0; d < dim; ++d) {
        p.kronrod[d] += wk[i] * buf[d];
        if (i % 2 == 1) gauss[d] += wg[(i - 1) / 2] * buf[d];
      }
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    p.kronrod[d] *= h;
    p.error = std::max(p.error, std::abs(p.kronrod[d] - h * gauss[d]));
  }
  if (!std::isfinite(p.error)) throw IntegrationFailure("integrate_gk: non-finite integrand");
  return p;
}

}  // namespace

IntegrationResult integrate_gk(const VectorIntegrand& f, std::size_t dim, double a, double b,
                               const IntegrationOptions& opts) {
  IntegrationResult res;
  std::vector<double> buf;
  std::priority_queue<Piece> heap;
  heap.push(rule(f, dim, a, b, buf, res.evaluations));
  std::vector<double> total = heap.top().kronrod;
  double err = heap.top().error;
  for (int n = 1;; ++n) {
    double scale = 0.0;
    for (double v : total) scale = std::max(scale, std::abs(v));
    if (err <= std::max(opts.abs_tol, opts.rel_tol * scale)) break;
    if (n >= opts.max_subintervals)
      throw IntegrationFailure("integrate_gk: tolerance not reached within the subinterval budget");
    const Piece worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    Piece left = rule(f, dim, worst.a, mid, buf, res.evaluations);
    Piece right = rule(f, dim, mid, worst.b, buf, res.evaluations);
    for (std::size_t d = 0; d < dim; ++d) total[d] += left.kronrod[d] + right.kronrod[d] - worst.kronrod[d];
    err += left.error + right.error - worst.error;
    heap.push(std::move(left));
    heap.push(std::move(right));
  }
  // Re-sum to drop the drift of the running updates.
  std::fill(total.begin(), total.end(), 0.0);
  err = 0.0;
  while (!heap.empty()) {
    for (std::size_t d = 0; d < dim; ++d) total[d] += heap.top().kronrod[d];
    err += heap.top().error;
    heap.pop();
  }
  res.value = std::move(total);
  res.error = err;
  return res;
}

}  // namespace shq
