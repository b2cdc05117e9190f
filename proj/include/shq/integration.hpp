#pragma once

#include <functional>
#include <span>
#include <vector>

namespace shq {

/// Fills `out` with the integrand components at `u`.
using VectorIntegrand = std::function<void(double u, std::span<double> out)>;

struct IntegrationOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_subintervals = 2000;
};

struct IntegrationResult {
  std::vector<double> value;
  double error = 0.0;  // largest component error estimate
  int evaluations = 0;
};

/// Globally adaptive Gauss-Kronrod (G10/K21) for vector-valued integrands on [a, b].
/// Throws IntegrationFailure when the subinterval budget runs out before the tolerance is met.
IntegrationResult integrate_gk(const VectorIntegrand& f, std::size_t dim, double a, double b,
                               const IntegrationOptions& opts = {});

}  // namespace shq
