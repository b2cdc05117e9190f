#include "shq/schemes.hpp"

#include <cmath>

namespace shq {

MilsteinCoeffs milstein_coeffs(const HestonParams& p, double t, double y, double h) {
  if (!(y >= 0.0) || !(h > 0.0)) throw InvalidArgument("milstein_coeffs: need y >= 0 and h > 0");
  const double boost = std::exp(p.kappa * t);
  MilsteinCoeffs c;
  c.mu = h * boost * (p.kappa * p.theta - 0.25 * p.xi * p.xi);
  c.kappa_c = 0.25 * p.xi * p.xi * boost * h;
  c.lambda_c = 2.0 * std::sqrt(y) / (std::sqrt(h) * p.xi * std::exp(0.5 * p.kappa * t));
  return c;
}

double milstein_step(const HestonParams& p, double t, double y, double z, double h) {
  const MilsteinCoeffs c = milstein_coeffs(p, t, y, h);
  return c.mu + c.kappa_c * (z + c.lambda_c) * (z + c.lambda_c);
}

EulerCoeffs euler_coeffs(const HestonParams& p, double t, double x, double y, double h) {
  if (!(y >= 0.0) || !(h > 0.0)) throw InvalidArgument("euler_coeffs: need y >= 0 and h > 0");
  const double damp = std::exp(-p.kappa * t);
  return {x + (p.r - p.q - 0.5 * damp * y) * h, std::sqrt(damp * y * h)};
}

double euler_step(const HestonParams& p, double t, double x, double y, double z, double h) {
  const EulerCoeffs c = euler_coeffs(p, t, x, y, h);
  return c.mean + c.sd * z;
}

void require_scheme_positivity(const HestonParams& p) {
  if (p.xi * p.xi > 4.0 * p.kappa * p.theta)
    throw FellerViolation("boosted Milstein scheme is not positive: xi^2 > 4 kappa theta");
}

}  // namespace shq
