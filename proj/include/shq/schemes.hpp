#pragma once

#include "shq/heston.hpp"

namespace shq {

/// One Milstein step of the boosted variance Y = e^{kappa t} v:
/// Y' = mu + kappa_c (z + lambda_c)^2.
struct MilsteinCoeffs {
  double mu = 0.0;
  double kappa_c = 0.0;
  double lambda_c = 0.0;
};

MilsteinCoeffs milstein_coeffs(const HestonParams& p, double t, double y, double h);
double milstein_step(const HestonParams& p, double t, double y, double z, double h);

/// One Euler step of the log-asset: X' = mean + sd z.
struct EulerCoeffs {
  double mean = 0.0;
  double sd = 0.0;
};

EulerCoeffs euler_coeffs(const HestonParams& p, double t, double x, double y, double h);
double euler_step(const HestonParams& p, double t, double x, double y, double z, double h);

/// Throws FellerViolation when xi^2 > 4 kappa theta, where the boosted Milstein scheme
/// can leave the positive half-line.
void require_scheme_positivity(const HestonParams& p);

}  // namespace shq
