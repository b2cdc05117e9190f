#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "shq/quantization.hpp"

namespace shq {

enum class OptionKind { Call, Put };

const char* to_string(OptionKind kind);

/// Heston parameters. Without v0 the model is the stationary variant, whose initial
/// variance follows the CIR invariant law Gamma(theta*beta, beta), beta = 2 kappa / xi^2.
struct HestonParams {
  double s0 = 100.0;
  double r = 0.0;
  double q = 0.0;
  double theta = 0.04;
  double kappa = 1.0;
  double xi = 0.5;
  double rho = 0.0;
  std::optional<double> v0;

  bool stationary() const { return !v0.has_value(); }
  double feller_ratio() const { return xi * xi / (2.0 * kappa * theta); }
  double gamma_rate() const { return 2.0 * kappa / (xi * xi); }
  double gamma_shape() const { return theta * gamma_rate(); }
  /// Same parameters with a deterministic initial variance.
  HestonParams with_v0(double v) const;
  /// Throws InvalidArgument when a field is outside its admissible range.
  void validate() const;
};

struct EuroOption {
  double strike = 100.0;
  double maturity = 1.0;  // years
  OptionKind kind = OptionKind::Call;
  void validate() const;
};

/// Affine exponents of the log-price characteristic function:
/// E[exp(iu log S_T)] = exp(iu (log s0 + (r-q) T) + A + v B).
struct CfExponents {
  std::complex<double> A;
  std::complex<double> B;
};

CfExponents cf_exponents(const HestonParams& p, std::complex<double> u, double T);

/// Characteristic function of log S_T started from variance v (little-trap form).
std::complex<double> char_fn(const HestonParams& p, double v, std::complex<double> u, double T);

struct FourierOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  double initial_upper = 50.0;
  double max_upper = 1.0e6;
  double tail_tol = 1e-12;  // envelope of the integrand at the truncation point
  int max_subintervals = 4000;
};

/// Discrete law of the initial variance.
struct VarianceMixture {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Prices of same-maturity options under a mixture of initial variances, computed with one
/// Fourier integral of the mixture characteristic function. Puts come from put-call parity.
std::vector<double> mixture_prices(const HestonParams& p, const VarianceMixture& mix, double maturity,
                                   std::span<const double> strikes, std::span<const OptionKind> kinds,
                                   const FourierOptions& opts = {});

/// European price for a deterministic initial variance (p.v0 must be set).
double call_price_fourier(const HestonParams& p, const EuroOption& opt, const FourierOptions& opts = {});

double black_scholes(double s0, double strike, double maturity, double r, double q, double sigma, OptionKind kind);

/// Black-Scholes volatility in (0, 5] reproducing `price`; OutOfBounds when no such volatility exists.
double implied_vol(double price, double s0, double strike, double maturity, double r, double q, OptionKind kind);

/// Generalized Gauss-Laguerre rule normalised to the Gamma(alpha, 1) law:
/// sum_i weights[i] f(nodes[i]) approximates E[f(U)], U ~ Gamma(alpha, 1).
struct GammaQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GammaQuadrature gamma_laguerre_rule(double alpha, int n);

/// Invariant-law variance nodes from the Laguerre rule (nodes rescaled by 1/beta).
VarianceMixture stationary_laguerre_mixture(const HestonParams& p, int n = 64);
/// Invariant-law variance nodes from the optimal Gamma quantizer.
/// Default Lloyd options for variance quantizers: Anderson-accelerated.
LloydOptions default_vol_lloyd();
VarianceMixture stationary_quantized_mixture(const HestonParams& p, std::size_t n,
                                             const LloydOptions& lloyd = default_vol_lloyd());

double stationary_price_laguerre(const HestonParams& p, const EuroOption& opt, int n = 64,
                                 const FourierOptions& opts = {});

/// Convex combination of per-node Fourier prices over the Gamma quantizer of size n.
double stationary_price_quantized(const HestonParams& p, const EuroOption& opt, std::size_t n,
                                  const LloydOptions& lloyd = default_vol_lloyd(), const FourierOptions& opts = {});

}  // namespace shq
