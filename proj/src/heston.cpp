#include "shq/heston.hpp"

#include <algorithm>
#include <cmath>
#include <Eigen/Eigenvalues>

#include "shq/integration.hpp"

namespace shq {

using cd = std::complex<double>;

const char* to_string(OptionKind kind) { return kind == OptionKind::Call ? "Call" : "Put"; }

HestonParams HestonParams::with_v0(double v) const {
  HestonParams out = *this;
  out.v0 = v;
  return out;
}

void HestonParams::validate() const {
  auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
  if (!positive(s0)) throw InvalidArgument("HestonParams: s0 must be positive");
  if (!std::isfinite(r) || !std::isfinite(q)) throw InvalidArgument("HestonParams: r and q must be finite");
  if (!positive(theta) || !positive(kappa) || !positive(xi))
    throw InvalidArgument("HestonParams: theta, kappa, xi must be positive");
  if (!(rho >= -1.0 && rho <= 1.0)) throw InvalidArgument("HestonParams: rho must lie in [-1, 1]");
  if (v0 && !(*v0 >= 0.0 && std::isfinite(*v0))) throw InvalidArgument("HestonParams: v0 must be nonnegative");
}

void EuroOption::validate() const {
  if (!(strike > 0.0) || !std::isfinite(strike)) throw InvalidArgument("EuroOption: strike must be positive");
  if (!(maturity > 0.0) || !std::isfinite(maturity)) throw InvalidArgument("EuroOption: maturity must be positive");
}

namespace {

cd log1p_complex(cd z) {
  if (std::abs(z) < 1e-5) return z - 0.5 * z * z + z * z * z / 3.0;
  return std::log(1.0 + z);
}

}  // namespace

CfExponents cf_exponents(const HestonParams& p, cd u, double T) {
  const cd iu = cd(0.0, 1.0) * u;
  const cd k_minus = p.kappa - p.rho * p.xi * iu;  // kappa - rho xi iu
  const cd w = iu + u * u;
  const cd d = std::sqrt(k_minus * k_minus + p.xi * p.xi * w);
  const cd k_plus_d = k_minus + d;
  if (std::abs(k_plus_d) == 0.0) return {0.0, 0.0};
  // (kappa - rho xi iu - d) / xi^2 without cancellation for small xi.
  const cd c = -w / k_plus_d;
  const cd g = p.xi * p.xi * c / k_plus_d;
  const cd e = std::exp(-d * T);
  const cd one_minus_ge = 1.0 - g * e;
  const cd B = c * (1.0 - e) / one_minus_ge;
  // log((1 - g e) / (1 - g)) = log1p(g (1 - e) / (1 - g))
  const cd L = log1p_complex(g * (1.0 - e) / (1.0 - g));
  const cd A = p.kappa * p.theta * (c * T - 2.0 * L / (p.xi * p.xi));
  return {A, B};
}

cd char_fn(const HestonParams& p, double v, cd u, double T) {
  const CfExponents ex = cf_exponents(p, u, T);
  const cd iu = cd(0.0, 1.0) * u;
  return std::exp(iu * (std::log(p.s0) + (p.r - p.q) * T) + ex.A + v * ex.B);
}

std::vector<double> mixture_prices(const HestonParams& p, const VarianceMixture& mix, double maturity,
                                   std::span<const double> strikes, std::span<const OptionKind> kinds,
                                   const FourierOptions& opts) {
  p.validate();
  if (mix.nodes.empty() || mix.nodes.size() != mix.weights.size())
    throw InvalidArgument("mixture_prices: malformed variance mixture");
  if (strikes.size() != kinds.size()) throw InvalidArgument("mixture_prices: strikes and kinds differ in length");
  for (double K : strikes) EuroOption{K, maturity, OptionKind::Call}.validate();

  const double T = maturity;
  const double x_fwd = std::log(p.s0) + (p.r - p.q) * T;
  const double disc = std::exp(-p.r * T);
  const double fwd_disc = p.s0 * std::exp(-p.q * T);
  const std::size_t m = strikes.size();
  std::vector<double> log_k(m);
  for (std::size_t k = 0; k < m; ++k) log_k[k] = std::log(strikes[k]);

  auto mixture_cf = [&](cd u) {
    const CfExponents ex = cf_exponents(p, u, T);
    cd s = 0.0;
    for (std::size_t j = 0; j < mix.nodes.size(); ++j) s += mix.weights[j] * std::exp(mix.nodes[j] * ex.B);
    return std::exp(cd(0.0, 1.0) * u * x_fwd + ex.A) * s;
  };
  // psi(u - i) and psi(u) for every strike share the same two mixture evaluations.
  auto integrand = [&](double u, std::span<double> out) {
    const cd psi_shift = mixture_cf(cd(u, -1.0));
    const cd psi = mixture_cf(cd(u, 0.0));
    const cd iu(0.0, u);
    for (std::size_t k = 0; k < m; ++k) {
      const cd phase = std::exp(cd(0.0, -u * log_k[k]));
      out[k] = std::real(phase * (psi_shift - strikes[k] * psi) / iu);
    }
  };
  auto envelope = [&](double u) {
    const cd psi_shift = mixture_cf(cd(u, -1.0));
    const cd psi = mixture_cf(cd(u, 0.0));
    double e = 0.0;
    for (std::size_t k = 0; k < m; ++k) e = std::max(e, std::abs(psi_shift - strikes[k] * psi) / u);
    return e;
  };

  double upper = opts.initial_upper;
  while (!(envelope(upper) <= opts.tail_tol)) {
    upper *= 2.0;
    if (upper > opts.max_upper)
      throw IntegrationFailure("mixture_prices: integrand tail still significant at u = " +
                               std::to_string(opts.max_upper));
  }

  IntegrationOptions iopts;
  iopts.abs_tol = opts.abs_tol;
  iopts.rel_tol = opts.rel_tol;
  iopts.max_subintervals = opts.max_subintervals;
  const IntegrationResult integral = integrate_gk(integrand, m, 0.0, upper, iopts);

  std::vector<double> prices(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double k_disc = strikes[k] * disc;
    double call = 0.5 * (fwd_disc - k_disc) + disc / kPi * integral.value[k];
    call = std::clamp(call, std::max(0.0, fwd_disc - k_disc), fwd_disc);
    prices[k] = kinds[k] == OptionKind::Call ? call : call - fwd_disc + k_disc;
    if (kinds[k] == OptionKind::Put) prices[k] = std::max(prices[k], std::max(0.0, k_disc - fwd_disc));
  }
  return prices;
}

double call_price_fourier(const HestonParams& p, const EuroOption& opt, const FourierOptions& opts) {
  if (!p.v0) throw InvalidArgument("call_price_fourier: a deterministic v0 is required");
  opt.validate();
  const VarianceMixture point{{*p.v0}, {1.0}};
  const double K[1] = {opt.strike};
  const OptionKind kinds[1] = {opt.kind};
  return mixture_prices(p, point, opt.maturity, K, kinds, opts)[0];
}

double black_scholes(double s0, double strike, double maturity, double r, double q, double sigma, OptionKind kind) {
  const double disc = std::exp(-r * maturity);
  const double fwd = s0 * std::exp((r - q) * maturity);
  const double sd = sigma * std::sqrt(maturity);
  double call;
  if (sd <= 0.0) {
    call = disc * std::max(fwd - strike, 0.0);
  } else {
    const double d1 = (std::log(fwd / strike) + 0.5 * sd * sd) / sd;
    call = disc * (fwd * normal_cdf(d1) - strike * normal_cdf(d1 - sd));
  }
  if (kind == OptionKind::Call) return call;
  if (sd <= 0.0) return disc * std::max(strike - fwd, 0.0);
  const double d1 = (std::log(fwd / strike) + 0.5 * sd * sd) / sd;
  return disc * (strike * normal_cdf(sd - d1) - fwd * normal_cdf(-d1));
}

double implied_vol(double price, double s0, double strike, double maturity, double r, double q, OptionKind kind) {
  if (!(s0 > 0.0) || !(strike > 0.0) || !(maturity > 0.0) || !std::isfinite(price))
    throw InvalidArgument("implied_vol: need positive s0, strike, maturity and a finite price");
  const double disc = std::exp(-r * maturity);
  const double fwd_disc = s0 * std::exp(-q * maturity);
  const double k_disc = strike * disc;
  // Work with the out-of-the-money side, whose price carries the time value only.
  OptionKind side = kind;
  double target = price;
  if (kind == OptionKind::Call && k_disc < fwd_disc) {
    side = OptionKind::Put;
    target = price - fwd_disc + k_disc;
  } else if (kind == OptionKind::Put && k_disc > fwd_disc) {
    side = OptionKind::Call;
    target = price + fwd_disc - k_disc;
  }
  const double upper = side == OptionKind::Call ? fwd_disc : k_disc;
  constexpr double kMaxVol = 5.0;
  if (!(target > 0.0) || !(target < upper)) throw OutOfBounds("implied_vol: price outside no-arbitrage bounds");
  auto f = [&](double s) { return black_scholes(s0, strike, maturity, r, q, s, side) - target; };
  if (f(kMaxVol) < 0.0) throw OutOfBounds("implied_vol: price above the Black-Scholes price at volatility 5");

  double lo = 0.0, hi = kMaxVol;
  double sigma = std::clamp(std::sqrt(2.0 * std::abs(std::log(fwd_disc / k_disc)) / maturity), 0.05, 1.0);
  const double sqrt_t = std::sqrt(maturity);
  for (int it = 0; it < 300; ++it) {
    const double diff = f(sigma);
    if (diff == 0.0) return sigma;
    (diff > 0.0 ? hi : lo) = sigma;
    const double sd = sigma * sqrt_t;
    const double d1 = (std::log(fwd_disc / k_disc) + 0.5 * sd * sd) / sd;
    const double vega = fwd_disc * normal_pdf(d1) * sqrt_t;
    double next = sigma - diff / vega;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - sigma) <= 1e-15 * std::max(1.0, sigma) || hi - lo <= 1e-16) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

GammaQuadrature gamma_laguerre_rule(double alpha, int n) {
  if (!(alpha > 0.0) || n < 1) throw InvalidArgument("gamma_laguerre_rule: need alpha > 0 and n >= 1");
  // Jacobi matrix of the generalized Laguerre polynomials with exponent alpha - 1.
  const double a = alpha - 1.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = 2.0 * i + a + 1.0;
    if (i + 1 < n) {
      const double b = std::sqrt((i + 1.0) * (i + 1.0 + a));
      J(i, i + 1) = b;
      J(i + 1, i) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  if (es.info() != Eigen::Success) throw NodeComputationFailure("gamma_laguerre_rule: eigen solve failed");
  GammaQuadrature rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    rule.weights[i] = v * v;
    total += rule.weights[i];
    if (!(rule.nodes[i] > 0.0) || !std::isfinite(rule.weights[i]))
      throw NodeComputationFailure("gamma_laguerre_rule: invalid node or weight");
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

VarianceMixture stationary_laguerre_mixture(const HestonParams& p, int n) {
  p.validate();
  const GammaQuadrature rule = gamma_laguerre_rule(p.gamma_shape(), n);
  VarianceMixture mix{rule.nodes, rule.weights};
  for (double& v : mix.nodes) v /= p.gamma_rate();
  return mix;
}

LloydOptions default_vol_lloyd() {
  LloydOptions o;
  o.anderson = true;
  o.newton = true;
  return o;
}

VarianceMixture stationary_quantized_mixture(const HestonParams& p, std::size_t n, const LloydOptions& lloyd) {
  p.validate();
  const Quantizer1D q = stationary_vol_quantizer(p.theta, p.kappa, p.xi, n, lloyd);
  return {q.grid, q.weights};
}

double stationary_price_laguerre(const HestonParams& p, const EuroOption& opt, int n, const FourierOptions& opts) {
  opt.validate();
  const VarianceMixture mix = stationary_laguerre_mixture(p, n);
  const double K[1] = {opt.strike};
  const OptionKind kinds[1] = {opt.kind};
  return mixture_prices(p, mix, opt.maturity, K, kinds, opts)[0];
}

double stationary_price_quantized(const HestonParams& p, const EuroOption& opt, std::size_t n,
                                  const LloydOptions& lloyd, const FourierOptions& opts) {
  opt.validate();
  const VarianceMixture mix = stationary_quantized_mixture(p, n, lloyd);
  double price = 0.0;
  for (std::size_t i = 0; i < mix.nodes.size(); ++i)
    price += mix.weights[i] * call_price_fourier(p.with_v0(mix.nodes[i]), opt, opts);
  return price;
}

}  // namespace shq
