#include "shq/distributions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace shq {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxGammaIter = 2000;

struct IncompleteGamma {
  double p;
  double q;
};

// Both regularized parts, each computed without cancellation in its own regime.
IncompleteGamma incomplete_gamma(double a, double x) {
  if (!(a > 0.0) || std::isnan(x)) throw InvalidArgument("incomplete gamma: need a > 0");
  if (x <= 0.0) return {0.0, 1.0};
  if (std::isinf(x)) return {1.0, 0.0};

  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxGammaIter; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    const double p = std::min(1.0, sum * std::exp(log_prefactor));
    return {p, 1.0 - p};
  }

  // Upper tail via the modified Lentz continued fraction.
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxGammaIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  const double q = std::min(1.0, std::exp(log_prefactor) * h);
  return {1.0 - q, q};
}

}  // namespace

double regularized_lower_gamma(double a, double x) { return incomplete_gamma(a, x).p; }

double regularized_upper_gamma(double a, double x) { return incomplete_gamma(a, x).q; }

// ---------------------------------------------------------------------------

GammaLaw::GammaLaw(double alpha, double beta) : alpha_(alpha), beta_(beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || std::isinf(alpha) || std::isinf(beta))
    throw InvalidArgument("GammaLaw: alpha and beta must be positive and finite");
  log_norm_ = alpha * std::log(beta) - std::lgamma(alpha);
}

double GammaLaw::density(double x) const {
  if (x <= 0.0) return 0.0;
  return std::exp(log_norm_ + (alpha_ - 1.0) * std::log(x) - beta_ * x);
}

double GammaLaw::cdf(double x) const { return regularized_lower_gamma(alpha_, beta_ * std::max(x, 0.0)); }

double GammaLaw::partial_moment(double x) const {
  // x^alpha e^{-x} / Gamma(alpha) = alpha P(alpha, x) - alpha P(alpha+1, x) in rate-1 units.
  return mean() * regularized_lower_gamma(alpha_ + 1.0, beta_ * std::max(x, 0.0));
}

double GammaLaw::survival(double x) const { return regularized_upper_gamma(alpha_, beta_ * std::max(x, 0.0)); }

double GammaLaw::upper_partial_moment(double x) const {
  return mean() * regularized_upper_gamma(alpha_ + 1.0, beta_ * std::max(x, 0.0));
}

// ---------------------------------------------------------------------------

NormalLaw::NormalLaw(double mu, double sigma) : mu_(mu), sigma_(sigma) {
  if (!std::isfinite(mu) || !(sigma >= 0.0) || std::isinf(sigma))
    throw InvalidArgument("NormalLaw: need finite mu and sigma >= 0");
}

double NormalLaw::density(double x) const {
  if (sigma_ == 0.0) return x == mu_ ? std::numeric_limits<double>::infinity() : 0.0;
  return normal_pdf((x - mu_) / sigma_) / sigma_;
}

double NormalLaw::cdf(double x) const {
  if (sigma_ == 0.0) return x >= mu_ ? 1.0 : 0.0;
  return normal_cdf((x - mu_) / sigma_);
}

double NormalLaw::partial_moment(double x) const {
  if (sigma_ == 0.0) return x >= mu_ ? mu_ : 0.0;
  if (std::isinf(x)) return x > 0 ? mu_ : 0.0;
  const double z = (x - mu_) / sigma_;
  return mu_ * normal_cdf(z) - sigma_ * normal_pdf(z);
}

double NormalLaw::survival(double x) const {
  if (sigma_ == 0.0) return x >= mu_ ? 0.0 : 1.0;
  return normal_cdf((mu_ - x) / sigma_);
}

double NormalLaw::upper_partial_moment(double x) const {
  if (sigma_ == 0.0) return x >= mu_ ? 0.0 : mu_;
  if (std::isinf(x)) return x > 0 ? 0.0 : mu_;
  const double z = (x - mu_) / sigma_;
  return mu_ * normal_cdf(-z) + sigma_ * normal_pdf(z);
}

void NormalLaw::accumulate(double weight, std::span<const double> xs, LawValues out) const {
  const double lo = mu_ - kNormalTailCutoff * sigma_;
  const double hi = mu_ + kNormalTailCutoff * sigma_;
  const auto first = std::lower_bound(xs.begin(), xs.end(), lo);
  const auto last = std::upper_bound(first, xs.end(), hi);
  const auto i_begin = static_cast<std::size_t>(first - xs.begin());
  const auto i_end = static_cast<std::size_t>(last - xs.begin());
  const double wm = weight * mu_;
  for (std::size_t i = 0; i < i_begin; ++i) {
    out.S[i] += weight;
    out.U[i] += wm;
  }
  for (std::size_t i = i_begin; i < i_end; ++i) {
    out.F[i] += weight * cdf(xs[i]);
    out.K[i] += weight * partial_moment(xs[i]);
    out.S[i] += weight * survival(xs[i]);
    out.U[i] += weight * upper_partial_moment(xs[i]);
  }
  for (std::size_t i = i_end; i < xs.size(); ++i) {
    out.F[i] += weight;
    out.K[i] += wm;
  }
}

// ---------------------------------------------------------------------------

NoncentralSquareLaw::NoncentralSquareLaw(double mu, double kappa, double lambda)
    : mu_(mu), kappa_(kappa), lambda_(lambda) {
  if (!std::isfinite(mu) || !(kappa > 0.0) || std::isinf(kappa) || !std::isfinite(lambda))
    throw InvalidArgument("NoncentralSquareLaw: need finite mu, lambda and kappa > 0");
}

double NoncentralSquareLaw::density(double x) const {
  if (x <= mu_) return 0.0;
  const double s = std::sqrt((x - mu_) / kappa_);
  return (normal_pdf(s - lambda_) + normal_pdf(-s - lambda_)) / (2.0 * kappa_ * s);
}

double NoncentralSquareLaw::cdf(double x) const {
  if (x <= mu_) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double s = std::sqrt((x - mu_) / kappa_);
  return std::max(0.0, normal_cdf(s - lambda_) - normal_cdf(-s - lambda_));
}

double NoncentralSquareLaw::partial_moment(double x) const {
  if (x <= mu_) return 0.0;
  if (std::isinf(x)) return mean();
  const double s = std::sqrt((x - mu_) / kappa_);
  const double xp = s - lambda_;
  const double xm = -s - lambda_;
  const double mass = std::max(0.0, normal_cdf(xp) - normal_cdf(xm));
  // E[(Z+lambda)^2 1{xm < Z <= xp}]
  const double sq = (1.0 + lambda_ * lambda_) * mass + normal_pdf(xm) * (lambda_ - s) -
                    normal_pdf(xp) * (s + lambda_);
  return mu_ * mass + kappa_ * std::max(0.0, sq);
}

double NoncentralSquareLaw::survival(double x) const {
  if (x <= mu_) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double s = std::sqrt((x - mu_) / kappa_);
  return std::min(1.0, normal_cdf(lambda_ - s) + normal_cdf(-s - lambda_));
}

double NoncentralSquareLaw::upper_partial_moment(double x) const {
  if (x <= mu_) return mean();
  if (std::isinf(x)) return 0.0;
  const double s = std::sqrt((x - mu_) / kappa_);
  const double xp = s - lambda_;
  const double xm = -s - lambda_;
  const double tail = std::min(1.0, normal_cdf(-xp) + normal_cdf(xm));
  // E[(Z+lambda)^2 1{Z > xp or Z <= xm}]
  const double sq = (1.0 + lambda_ * lambda_) * tail + normal_pdf(xp) * (s + lambda_) -
                    normal_pdf(xm) * (lambda_ - s);
  return mu_ * tail + kappa_ * std::max(0.0, sq);
}

void NoncentralSquareLaw::accumulate(double weight, std::span<const double> xs, LawValues out) const {
  // F = 1 once both -s-lambda < -cutoff and s-lambda > cutoff.
  const double s_full = kNormalTailCutoff + std::abs(lambda_);
  const double x_full = mu_ + kappa_ * s_full * s_full;
  const double m = mean();
  auto i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), mu_) - xs.begin());
  for (std::size_t j = 0; j < i; ++j) {
    out.S[j] += weight;
    out.U[j] += weight * m;
  }
  for (; i < xs.size() && xs[i] <= x_full; ++i) {
    out.F[i] += weight * cdf(xs[i]);
    out.K[i] += weight * partial_moment(xs[i]);
    out.S[i] += weight * survival(xs[i]);
    out.U[i] += weight * upper_partial_moment(xs[i]);
  }
  for (; i < xs.size(); ++i) {
    out.F[i] += weight;
    out.K[i] += weight * m;
  }
}

// ---------------------------------------------------------------------------
// Bivariate normal, after Genz's adaptation of the Drezner-Wesolowsky method.

namespace {

struct LegendreHalf {
  const double* w;
  const double* x;
  int n;
};

constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr std::array<double, 3> kX6 = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
constexpr std::array<double, 6> kW12 = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                        0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
constexpr std::array<double, 6> kX12 = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                        0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 10> kW20 = {
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
    0.1491729864726037,  0.1527533871307259};
constexpr std::array<double, 10> kX20 = {
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
    0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
    0.2277858511416451, 0.07652652113349733};

LegendreHalf legendre_for(double r) {
  const double ar = std::abs(r);
  if (ar < 0.3) return {kW6.data(), kX6.data(), 3};
  if (ar < 0.75) return {kW12.data(), kX12.data(), 6};
  return {kW20.data(), kX20.data(), 10};
}

// Upper orthant P(X > h, Y > k) for finite h, k and |r| < 1.
double bvn_upper(double h, double k, double r) {
  constexpr double tp = 2.0 * kPi;
  const LegendreHalf g = legendre_for(r);
  double hk = h * k;
  double bvn = 0.0;

  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (int i = 0; i < g.n; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sgn * g.x[i]));
        bvn += g.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  const double as = (1.0 - r) * (1.0 + r);
  double a = std::sqrt(as);
  const double bs = (h - k) * (h - k);
  const double c = (4.0 - hk) / 8.0;
  const double d = (12.0 - hk) / 80.0;
  double asr = -0.5 * (bs / as + hk);
  if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
  if (hk > -100.0) {
    const double b = std::sqrt(bs);
    const double sp = std::sqrt(tp) * normal_cdf(-b / a);
    bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
  }
  a *= 0.5;
  double sum = 0.0;
  for (int i = 0; i < g.n; ++i) {
    for (double sgn : {-1.0, 1.0}) {
      const double ax = a * (1.0 + sgn * g.x[i]);
      const double xs = ax * ax;
      asr = -0.5 * (bs / xs + hk);
      if (asr <= -100.0) continue;
      const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
      const double rs = std::sqrt(1.0 - xs);
      const double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
      sum += g.w[i] * std::exp(asr) * (sp - ep);
    }
  }
  bvn = (a * sum - bvn) / tp;

  if (r > 0.0) return bvn + normal_cdf(-std::max(h, k));
  if (h >= k) return -bvn;
  const double l = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
  return l - bvn;
}

}  // namespace

double bivariate_normal_cdf(double h, double k, double rho) {
  if (std::isnan(h) || std::isnan(k) || !(rho >= -1.0 && rho <= 1.0))
    throw InvalidArgument("bivariate_normal_cdf: need |rho| <= 1 and non-NaN bounds");
  if (h == -std::numeric_limits<double>::infinity() || k == -std::numeric_limits<double>::infinity())
    return 0.0;
  if (std::isinf(h)) return normal_cdf(k);
  if (std::isinf(k)) return normal_cdf(h);
  if (rho == 1.0) return normal_cdf(std::min(h, k));
  if (rho == -1.0) return std::max(0.0, normal_cdf(h) - normal_cdf(-k));
  if (rho == 0.0) return normal_cdf(h) * normal_cdf(k);
  return std::clamp(bvn_upper(-h, -k, rho), 0.0, 1.0);
}

double bivariate_normal_rectangle(double rho, ExtendedReal a, ExtendedReal b, ExtendedReal c,
                                  ExtendedReal d) {
  if (b < a || d < c) throw InvalidRectangle("bivariate_normal_rectangle: lower bound above upper bound");
  if (a == b || c == d) return 0.0;
  const double av = a.value(), bv = b.value(), cv = c.value(), dv = d.value();
  const double p = bivariate_normal_cdf(bv, dv, rho) - bivariate_normal_cdf(av, dv, rho) -
                   bivariate_normal_cdf(bv, cv, rho) + bivariate_normal_cdf(av, cv, rho);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace shq
