#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "shq/errors.hpp"

namespace shq {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kPi = 3.141592653589793238462643383280;

/// Beyond this many standard deviations a normal CDF is treated as exactly 0 or 1
/// (the neglected mass is below 1.2e-19).
inline constexpr double kNormalTailCutoff = 9.0;

/// A real number or one of the two infinities, without relying on IEEE sentinels.
class ExtendedReal {
 public:
  enum class Kind { NegInf, Finite, PosInf };

  constexpr ExtendedReal() = default;
  constexpr ExtendedReal(double v) : kind_(Kind::Finite), value_(v) {}  // NOLINT implicit by design of the API

  static constexpr ExtendedReal neg_inf() { return ExtendedReal(Kind::NegInf); }
  static constexpr ExtendedReal pos_inf() { return ExtendedReal(Kind::PosInf); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::Finite; }
  constexpr bool is_neg_inf() const { return kind_ == Kind::NegInf; }
  constexpr bool is_pos_inf() const { return kind_ == Kind::PosInf; }
  /// Finite value; infinities map to +/- numeric_limits::infinity().
  constexpr double value() const {
    switch (kind_) {
      case Kind::NegInf: return -std::numeric_limits<double>::infinity();
      case Kind::PosInf: return std::numeric_limits<double>::infinity();
      default: return value_;
    }
  }

  friend constexpr bool operator<(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.kind_ != b.kind_) return static_cast<int>(a.kind_) < static_cast<int>(b.kind_);
    return a.kind_ == Kind::Finite && a.value_ < b.value_;
  }
  friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.kind_ == b.kind_ && (a.kind_ != Kind::Finite || a.value_ == b.value_);
  }

 private:
  constexpr explicit ExtendedReal(Kind k) : kind_(k) {}
  Kind kind_ = Kind::Finite;
  double value_ = 0.0;
};

// ---------------------------------------------------------------------------
// Standard normal

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

/// E[Z 1{Z <= x}] for Z ~ N(0,1), which equals -pdf(x).
inline double normal_partial_moment(double x) { return -normal_pdf(x); }

/// E[Z^2 1{Z <= x}].
inline double normal_second_partial_moment(double x) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return normal_cdf(x) - x * normal_pdf(x);
}

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
double regularized_lower_gamma(double a, double x);
/// Q(a, x) = 1 - P(a, x), accurate in the upper tail.
double regularized_upper_gamma(double a, double x);

/// Views on the four batched law quantities at a set of abscissae: lower CDF F,
/// lower partial moment K, survival S = 1 - F and upper partial moment U = mean - K.
struct LawValues {
  std::span<double> F, K, S, U;
};

// ---------------------------------------------------------------------------
// One-dimensional laws exposing cdf + first partial moment.

/// Gamma law with shape alpha and rate beta.
class GammaLaw {
 public:
  GammaLaw(double alpha, double beta);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double mean() const { return alpha_ / beta_; }
  double variance() const { return alpha_ / (beta_ * beta_); }
  double support_min() const { return 0.0; }

  double density(double x) const;
  double cdf(double x) const;
  /// E[X 1{X <= x}].
  double partial_moment(double x) const;
  double survival(double x) const;
  /// E[X 1{X > x}].
  double upper_partial_moment(double x) const;

 private:
  double alpha_;
  double beta_;
  double log_norm_;  // log(beta^alpha / Gamma(alpha))
};

/// N(mu, sigma^2); sigma == 0 is the point mass at mu.
class NormalLaw {
 public:
  NormalLaw(double mu, double sigma);

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  double mean() const { return mu_; }
  double variance() const { return sigma_ * sigma_; }
  double support_min() const { return -std::numeric_limits<double>::infinity(); }

  double density(double x) const;
  double cdf(double x) const;
  double partial_moment(double x) const;
  double survival(double x) const;
  double upper_partial_moment(double x) const;

  /// Adds weight * (F, K, S, U) at the sorted abscissae `xs` into `out`.
  /// Points more than kNormalTailCutoff standard deviations away are handled without
  /// special-function calls.
  void accumulate(double weight, std::span<const double> xs, LawValues out) const;

 private:
  double mu_;
  double sigma_;
};

/// Law of U = mu + kappa (Z + lambda)^2, Z standard normal.
class NoncentralSquareLaw {
 public:
  NoncentralSquareLaw(double mu, double kappa, double lambda);

  double mu() const { return mu_; }
  double kappa() const { return kappa_; }
  double lambda() const { return lambda_; }
  double mean() const { return mu_ + kappa_ * (lambda_ * lambda_ + 1.0); }
  double variance() const { return kappa_ * kappa_ * (2.0 + 4.0 * lambda_ * lambda_); }
  double support_min() const { return mu_; }

  double density(double x) const;
  double cdf(double x) const;
  double partial_moment(double x) const;
  double survival(double x) const;
  double upper_partial_moment(double x) const;

  void accumulate(double weight, std::span<const double> xs, LawValues out) const;

 private:
  double mu_;
  double kappa_;
  double lambda_;
};

/// Finite convex combination of laws of one type.
template <class Law>
class MixtureLaw {
 public:
  struct Component {
    double weight;
    Law law;
  };

  explicit MixtureLaw(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw InvalidArgument("MixtureLaw: no components");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight >= 0.0)) throw InvalidArgument("MixtureLaw: negative weight");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("MixtureLaw: weights must sum to 1");
  }

  const std::vector<Component>& components() const { return components_; }

  double cdf(double x) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * c.law.cdf(x);
    return s;
  }
  double partial_moment(double x) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * c.law.partial_moment(x);
    return s;
  }
  double density(double x) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * c.law.density(x);
    return s;
  }
  double mean() const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * c.law.mean();
    return s;
  }
  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (const auto& c : components_) {
      const double d = c.law.mean() - m;
      s += c.weight * (c.law.variance() + d * d);
    }
    return s;
  }
  double support_min() const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& c : components_)
      if (c.weight > 0.0) lo = std::min(lo, c.law.support_min());
    return lo;
  }

  double survival(double x) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * c.law.survival(x);
    return s;
  }
  double upper_partial_moment(double x) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * c.law.upper_partial_moment(x);
    return s;
  }

  /// Batched evaluation at sorted abscissae; overwrites `out`.
  void evaluate(std::span<const double> xs, LawValues out) const {
    for (auto* v : {&out.F, &out.K, &out.S, &out.U}) std::fill(v->begin(), v->end(), 0.0);
    for (const auto& c : components_) {
      if (c.weight == 0.0) continue;
      if constexpr (requires { c.law.accumulate(1.0, xs, out); }) {
        c.law.accumulate(c.weight, xs, out);
      } else {
        for (std::size_t i = 0; i < xs.size(); ++i) {
          out.F[i] += c.weight * c.law.cdf(xs[i]);
          out.K[i] += c.weight * c.law.partial_moment(xs[i]);
          out.S[i] += c.weight * c.law.survival(xs[i]);
          out.U[i] += c.weight * c.law.upper_partial_moment(xs[i]);
        }
      }
    }
  }

 private:
  std::vector<Component> components_;
};

// ---------------------------------------------------------------------------
// Correlated bivariate normal

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
/// Accepts infinite h, k; |rho| == 1 is reduced to a univariate probability.
double bivariate_normal_cdf(double h, double k, double rho);

/// P(X in [a,b], Y in [c,d]). Throws InvalidRectangle when a > b or c > d.
double bivariate_normal_rectangle(double rho, ExtendedReal a, ExtendedReal b, ExtendedReal c,
                                  ExtendedReal d);

}  // namespace shq
