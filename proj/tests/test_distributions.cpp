#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <random>

#include "shq/distributions.hpp"

using namespace shq;

namespace {

double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

// P(X <= h, Y <= k) as a one-dimensional integral of the conditional law.
double bvn_oracle(double h, double k, double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  auto f = [&](double x) { return normal_pdf(x) * normal_cdf((k - rho * x) / s); };
  return integrate(f, -std::numeric_limits<double>::infinity(), h);
}

}  // namespace

TEST(IncompleteGamma, MatchesBoost) {
  for (double a : {0.05, 0.3, 0.5, 0.7842, 1.0, 2.5, 7.0, 30.0, 150.0}) {
    for (double x : {1e-8, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0, 200.0}) {
      const double expect = boost::math::gamma_p(a, x);
      EXPECT_NEAR(regularized_lower_gamma(a, x), expect, 1e-13 + 1e-12 * expect) << a << " " << x;
    }
  }
}

TEST(IncompleteGamma, Edges) {
  EXPECT_EQ(regularized_lower_gamma(1.3, 0.0), 0.0);
  EXPECT_EQ(regularized_lower_gamma(1.3, std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_THROW(regularized_lower_gamma(0.0, 1.0), InvalidArgument);
}

TEST(GammaLaw, CdfAndPartialMomentAgainstQuadrature) {
  for (auto [alpha, beta] : {std::pair{0.7846, 29.16}, std::pair{2.4, 1.0}, std::pair{12.0, 400.0}}) {
    GammaLaw law(alpha, beta);
    for (double q : {0.2, 0.8, 1.0, 1.7, 4.0}) {
      const double x = q * law.mean();
      // tanh-sinh copes with the power singularity of the density at 0.
      boost::math::quadrature::tanh_sinh<double> ts;
      const double F = ts.integrate([&](double t) { return law.density(t); }, 0.0, x);
      const double K = ts.integrate([&](double t) { return t * law.density(t); }, 0.0, x);
      EXPECT_NEAR(law.cdf(x), boost::math::gamma_p(alpha, beta * x), 1e-13);
      EXPECT_NEAR(law.cdf(x), F, 1e-10);
      EXPECT_NEAR(law.partial_moment(x), K, 1e-10 * law.mean());
    }
    EXPECT_NEAR(law.partial_moment(1e6), law.mean(), 1e-14);
    EXPECT_EQ(law.cdf(-1.0), 0.0);
  }
  EXPECT_THROW(GammaLaw(-1.0, 1.0), InvalidArgument);
}

TEST(NoncentralSquareLaw, CdfAndPartialMomentAgainstQuadrature) {
  for (auto [mu, kappa, lambda] :
       {std::tuple{0.01, 0.002, 3.0}, std::tuple{-0.002, 0.01, 0.5}, std::tuple{0.0, 1.0, -1.5}}) {
    NoncentralSquareLaw law(mu, kappa, lambda);
    const double sd = std::sqrt(law.variance());
    for (double dz : {-0.9, -0.3, 0.0, 0.7, 2.5}) {
      const double x = law.mean() + dz * sd;
      if (x <= mu) continue;
      // Density in the variable s = sqrt((u - mu) / kappa).
      auto dens_s = [&](double s) { return normal_pdf(s - lambda) + normal_pdf(-s - lambda); };
      const double smax = std::sqrt((x - mu) / kappa);
      const double F = integrate(dens_s, 0.0, smax);
      const double K = integrate([&](double s) { return (mu + kappa * s * s) * dens_s(s); }, 0.0, smax);
      EXPECT_NEAR(law.cdf(x), F, 1e-11);
      EXPECT_NEAR(law.partial_moment(x), K, 1e-11 * (std::abs(mu) + kappa));
    }
    EXPECT_EQ(law.cdf(mu), 0.0);
    EXPECT_EQ(law.partial_moment(mu - 1.0), 0.0);
    EXPECT_NEAR(law.partial_moment(1e9), law.mean(), 1e-12);
  }
}

TEST(NoncentralSquareLaw, MatchesSimulation) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  NoncentralSquareLaw law(0.003, 0.004, 1.2);
  const int n = 400000;
  const double x = law.mean();
  double F = 0.0, K = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = z(rng) + 1.2;
    const double u = 0.003 + 0.004 * w * w;
    if (u <= x) {
      F += 1.0;
      K += u;
    }
  }
  EXPECT_NEAR(law.cdf(x), F / n, 4.0 * std::sqrt(0.25 / n));
  EXPECT_NEAR(law.partial_moment(x), K / n, 4.0 * x * std::sqrt(0.25 / n));
}

TEST(MixtureLaw, BatchedEvaluationMatchesPointwise) {
  std::vector<MixtureLaw<NormalLaw>::Component> comps;
  for (int i = 0; i < 7; ++i) comps.push_back({1.0 / 7.0, NormalLaw(0.3 * i - 1.0, 0.05 + 0.02 * i)});
  MixtureLaw<NormalLaw> mix(comps);
  std::vector<double> xs;
  for (double x = -3.0; x <= 3.0; x += 0.01) xs.push_back(x);
  std::vector<double> F(xs.size()), K(xs.size());
  std::vector<double> S(xs.size()), U(xs.size());
  mix.evaluate(xs, LawValues{F, K, S, U});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_NEAR(F[i], mix.cdf(xs[i]), 1e-15);
    EXPECT_NEAR(K[i], mix.partial_moment(xs[i]), 1e-15);
    EXPECT_NEAR(S[i], mix.survival(xs[i]), 1e-15);
    EXPECT_NEAR(U[i], mix.upper_partial_moment(xs[i]), 1e-15);
    EXPECT_NEAR(F[i] + S[i], 1.0, 1e-15);
    EXPECT_NEAR(K[i] + U[i], mix.mean(), 1e-15);
  }
  EXPECT_NEAR(mix.mean(), -0.1, 1e-12);
}

TEST(MixtureLaw, RejectsBadWeights) {
  using M = MixtureLaw<NormalLaw>;
  EXPECT_THROW(M({{0.5, NormalLaw(0, 1)}}), InvalidArgument);
  EXPECT_THROW(M({{1.5, NormalLaw(0, 1)}, {-0.5, NormalLaw(0, 1)}}), InvalidArgument);
}

TEST(BivariateNormal, MatchesConditionalIntegral) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (double rho : {-0.999, -0.99, -0.95, -0.9, -0.6, -0.2, 0.1, 0.5, 0.8, 0.93, 0.99}) {
    for (int i = 0; i < 15; ++i) {
      const double h = u(rng), k = u(rng);
      EXPECT_NEAR(bivariate_normal_cdf(h, k, rho), bvn_oracle(h, k, rho), 2e-14) << h << " " << k << " " << rho;
    }
  }
}

TEST(BivariateNormal, DegenerateAndInfinite) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(bivariate_normal_cdf(-inf, 0.3, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(bivariate_normal_cdf(inf, 0.3, 0.5), normal_cdf(0.3));
  EXPECT_DOUBLE_EQ(bivariate_normal_cdf(0.2, 0.7, 1.0), normal_cdf(0.2));
  EXPECT_DOUBLE_EQ(bivariate_normal_cdf(0.2, 0.7, -1.0), normal_cdf(0.2) - normal_cdf(-0.7));
  EXPECT_EQ(bivariate_normal_cdf(-0.5, -0.7, -1.0), 0.0);
  EXPECT_THROW(bivariate_normal_cdf(0.0, 0.0, 1.5), InvalidArgument);
}

TEST(BivariateNormal, RectangleIdentities) {
  const auto ninf = ExtendedReal::neg_inf();
  const auto pinf = ExtendedReal::pos_inf();
  EXPECT_NEAR(bivariate_normal_rectangle(-0.9, ninf, pinf, ninf, pinf), 1.0, 1e-15);
  EXPECT_EQ(bivariate_normal_rectangle(0.3, 1.0, 1.0, ninf, pinf), 0.0);
  EXPECT_THROW(bivariate_normal_rectangle(0.3, 2.0, 1.0, 0.0, 1.0), InvalidRectangle);
  // Split additivity.
  const double whole = bivariate_normal_rectangle(-0.7, -1.0, 2.0, -0.5, 1.5);
  const double left = bivariate_normal_rectangle(-0.7, -1.0, 0.4, -0.5, 1.5);
  const double right = bivariate_normal_rectangle(-0.7, 0.4, 2.0, -0.5, 1.5);
  EXPECT_NEAR(whole, left + right, 1e-15);
  // rho = 0 factorises.
  EXPECT_NEAR(bivariate_normal_rectangle(0.0, -1.0, 2.0, -0.5, 1.5),
              (normal_cdf(2.0) - normal_cdf(-1.0)) * (normal_cdf(1.5) - normal_cdf(-0.5)), 1e-15);
}

TEST(ExtendedReal, Ordering) {
  EXPECT_TRUE(ExtendedReal::neg_inf() < ExtendedReal(-1e308));
  EXPECT_TRUE(ExtendedReal(1e308) < ExtendedReal::pos_inf());
  EXPECT_FALSE(ExtendedReal::pos_inf() < ExtendedReal::pos_inf());
  EXPECT_EQ(ExtendedReal::pos_inf().value(), std::numeric_limits<double>::infinity());
}
