#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "shq/mc.hpp"

using namespace shq;

namespace {

HestonParams generic() {
  HestonParams p;
  p.s0 = 100.0;
  p.r = 0.02;
  p.q = 0.01;
  p.theta = 0.04;
  p.kappa = 1.5;
  p.xi = 0.4;
  p.rho = -0.7;
  return p;
}

McConfig config(std::size_t paths, int steps, std::uint64_t seed = 1, bool anti = true) {
  McConfig c;
  c.paths = paths;
  c.steps = steps;
  c.seed = seed;
  c.antithetic = anti;
  return c;
}

double ks_statistic(std::vector<double> xs, const GammaLaw& law) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = law.cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

}  // namespace

TEST(Rng, DeterministicAndUniform) {
  Xoshiro256 a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = a.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(s2 / n - 0.25, 1.0 / 12.0, 2e-3);
}

TEST(Rng, NormalMoments) {
  Xoshiro256 rng(7);
  NormalSampler z(rng);
  const int n = 400000;
  double s = 0.0, s2 = 0.0, below = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = z();
    s += v;
    s2 += v * v;
    below += v < -1.0;
  }
  EXPECT_NEAR(s / n, 0.0, 3.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 3.0 * std::sqrt(2.0 / n));
  const double f = normal_cdf(-1.0);
  EXPECT_NEAR(below / n, f, 3.0 * std::sqrt(f * (1 - f) / n));
}

TEST(Rng, GammaSamplerPassesKolmogorovSmirnov) {
  for (double shape : {0.3, 0.75, 1.0, 2.5, 12.0}) {
    Xoshiro256 rng(11);
    NormalSampler z(rng);
    std::vector<double> xs(50000);
    for (double& x : xs) x = sample_gamma(shape, rng, z);
    // 1% critical value of the one-sample KS statistic
    EXPECT_LT(ks_statistic(xs, GammaLaw(shape, 1.0)), 1.63 / std::sqrt(xs.size())) << shape;
  }
  Xoshiro256 rng(1);
  NormalSampler z(rng);
  EXPECT_THROW(sample_gamma(0.0, rng, z), InvalidArgument);
}

TEST(Paths, FollowTheHybridScheme) {
  const HestonParams p = generic();
  const PathBatch b = simulate_paths(p, 0.5, config(6, 5));
  ASSERT_EQ(b.log_asset.size(), 6u * 6u);
  const double h = 0.1;
  for (std::size_t i = 0; i < b.paths; ++i) {
    EXPECT_EQ(b.log_asset[i * 6], std::log(100.0));
    for (int k = 0; k < 5; ++k) {
      const double x = b.log_asset[i * 6 + k], y = b.vol[i * 6 + k];
      EXPECT_GT(y, 0.0);
      EXPECT_NEAR(b.vol[i * 6 + k + 1], milstein_step(p, k * h, y, b.z_vol[i * 5 + k], h), 1e-13);
      EXPECT_NEAR(b.log_asset[i * 6 + k + 1], euler_step(p, k * h, x, y, b.z_asset[i * 5 + k], h), 1e-13);
    }
  }
  // antithetic partner: negated drivers
  EXPECT_EQ(b.z_vol[0], -b.z_vol[5]);
  EXPECT_EQ(b.z_asset[4], -b.z_asset[9]);
}

TEST(Paths, UncorrelatedDriversWhenRhoIsZero) {
  HestonParams p = generic();
  p.rho = 0.0;
  const PathBatch b = simulate_paths(p, 0.5, config(100000, 1, 3, false));
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < b.paths; ++i) {
    sxy += b.z_asset[i] * b.z_vol[i];
    sxx += b.z_asset[i] * b.z_asset[i];
    syy += b.z_vol[i] * b.z_vol[i];
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), 0.0, 3.0 / std::sqrt(b.paths));

  p.rho = -0.7;
  const PathBatch c = simulate_paths(p, 0.5, config(100000, 1, 3, false));
  sxy = sxx = syy = 0.0;
  for (std::size_t i = 0; i < c.paths; ++i) {
    sxy += c.z_asset[i] * c.z_vol[i];
    sxx += c.z_asset[i] * c.z_asset[i];
    syy += c.z_vol[i] * c.z_vol[i];
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), -0.7, 3.0 * (1 - 0.49) / std::sqrt(c.paths));
}

TEST(Paths, StationaryStartAndMartingale) {
  const HestonParams p = generic();
  const int steps = 20;
  const double T = 0.5, h = T / steps;
  const PathBatch b = simulate_paths(p, T, config(100000, steps, 5, false));
  const std::size_t stride = steps + 1;
  // boosted variance mean follows E[Y'] = E[Y] + h kappa theta e^{kappa t}
  double expected = p.theta;
  for (int k = 0; k <= steps; ++k) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < b.paths; ++i) {
      const double v = b.vol[i * stride + k];
      s += v;
      s2 += v * v;
    }
    const double m = s / b.paths, se = std::sqrt((s2 / b.paths - m * m) / b.paths);
    EXPECT_NEAR(m, expected, 3.0 * se) << k;
    EXPECT_NEAR(std::exp(-p.kappa * k * h) * m, p.theta, 0.02 * p.theta) << k;
    expected += h * p.kappa * p.theta * std::exp(p.kappa * k * h);
  }
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < b.paths; ++i) {
    const double v = std::exp(b.log_asset[i * stride + steps]);
    s += v;
    s2 += v * v;
  }
  const double m = s / b.paths, se = std::sqrt((s2 / b.paths - m * m) / b.paths);
  EXPECT_NEAR(m * std::exp(-(p.r - p.q) * T), p.s0, 3.0 * se);
}

TEST(McEuropean, DeterministicPerSeed) {
  const Payoff f{OptionKind::Call, 100.0, {}};
  const McEstimate a = mc_european(generic(), f, 0.5, config(20000, 10, 77));
  const McEstimate b = mc_european(generic(), f, 0.5, config(20000, 10, 77));
  const McEstimate c = mc_european(generic(), f, 0.5, config(20000, 10, 78));
  EXPECT_EQ(a.price, b.price);
  EXPECT_EQ(a.standard_error, b.standard_error);
  EXPECT_NE(a.price, c.price);
}

TEST(McEuropean, AgreesWithLaguerreBenchmark) {
  const HestonParams p = generic();
  for (double K : {90.0, 100.0, 110.0}) {
    const Payoff f{OptionKind::Call, K, {}};
    const McEstimate e = mc_european(p, f, 0.5, config(400000, 100, 13));
    const double bench = stationary_price_laguerre(p, {K, 0.5, OptionKind::Call});
    EXPECT_NEAR(e.price, bench, 3.0 * e.standard_error) << K;
  }
}

TEST(McEuropean, AntitheticReducesVariance) {
  const HestonParams p = generic();
  for (int i = 0; i < 10; ++i) {
    const double K = 80.0 + 5.0 * i;
    const Payoff f{OptionKind::Call, K, {}};
    const McEstimate anti = mc_european(p, f, 0.5, config(40000, 10, 21, true));
    const McEstimate plain = mc_european(p, f, 0.5, config(40000, 10, 21, false));
    EXPECT_LE(anti.standard_error, plain.standard_error) << K;
  }
}

TEST(McEuropean, StandardErrorScalesAsInverseRootPaths) {
  const Payoff f{OptionKind::Call, 100.0, {}};
  std::vector<double> lx, ly;
  for (std::size_t n : {10000u, 100000u, 1000000u}) {
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(mc_european(generic(), f, 0.5, config(n, 2, 4)).standard_error));
  }
  const double slope = (ly[2] - ly[0]) / (lx[2] - lx[0]);
  EXPECT_NEAR(slope, -0.5, 0.1);
}

TEST(McBarrier, FarBarrierIsEuropeanPerPath) {
  const Payoff f{OptionKind::Call, 100.0, {}};
  const McConfig cfg = config(20000, 12, 8);
  const McEstimate eu = mc_european(generic(), f, 0.5, cfg);
  const McEstimate up = mc_barrier(generic(), {f, 1e6, BarrierDirection::UpOut, 0.5}, cfg);
  EXPECT_EQ(up.price, eu.price);
  EXPECT_EQ(up.standard_error, eu.standard_error);
  const McEstimate near = mc_barrier(generic(), {f, 115.0, BarrierDirection::UpOut, 0.5}, cfg);
  EXPECT_LT(near.price, eu.price);
  EXPECT_EQ(mc_barrier(generic(), {f, 100.0, BarrierDirection::UpOut, 0.5}, cfg).price, 0.0);
}

TEST(McConfig, Validation) {
  const Payoff f{OptionKind::Call, 100.0, {}};
  EXPECT_THROW(mc_european(generic(), f, 0.5, config(3, 10)), InvalidArgument);
  EXPECT_THROW(mc_european(generic(), f, 0.5, config(0, 10, 1, false)), InvalidArgument);
  EXPECT_THROW(mc_european(generic(), f, 0.5, config(10, 0)), InvalidArgument);
  HestonParams p = generic();
  p.xi = 0.7;
  EXPECT_THROW(mc_european(p, f, 0.5, config(10, 10)), FellerViolation);
}
