#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "shq/quant_tree.hpp"

using namespace shq;

namespace {

HestonParams penalized() {
  HestonParams p;
  p.s0 = 100.0;
  p.r = -0.0032;
  p.q = 0.00225;
  p.theta = 0.02691;
  p.kappa = 19.28;
  p.xi = 1.15;
  p.rho = -0.99;
  return p;
}

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

ExtendedReal ext(double v) {
  if (v == -INFINITY) return ExtendedReal::neg_inf();
  if (v == INFINITY) return ExtendedReal::pos_inf();
  return v;
}

std::vector<double> cell_edges(const std::vector<double>& grid) {
  std::vector<double> e{-INFINITY};
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) e.push_back(0.5 * (grid[i] + grid[i + 1]));
  e.push_back(INFINITY);
  return e;
}

const QuantTree& small_tree() {
  static const QuantTree t = build_tree(generic(), 0.5, 4, 8, 4);
  return t;
}

}  // namespace

TEST(Schemes, MilsteinStepIsTheCompletedSquare) {
  const HestonParams p = generic();
  const double t = 0.3, y = 0.05, h = 0.01;
  const double boost = std::exp(p.kappa * t);
  for (double z : {-2.0, -0.3, 0.0, 1.1}) {
    const double direct = y + h * boost * p.kappa * p.theta + p.xi * std::exp(0.5 * p.kappa * t) * std::sqrt(y * h) * z +
                          0.25 * p.xi * p.xi * boost * h * (z * z - 1.0);
    EXPECT_NEAR(milstein_step(p, t, y, z, h), direct, 1e-15);
  }
}

TEST(Schemes, MilsteinLawMatchesNoncentralSquare) {
  const HestonParams p = penalized();
  const double h = 0.5 / 180, t = 0.1, y = 0.03;
  const MilsteinCoeffs c = milstein_coeffs(p, t, y, h);
  const NoncentralSquareLaw law(c.mu, c.kappa_c, c.lambda_c);
  std::normal_distribution<double> z;
  const int n = 200000;
  for (double d : {-1.0, 0.0, 1.0}) {
    const double x = c.mu + c.kappa_c * (c.lambda_c + d) * (c.lambda_c + d);
    std::mt19937_64 rng(11);
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += milstein_step(p, t, y, z(rng), h) <= x;
    const double f = law.cdf(x);
    EXPECT_NEAR(static_cast<double>(hits) / n, f, 4.0 * std::sqrt(f * (1 - f) / n) + 1e-12);
  }
}

TEST(Schemes, EulerDegenerateAndMartingale) {
  const HestonParams p = generic();
  const double h = 0.01, x = std::log(100.0);
  const EulerCoeffs zero = euler_coeffs(p, 0.2, x, 0.0, h);
  EXPECT_EQ(zero.sd, 0.0);
  EXPECT_NEAR(zero.mean, x + (p.r - p.q) * h, 1e-15);
  const EulerCoeffs c = euler_coeffs(p, 0.2, x, 0.05, h);
  EXPECT_NEAR(std::exp(c.mean + 0.5 * c.sd * c.sd), 100.0 * std::exp((p.r - p.q) * h), 1e-12);
  EXPECT_NEAR(euler_step(p, 0.2, x, 0.05, 1.5, h), c.mean + 1.5 * c.sd, 1e-15);
}

TEST(Schemes, PositivityGate) {
  HestonParams p = generic();
  EXPECT_NO_THROW(require_scheme_positivity(p));
  p.xi = 0.7;  // xi^2 = 0.49 > 4 kappa theta = 0.24
  EXPECT_THROW(require_scheme_positivity(p), FellerViolation);
  EXPECT_THROW(build_tree(p, 0.5, 2, 4, 3), FellerViolation);
}

TEST(QuantTree, RowSumsAndLayerMass) {
  const QuantTree& t = small_tree();
  EXPECT_LT(t.row_sum_max_dev(), 1e-12);
  for (const TreeLayer& l : t.layers) {
    double m = 0.0, mv = 0.0;
    for (double w : l.joint) m += w;
    for (double w : l.vol_weights) mv += w;
    EXPECT_NEAR(m, 1.0, 1e-12);
    EXPECT_NEAR(mv, 1.0, 1e-12);
    for (double w : l.joint) EXPECT_GE(w, 0.0);
  }
}

TEST(QuantTree, ChapmanKolmogorovThroughDenseLookup) {
  const QuantTree& t = small_tree();
  for (int k = 0; k < t.steps; ++k) {
    const TreeLayer& cur = t.layers[k];
    const TreeLayer& next = t.layers[k + 1];
    for (std::size_t j1 = 0; j1 < next.n1(); ++j1) {
      for (std::size_t j2 = 0; j2 < next.n2(); ++j2) {
        double s = 0.0;
        for (std::size_t src = 0; src < cur.nodes(); ++src) s += cur.joint[src] * t.transitions[k].at(src, j1, j2);
        EXPECT_NEAR(s, next.joint[j1 * next.n2() + j2], 1e-10);
      }
    }
  }
}

TEST(QuantTree, AssetMarginalReproducesVolTransitions) {
  const QuantTree& t = small_tree();
  for (int k = 0; k < t.steps; ++k) {
    const Transition& tr = t.transitions[k];
    for (std::size_t src = 0; src < tr.sources(); ++src) {
      const std::size_t i2 = src % tr.n2_src;
      for (std::size_t j2 = 0; j2 < tr.n2_dst; ++j2) {
        double s = 0.0;
        for (std::size_t j1 = 0; j1 < tr.n1_dst; ++j1) s += tr.at(src, j1, j2);
        EXPECT_NEAR(s, t.vol_transitions[k][i2 * tr.n2_dst + j2], 1e-9);
      }
    }
    // vol weights are the vol marginal of the joint weights
    const TreeLayer& next = t.layers[k + 1];
    for (std::size_t j2 = 0; j2 < next.n2(); ++j2) {
      double s = 0.0;
      for (std::size_t j1 = 0; j1 < next.n1(); ++j1) s += next.joint[j1 * next.n2() + j2];
      EXPECT_NEAR(s, next.vol_weights[j2], 1e-10);
    }
  }
}

TEST(QuantTree, EntriesMatchDirectRectangles) {
  const QuantTree& t = small_tree();
  const HestonParams& p = t.params;
  const int k = 2;
  const TreeLayer& cur = t.layers[k];
  const TreeLayer& next = t.layers[k + 1];
  const std::vector<double> xe = cell_edges(next.asset), ye = cell_edges(next.vol);
  for (std::size_t src : {std::size_t{0}, cur.nodes() / 2 + 1, cur.nodes() - 1}) {
    const std::size_t i1 = src / cur.n2(), i2 = src % cur.n2();
    const EulerCoeffs e = euler_coeffs(p, cur.t, cur.asset[i1], cur.vol[i2], t.step());
    const MilsteinCoeffs m = milstein_coeffs(p, cur.t, cur.vol[i2], t.step());
    for (std::size_t j1 = 0; j1 < next.n1(); ++j1) {
      const double a = (xe[j1] - e.mean) / e.sd, b = (xe[j1 + 1] - e.mean) / e.sd;
      for (std::size_t j2 = 0; j2 < next.n2(); ++j2) {
        const double slo = j2 == 0 ? 0.0 : std::sqrt(std::max(0.0, (ye[j2] - m.mu) / m.kappa_c));
        const double shi = j2 + 1 == next.n2() ? INFINITY : std::sqrt(std::max(0.0, (ye[j2 + 1] - m.mu) / m.kappa_c));
        const double want = bivariate_normal_rectangle(p.rho, ext(a), ext(b), ext(slo - m.lambda_c), ext(shi - m.lambda_c)) +
                            bivariate_normal_rectangle(p.rho, ext(a), ext(b), ext(-shi - m.lambda_c), ext(-slo - m.lambda_c));
        EXPECT_NEAR(t.transitions[k].at(src, j1, j2), want, 1e-12) << src << " " << j1 << " " << j2;
      }
    }
  }
}

TEST(QuantTree, ZeroCorrelationProductFormMatchesGeneralPath) {
  HestonParams p = generic();
  p.rho = 0.0;
  const QuantTree t = build_tree(p, 0.5, 3, 7, 4);
  for (int k = 0; k < t.steps; ++k) {
    const Transition fast = joint_transitions(t, k, true);
    const Transition full = joint_transitions(t, k, false);
    for (std::size_t src = 0; src < fast.sources(); ++src)
      for (std::size_t j1 = 0; j1 < fast.n1_dst; ++j1)
        for (std::size_t j2 = 0; j2 < fast.n2_dst; ++j2) EXPECT_NEAR(fast.at(src, j1, j2), full.at(src, j1, j2), 1e-10);
  }
}

TEST(QuantTree, AssetGridIsTheOptimalQuantizerOfTheEulerMixture) {
  const QuantTree& t = small_tree();
  const int k = 2;
  const TreeLayer& cur = t.layers[k];
  std::vector<MixtureLaw<NormalLaw>::Component> comps;
  double total = 0.0;
  for (double w : cur.joint) total += w;
  for (std::size_t i1 = 0; i1 < cur.n1(); ++i1)
    for (std::size_t i2 = 0; i2 < cur.n2(); ++i2) {
      const EulerCoeffs e = euler_coeffs(t.params, cur.t, cur.asset[i1], cur.vol[i2], t.step());
      comps.push_back({cur.joint[i1 * cur.n2() + i2] / total, NormalLaw(e.mean, e.sd)});
    }
  const MixtureLaw<NormalLaw> law(std::move(comps));
  const Quantizer1D fresh = optimize(law, t.layers[k + 1].n1(), default_vol_lloyd());
  for (std::size_t j = 0; j < fresh.grid.size(); ++j) EXPECT_NEAR(fresh.grid[j], t.layers[k + 1].asset[j], 1e-6);
}

TEST(QuantTree, SingleNodeChain) {
  const HestonParams p = generic();
  const QuantTree t = build_tree(p, 1.0, 3, 1, 1);
  double x = std::log(p.s0), y = p.theta;
  for (int k = 0; k < t.steps; ++k) {
    const double h = t.step();
    EXPECT_NEAR(t.layers[k].vol[0], y, 1e-12);
    EXPECT_NEAR(t.layers[k].asset[0], x, 1e-12);
    const MilsteinCoeffs m = milstein_coeffs(p, t.time(k), y, h);
    const EulerCoeffs e = euler_coeffs(p, t.time(k), x, y, h);
    y = m.mu + m.kappa_c * (1.0 + m.lambda_c * m.lambda_c);
    x = e.mean;
    EXPECT_NEAR(t.transitions[k].at(0, 0, 0), 1.0, 1e-14);
  }
  EXPECT_NEAR(t.layers.back().vol[0], y, 1e-12);
  EXPECT_NEAR(t.layers.back().asset[0], x, 1e-12);
}

TEST(QuantTree, VolMeanFollowsTheSchemeRecursion) {
  TreeOptions tight;
  tight.lloyd = default_vol_lloyd();
  const QuantTree t = build_tree(penalized(), 0.5, 12, 10, 6, tight);
  const HestonParams& p = t.params;
  double expected = p.theta;
  for (std::size_t k = 0; k < t.layers.size(); ++k) {
    const TreeLayer& l = t.layers[k];
    double m = 0.0;
    for (std::size_t i = 0; i < l.n2(); ++i) {
      EXPECT_GT(l.vol[i], 0.0);
      m += l.vol_weights[i] * l.vol[i];
    }
    EXPECT_NEAR(m, expected, 1e-9 * expected);
    expected += t.step() * std::exp(p.kappa * l.t) * p.kappa * p.theta;
  }
}

TEST(QuantTree, RescaledVolMeanStaysNearTheta) {
  const QuantTree t = build_tree(penalized(), 0.5, 180, 4, 6);
  for (const TreeLayer& l : t.layers) {
    double m = 0.0;
    for (std::size_t i = 0; i < l.n2(); ++i) m += l.vol_weights[i] * l.vol[i];
    EXPECT_NEAR(std::exp(-t.params.kappa * l.t) * m, t.params.theta, 0.05 * t.params.theta);
  }
}

TEST(QuantTree, DeterministicStartAndSchedules) {
  HestonParams p = generic();
  p.v0 = 0.05;
  const QuantTree t = build_tree(p, 0.25, 3, 6, 4);
  EXPECT_EQ(t.layers[0].n2(), 1u);
  EXPECT_EQ(t.layers[0].vol[0], 0.05);
  EXPECT_EQ(t.layers[1].n2(), 4u);

  const QuantTree s = build_tree(generic(), 0.25, 3, {1, 4, 6, 8}, {3, 3, 4, 5});
  EXPECT_EQ(s.layers[3].n1(), 8u);
  EXPECT_EQ(s.layers[3].n2(), 5u);
  EXPECT_LT(s.row_sum_max_dev(), 1e-12);
  EXPECT_THROW(build_tree(generic(), 0.25, 3, {2, 4, 6, 8}, {3, 3, 4, 5}), InvalidArgument);
  EXPECT_THROW(build_tree(generic(), 0.25, 3, {1, 4, 6}, {3, 3, 4}), InvalidArgument);
  EXPECT_THROW(build_tree(generic(), -1.0, 3, 4, 3), InvalidArgument);
}

TEST(QuantTree, SaveLoadRoundTrip) {
  const QuantTree& t = small_tree();
  std::stringstream buf;
  save_tree(t, buf);
  const QuantTree u = load_tree(buf);
  EXPECT_EQ(u.steps, t.steps);
  EXPECT_EQ(u.maturity, t.maturity);
  EXPECT_EQ(u.params.rho, t.params.rho);
  EXPECT_FALSE(u.params.v0.has_value());
  for (std::size_t k = 0; k < t.layers.size(); ++k) {
    EXPECT_EQ(u.layers[k].asset, t.layers[k].asset);
    EXPECT_EQ(u.layers[k].vol, t.layers[k].vol);
    EXPECT_EQ(u.layers[k].joint, t.layers[k].joint);
  }
  for (std::size_t k = 0; k < t.transitions.size(); ++k) {
    EXPECT_EQ(u.transitions[k].values, t.transitions[k].values);
    EXPECT_EQ(u.transitions[k].lo, t.transitions[k].lo);
    EXPECT_EQ(u.vol_transitions[k], t.vol_transitions[k]);
  }
  std::stringstream junk("not a tree");
  EXPECT_THROW(load_tree(junk), IoError);
  std::string bytes = [&] {
    std::stringstream b;
    save_tree(t, b);
    return b.str();
  }();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_tree(cut), IoError);
}
