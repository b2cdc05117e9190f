#include "shq/exotics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>

namespace shq {

namespace {

constexpr double kDateTol = 1e-9;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

PriceReport base_report(const QuantTree& tree, std::string instrument) {
  if (tree.layers.empty() || tree.transitions.size() + 1 != tree.layers.size())
    throw InvalidArgument("pricer: tree is not built");
  PriceReport r;
  r.instrument = std::move(instrument);
  r.params_hash = params_hash(tree.params);
  r.n = tree.steps;
  r.n1 = tree.layers.back().n1();
  r.n2 = tree.layers.back().n2();
  r.diagnostics.row_sum_max_dev = tree.row_sum_max_dev();
  return r;
}

void check_maturity(const QuantTree& tree, double maturity) {
  if (std::abs(maturity - tree.maturity) > kDateTol)
    throw DateMismatch("pricer: maturity " + std::to_string(maturity) + " differs from the tree's " +
                       std::to_string(tree.maturity));
}

// Discounted payoff at every node of the last layer.
std::vector<double> terminal_values(const QuantTree& tree, const Payoff& payoff) {
  const TreeLayer& last = tree.layers.back();
  const double df = std::exp(-tree.params.r * last.t);
  std::vector<double> v(last.nodes());
  for (std::size_t j1 = 0; j1 < last.n1(); ++j1) {
    const double f = df * payoff(std::exp(last.asset[j1]));
    for (std::size_t j2 = 0; j2 < last.n2(); ++j2) v[j1 * last.n2() + j2] = f;
  }
  return v;
}

// Conditional expectation of next-layer values from every node of layer k; `g` weights each
// (source, destination asset) pair.
template <class G>
std::vector<double> continuation(const QuantTree& tree, int k, const std::vector<double>& next, G&& g) {
  const TreeLayer& cur = tree.layers[k];
  const Transition& tr = tree.transitions[k];
  std::vector<double> out(cur.nodes(), 0.0);
  for (std::size_t src = 0; src < cur.nodes(); ++src) {
    const double* row = tr.values.data() + tr.offset[src];
    double s = 0.0;
    for (std::size_t j1 = tr.lo[src]; j1 < tr.hi[src]; ++j1) {
      const double* vals = next.data() + j1 * tr.n2_dst;
      double part = 0.0;
      for (std::size_t j2 = 0; j2 < tr.n2_dst; ++j2) part += row[j2] * vals[j2];
      s += part * g(src, j1);
      row += tr.n2_dst;
    }
    out[src] = s;
  }
  return out;
}

double root_value(const QuantTree& tree, const std::vector<double>& v0) {
  const TreeLayer& l0 = tree.layers[0];
  double s = 0.0;
  for (std::size_t i = 0; i < l0.nodes(); ++i) s += l0.joint[i] * v0[i];
  return s;
}

}  // namespace

double Payoff::operator()(double s) const {
  if (custom) return custom(s);
  return kind == OptionKind::Call ? std::max(s - strike, 0.0) : std::max(strike - s, 0.0);
}

std::string Payoff::describe() const {
  if (custom) return "Custom";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s K=%g", to_string(kind), strike);
  return buf;
}

const char* to_string(BarrierDirection d) { return d == BarrierDirection::UpOut ? "UpOut" : "DownOut"; }

std::string params_hash(const HestonParams& p) {
  std::uint64_t h = 14695981039346656037ull;
  auto feed = [&h](double v) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &v, sizeof(double));
    for (unsigned char c : b) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (double v : {p.s0, p.r, p.q, p.theta, p.kappa, p.xi, p.rho}) feed(v);
  feed(p.v0 ? *p.v0 : -1.0);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double bridge_noncrossing(double x, double z, double var, double L_log, BarrierDirection d) {
  if (d == BarrierDirection::UpOut ? L_log < std::max(x, z) : L_log > std::min(x, z)) return 0.0;
  if (!(var > 0.0)) return 1.0;
  return std::clamp(-std::expm1(-2.0 * (x - L_log) * (z - L_log) / var), 0.0, 1.0);
}

double bridge_up_factor(double x, double y, double z, int k, double L_log, const QuantTree& tree) {
  const double var = std::exp(-tree.params.kappa * tree.time(k)) * y * tree.step();
  return bridge_noncrossing(x, z, var, L_log, BarrierDirection::UpOut);
}

double bridge_down_factor(double x, double y, double z, int k, double L_log, const QuantTree& tree) {
  const double var = std::exp(-tree.params.kappa * tree.time(k)) * y * tree.step();
  return bridge_noncrossing(x, z, var, L_log, BarrierDirection::DownOut);
}

PriceReport european_on_tree(const QuantTree& tree, const Payoff& payoff, double maturity) {
  const auto t0 = Clock::now();
  PriceReport r = base_report(tree, "European " + payoff.describe());
  check_maturity(tree, maturity);
  const TreeLayer& last = tree.layers.back();
  const std::vector<double> v = terminal_values(tree, payoff);
  double s = 0.0;
  for (std::size_t i = 0; i < last.nodes(); ++i) s += last.joint[i] * v[i];
  r.price = s;
  r.runtime_ms = elapsed_ms(t0);
  return r;
}

PriceReport bermudan_price(const QuantTree& tree, const BermudanSpec& spec) {
  const auto t0 = Clock::now();
  PriceReport r = base_report(tree, "Bermudan " + spec.payoff.describe());
  check_maturity(tree, spec.maturity);
  std::vector<char> exercise(tree.layers.size(), 0);
  for (double d : spec.exercise_dates) {
    if (!(d >= -kDateTol && d <= tree.maturity + kDateTol))
      throw DateMismatch("bermudan_price: exercise date " + std::to_string(d) + " outside [0, T]");
    const int k = static_cast<int>(std::lround(std::clamp(d, 0.0, tree.maturity) / tree.step()));
    exercise[k] = 1;
    if (std::abs(tree.time(k) - d) > 1e-12) r.diagnostics.snapped_dates.emplace_back(d, tree.time(k));
  }

  std::vector<double> v = terminal_values(tree, spec.payoff);
  for (int k = tree.steps - 1; k >= 0; --k) {
    v = continuation(tree, k, v, [](std::size_t, std::size_t) { return 1.0; });
    if (!exercise[k]) continue;
    const TreeLayer& l = tree.layers[k];
    const double df = std::exp(-tree.params.r * l.t);
    for (std::size_t i1 = 0; i1 < l.n1(); ++i1) {
      const double now = df * spec.payoff(std::exp(l.asset[i1]));
      for (std::size_t i2 = 0; i2 < l.n2(); ++i2) v[i1 * l.n2() + i2] = std::max(v[i1 * l.n2() + i2], now);
    }
  }
  r.price = root_value(tree, v);
  r.runtime_ms = elapsed_ms(t0);
  return r;
}

PriceReport barrier_price(const QuantTree& tree, const BarrierSpec& spec) {
  const auto t0 = Clock::now();
  if (!(spec.barrier > 0.0)) throw InvalidArgument("barrier_price: barrier must be positive");
  char buf[64];
  std::snprintf(buf, sizeof(buf), " L=%g", spec.barrier);
  PriceReport r = base_report(tree, std::string(to_string(spec.direction)) + " " + spec.payoff.describe() + buf);
  check_maturity(tree, spec.maturity);
  const double L_log = std::log(spec.barrier);
  const bool up = spec.direction == BarrierDirection::UpOut;

  double gmin = 1.0, gmax = 0.0;
  std::vector<double> v = terminal_values(tree, spec.payoff);
  for (int k = tree.steps - 1; k >= 0; --k) {
    const TreeLayer& cur = tree.layers[k];
    const TreeLayer& next = tree.layers[k + 1];
    v = continuation(tree, k, v, [&](std::size_t src, std::size_t j1) {
      const double x = cur.asset[src / cur.n2()], y = cur.vol[src % cur.n2()], z = next.asset[j1];
      const double g = up ? bridge_up_factor(x, y, z, k, L_log, tree) : bridge_down_factor(x, y, z, k, L_log, tree);
      gmin = std::min(gmin, g);
      gmax = std::max(gmax, g);
      return g;
    });
  }
  r.diagnostics.min_g = gmin;
  r.diagnostics.max_g = std::max(gmin, gmax);
  r.price = root_value(tree, v);
  r.runtime_ms = elapsed_ms(t0);
  return r;
}

}  // namespace shq
