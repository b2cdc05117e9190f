#include "shq/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace shq {

namespace {

// Prices below this fraction of spot are treated as numerically zero.
constexpr double kZeroPriceRatio = 1e-9;
constexpr double kFailureObjective = 1e6;
constexpr double kCoordClamp = 30.0;

bool is_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// Unconstrained coordinates: log for positive parameters, atanh for rho.
std::vector<double> to_free(std::span<const double> phi) {
  std::vector<double> y(phi.size());
  for (std::size_t i = 0; i + 1 < phi.size(); ++i) y[i] = std::log(phi[i]);
  y.back() = std::atanh(std::clamp(phi.back(), -1.0 + 1e-12, 1.0 - 1e-12));
  return y;
}

std::vector<double> from_free(std::span<const double> y) {
  std::vector<double> phi(y.size());
  for (std::size_t i = 0; i + 1 < y.size(); ++i) phi[i] = std::exp(std::clamp(y[i], -kCoordClamp, kCoordClamp));
  phi.back() = std::tanh(y.back());
  return phi;
}

}  // namespace

const char* to_string(ModelKind model) { return model == ModelKind::Standard ? "Standard" : "Stationary"; }

void VolSurface::validate() const {
  if (!(spot > 0.0) || !std::isfinite(rate) || !std::isfinite(dividend))
    throw InvalidArgument("VolSurface: spot must be positive and rates finite");
  if (quotes.empty()) throw InvalidArgument("VolSurface: no quotes");
  for (const VolQuote& q : quotes)
    if (!(q.maturity > 0.0) || !(q.strike > 0.0) || !(q.implied_vol > 0.0) || !std::isfinite(q.implied_vol))
      throw InvalidArgument("VolSurface: maturities, strikes and implied vols must be positive");
  bool well_posed = false;
  for (double T : maturities()) well_posed = well_posed || slice(T).size() >= 3;
  if (!well_posed) throw InvalidArgument("VolSurface: need a maturity slice with at least 3 strikes");
}

std::vector<VolQuote> VolSurface::slice(double T, double tol) const {
  std::vector<VolQuote> out;
  for (const VolQuote& q : quotes)
    if (std::abs(q.maturity - T) <= tol) out.push_back(q);
  std::sort(out.begin(), out.end(), [](const VolQuote& a, const VolQuote& b) { return a.strike < b.strike; });
  return out;
}

std::vector<double> VolSurface::maturities() const {
  std::vector<double> out;
  for (const VolQuote& q : quotes) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](double T) { return std::abs(T - q.maturity) <= 1e-9; });
    if (!seen) out.push_back(q.maturity);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void CalibrationSpec::validate() const {
  if (!(penalty_lambda >= 0.0)) throw InvalidArgument("CalibrationSpec: penalty_lambda must be nonnegative");
  if (!(target_maturity > 0.0)) throw InvalidArgument("CalibrationSpec: target_maturity must be positive");
  if (initial_guess.size() != parameter_count(model))
    throw InvalidArgument("CalibrationSpec: initial_guess has the wrong number of parameters");
  for (std::size_t i = 0; i + 1 < initial_guess.size(); ++i)
    if (!(initial_guess[i] > 0.0)) throw InvalidArgument("CalibrationSpec: positive parameters expected");
  if (!(std::abs(initial_guess.back()) <= 1.0)) throw InvalidArgument("CalibrationSpec: rho must lie in [-1, 1]");
  if (optimizer.max_evals < 0 || optimizer.restarts < 1 || !(optimizer.tolerance > 0.0))
    throw InvalidArgument("CalibrationSpec: invalid simplex settings");
  if (laguerre_nodes < 1) throw InvalidArgument("CalibrationSpec: laguerre_nodes must be positive");
}

std::size_t parameter_count(ModelKind model) { return model == ModelKind::Standard ? 5 : 4; }

HestonParams params_from_vector(std::span<const double> phi, ModelKind model, const VolSurface& surface) {
  if (phi.size() != parameter_count(model)) throw InvalidArgument("params_from_vector: wrong parameter count");
  HestonParams p;
  p.s0 = surface.spot;
  p.r = surface.rate;
  p.q = surface.dividend;
  std::size_t i = 0;
  if (model == ModelKind::Standard) p.v0 = phi[i++];
  p.theta = phi[i++];
  p.kappa = phi[i++];
  p.xi = phi[i++];
  p.rho = phi[i];
  return p;
}

std::vector<double> params_to_vector(const HestonParams& p, ModelKind model) {
  std::vector<double> phi;
  if (model == ModelKind::Standard) {
    if (!p.v0) throw InvalidArgument("params_to_vector: Standard model needs v0");
    phi.push_back(*p.v0);
  }
  phi.insert(phi.end(), {p.theta, p.kappa, p.xi, p.rho});
  return phi;
}

std::vector<std::optional<double>> model_implied_vols(const HestonParams& p, double maturity,
                                                      std::span<const double> strikes, int laguerre_nodes) {
  const VarianceMixture mix =
      p.stationary() ? stationary_laguerre_mixture(p, laguerre_nodes) : VarianceMixture{{*p.v0}, {1.0}};
  const double fwd = p.s0 * std::exp((p.r - p.q) * maturity);
  std::vector<OptionKind> kinds(strikes.size());
  for (std::size_t k = 0; k < strikes.size(); ++k) kinds[k] = strikes[k] >= fwd ? OptionKind::Call : OptionKind::Put;
  const std::vector<double> prices = mixture_prices(p, mix, maturity, strikes, kinds);
  std::vector<std::optional<double>> ivs(strikes.size());
  for (std::size_t k = 0; k < strikes.size(); ++k) {
    if (!std::isfinite(prices[k])) throw ModelPriceFailure("model_implied_vols: non-finite model price");
    if (prices[k] <= kZeroPriceRatio * p.s0) continue;
    try {
      ivs[k] = implied_vol(prices[k], p.s0, strikes[k], maturity, p.r, p.q, kinds[k]);
    } catch (const OutOfBounds&) {
    }
  }
  return ivs;
}

double feller_penalty(const HestonParams& p, double lambda) {
  return lambda * std::max(p.xi * p.xi - 2.0 * p.kappa * p.theta, 0.0);
}

double objective(std::span<const double> phi, const VolSurface& surface, const CalibrationSpec& spec) {
  const HestonParams p = params_from_vector(phi, spec.model, surface);
  p.validate();
  const std::vector<VolQuote> quotes = surface.slice(spec.target_maturity);
  if (quotes.empty()) throw InvalidArgument("objective: no quotes at the target maturity");
  std::vector<double> strikes(quotes.size());
  for (std::size_t k = 0; k < quotes.size(); ++k) strikes[k] = quotes[k].strike;
  double sum = 0.0;
  try {
    const auto ivs = model_implied_vols(p, spec.target_maturity, strikes, spec.laguerre_nodes);
    for (std::size_t k = 0; k < quotes.size(); ++k) {
      // A vanishing model price counts as a zero model vol.
      const double model_iv = ivs[k].value_or(0.0);
      const double rel = (quotes[k].implied_vol - model_iv) / quotes[k].implied_vol;
      sum += rel * rel;
    }
  } catch (const Error&) {
    sum = kFailureObjective;
  }
  return sum + feller_penalty(p, spec.penalty_lambda);
}

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                          double step, int max_evals, double tolerance) {
  const std::size_t n = x0.size();
  SimplexResult best{x0, 0.0, 0};
  if (max_evals <= 0) return best;
  std::vector<std::vector<double>> s(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) s[i + 1][i] += step;
  std::vector<double> fs(n + 1);
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : kFailureObjective;
  };
  for (std::size_t i = 0; i <= n && evals < max_evals; ++i) fs[i] = eval(s[i]);
  if (evals < static_cast<int>(n + 1)) {
    best.value = fs[0];
    best.evals = evals;
    return best;
  }
  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n);
  auto along = [&](double t, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (s[order[n]][j] - centroid[j]);
  };
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    double size = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j) size = std::max(size, std::abs(s[order[i]][j] - s[order[0]][j]));
    if (size <= tolerance) break;
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += s[order[i]][j] / static_cast<double>(n);
    const std::size_t worst = order[n];
    along(-1.0, trial);
    const double fr = eval(trial);
    if (fr < fs[order[0]]) {
      std::vector<double> expanded(n);
      along(-2.0, expanded);
      const double fe = evals < max_evals ? eval(expanded) : fr + 1.0;
      if (fe < fr) {
        s[worst] = expanded;
        fs[worst] = fe;
      } else {
        s[worst] = trial;
        fs[worst] = fr;
      }
    } else if (fr < fs[order[n - 1]]) {
      s[worst] = trial;
      fs[worst] = fr;
    } else {
      std::vector<double> contracted(n);
      const bool outside = fr < fs[worst];
      along(outside ? -0.5 : 0.5, contracted);
      const double fc = evals < max_evals ? eval(contracted) : std::max(fr, fs[worst]) + 1.0;
      if (fc < std::min(fr, fs[worst])) {
        s[worst] = contracted;
        fs[worst] = fc;
      } else {
        if (outside) {
          s[worst] = trial;
          fs[worst] = fr;
        }
        const std::size_t b = order[0];
        for (std::size_t i = 0; i <= n && evals < max_evals; ++i) {
          if (i == b) continue;
          for (std::size_t j = 0; j < n; ++j) s[i][j] = s[b][j] + 0.5 * (s[i][j] - s[b][j]);
          fs[i] = eval(s[i]);
        }
      }
    }
  }
  const std::size_t b = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  return {s[b], fs[b], evals};
}

CalibrationResult calibrate(const VolSurface& surface, const CalibrationSpec& spec) {
  surface.validate();
  spec.validate();
  if (surface.slice(spec.target_maturity).empty()) throw InvalidArgument("calibrate: no quotes at the target maturity");

  CalibrationResult result;
  int evals = 0;
  auto eval_phi = [&](std::span<const double> phi) {
    const double v = objective(phi, surface, spec);
    ++evals;
    if (spec.keep_trace) result.trace.emplace_back(evals, v);
    return v;
  };
  auto f = [&](std::span<const double> y) { return eval_phi(from_free(y)); };

  std::vector<double> best_y = to_free(spec.initial_guess);
  std::vector<double> best_phi = spec.initial_guess;
  double best = eval_phi(best_phi);
  const double initial = best;
  std::mt19937_64 rng(spec.optimizer.seed);
  std::normal_distribution<double> gauss(0.0, spec.optimizer.restart_spread);
  const int restarts = spec.optimizer.restarts;
  for (int r = 0; r < restarts; ++r) {
    const int remaining = spec.optimizer.max_evals - evals;
    if (remaining <= 0) break;
    const int budget = remaining / (restarts - r);
    if (budget <= 0) continue;
    std::vector<double> start = best_y;
    if (r > 0)
      for (double& y : start) y += gauss(rng);
    if (!is_finite(start)) continue;
    const SimplexResult run = nelder_mead(f, start, spec.optimizer.initial_step, budget, spec.optimizer.tolerance);
    if (run.value < best) {
      best = run.value;
      best_y = run.x;
      best_phi = from_free(best_y);
    }
  }

  result.params = params_from_vector(best_phi, spec.model, surface);
  result.objective_value = best;
  result.feller_satisfied = 2.0 * result.params.kappa * result.params.theta >= result.params.xi * result.params.xi;
  result.evals = evals;
  result.no_improvement = !(best < initial);
  return result;
}

VolSurface synthetic_surface(const HestonParams& p, std::span<const double> maturities,
                             std::span<const double> strikes, int laguerre_nodes) {
  p.validate();
  VolSurface s{p.s0, p.r, p.q, {}};
  for (double T : maturities) {
    const auto ivs = model_implied_vols(p, T, strikes, laguerre_nodes);
    for (std::size_t k = 0; k < strikes.size(); ++k) {
      if (!ivs[k]) throw ModelPriceFailure("synthetic_surface: model price vanishes at strike " +
                                           std::to_string(strikes[k]));
      s.quotes.push_back({T, strikes[k], *ivs[k]});
    }
  }
  return s;
}

std::vector<SmileRow> smile_report(const HestonParams& p, const VolSurface& surface,
                                   std::span<const double> maturities, int laguerre_nodes) {
  std::vector<double> Ts(maturities.begin(), maturities.end());
  if (Ts.empty()) Ts = surface.maturities();
  std::vector<SmileRow> rows;
  for (double T : Ts) {
    const std::vector<VolQuote> quotes = surface.slice(T);
    if (quotes.empty()) continue;
    std::vector<double> strikes(quotes.size());
    for (std::size_t k = 0; k < quotes.size(); ++k) strikes[k] = quotes[k].strike;
    std::vector<std::optional<double>> ivs(quotes.size());
    try {
      ivs = model_implied_vols(p, T, strikes, laguerre_nodes);
    } catch (const Error&) {
    }
    for (std::size_t k = 0; k < quotes.size(); ++k) {
      SmileRow row{quotes[k].maturity, quotes[k].strike, quotes[k].implied_vol, ivs[k], std::nullopt};
      if (ivs[k]) row.rel_error = std::abs(quotes[k].implied_vol - *ivs[k]) / quotes[k].implied_vol;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace shq
