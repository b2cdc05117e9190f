#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "shq/heston.hpp"

namespace shq {

enum class ModelKind { Standard, Stationary };

const char* to_string(ModelKind model);

struct VolQuote {
  double maturity = 0.0;  // years
  double strike = 0.0;    // currency
  double implied_vol = 0.0;
};

struct VolSurface {
  double spot = 100.0;
  double rate = 0.0;
  double dividend = 0.0;
  std::vector<VolQuote> quotes;

  void validate() const;
  /// Quotes whose maturity is within tol of T, sorted by strike.
  std::vector<VolQuote> slice(double T, double tol = 1e-9) const;
  std::vector<double> maturities() const;
};

struct SimplexOptions {
  int max_evals = 5000;      // total across restarts
  double tolerance = 1e-6;   // simplex size in the unconstrained coordinates
  double initial_step = 0.3;
  int restarts = 5;
  std::uint64_t seed = 42;
  double restart_spread = 0.5;
};

/// Parameter vectors: Stationary (theta, kappa, xi, rho); Standard (v0, theta, kappa, xi, rho).
struct CalibrationSpec {
  ModelKind model = ModelKind::Stationary;
  double target_maturity = 50.0 / 365.0;
  double penalty_lambda = 0.01;
  std::vector<double> initial_guess;
  SimplexOptions optimizer;
  int laguerre_nodes = 64;
  bool keep_trace = false;

  void validate() const;
};

struct CalibrationResult {
  HestonParams params;
  double objective_value = 0.0;
  bool feller_satisfied = false;
  int evals = 0;
  bool no_improvement = false;
  std::vector<std::pair<int, double>> trace;
};

std::size_t parameter_count(ModelKind model);
HestonParams params_from_vector(std::span<const double> phi, ModelKind model, const VolSurface& surface);
std::vector<double> params_to_vector(const HestonParams& p, ModelKind model);

/// Model implied vols for same-maturity strikes (out-of-the-money side priced).
/// Entries are nullopt where the model price is numerically zero or outside the arbitrage bounds.
std::vector<std::optional<double>> model_implied_vols(const HestonParams& p, double maturity,
                                                      std::span<const double> strikes, int laguerre_nodes = 64);

/// Sum of squared relative IV errors on the target slice plus lambda * max(xi^2 - 2 kappa theta, 0).
double objective(std::span<const double> phi, const VolSurface& surface, const CalibrationSpec& spec);

double feller_penalty(const HestonParams& p, double lambda);

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  int evals = 0;
};

/// Nelder-Mead on R^n started from the axis simplex around x0.
SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                          double step, int max_evals, double tolerance);

CalibrationResult calibrate(const VolSurface& surface, const CalibrationSpec& spec);

/// Surface generated by a model: one quote per (maturity, strike).
VolSurface synthetic_surface(const HestonParams& p, std::span<const double> maturities,
                             std::span<const double> strikes, int laguerre_nodes = 64);

struct SmileRow {
  double maturity = 0.0;
  double strike = 0.0;
  double market_iv = 0.0;
  std::optional<double> model_iv;  // nullopt marks a MISSING value
  std::optional<double> rel_error;
};

/// One row per surface quote at the requested maturities (all maturities when empty).
std::vector<SmileRow> smile_report(const HestonParams& p, const VolSurface& surface,
                                   std::span<const double> maturities, int laguerre_nodes = 64);

}  // namespace shq
