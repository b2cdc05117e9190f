#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shq/quant_tree.hpp"

namespace shq {

/// Vanilla payoff on the asset price, or a custom function of it.
struct Payoff {
  OptionKind kind = OptionKind::Call;
  double strike = 100.0;
  std::function<double(double)> custom;  // overrides kind/strike when set

  double operator()(double s) const;
  std::string describe() const;
};

struct BermudanSpec {
  Payoff payoff;
  std::vector<double> exercise_dates;  // years
  double maturity = 0.0;
};

enum class BarrierDirection { UpOut, DownOut };
const char* to_string(BarrierDirection d);

struct BarrierSpec {
  Payoff payoff;
  double barrier = 0.0;  // asset level
  BarrierDirection direction = BarrierDirection::UpOut;
  double maturity = 0.0;
};

struct PriceDiagnostics {
  double row_sum_max_dev = 0.0;
  double min_g = 1.0;
  double max_g = 1.0;
  std::vector<std::pair<double, double>> snapped_dates;  // (requested, tree date) when they differ
};

struct PriceReport {
  std::string instrument;
  std::string method = "recursive_quantization";
  std::string params_hash;
  int n = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double price = 0.0;
  double runtime_ms = 0.0;
  std::optional<double> standard_error;  // Monte Carlo only
  PriceDiagnostics diagnostics;
};

/// FNV-1a over the raw parameter bytes, as 16 hex digits.
std::string params_hash(const HestonParams& p);

/// Non-crossing probability of a Brownian bridge from x to z with total variance var.
/// Up: stays below L_log; down: stays above. 1 when var = 0 and no endpoint is beyond.
double bridge_noncrossing(double x, double z, double var, double L_log, BarrierDirection d);

/// Probability that the Brownian bridge of step k from x to z stays below L_log.
/// Uses sigma^2 = e^{-kappa t_k} y of the source node; 1 when sigma = 0 and no endpoint is above.
double bridge_up_factor(double x, double y, double z, int k, double L_log, const QuantTree& tree);
/// Probability that the bridge stays above L_log.
double bridge_down_factor(double x, double y, double z, int k, double L_log, const QuantTree& tree);

/// Sum over terminal nodes of the discounted payoff times the terminal joint weights.
PriceReport european_on_tree(const QuantTree& tree, const Payoff& payoff, double maturity);
/// Quantized backward dynamic programming; exercise dates are snapped to the nearest tree date.
PriceReport bermudan_price(const QuantTree& tree, const BermudanSpec& spec);
/// Backward recursion weighted by the bridge non-crossing factors.
PriceReport barrier_price(const QuantTree& tree, const BarrierSpec& spec);

}  // namespace shq
