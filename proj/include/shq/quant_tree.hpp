#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "shq/heston.hpp"
#include "shq/quantization.hpp"
#include "shq/schemes.hpp"

namespace shq {

/// One date of the tree. Vol grids are in boosted units (Y = e^{kappa t} v).
struct TreeLayer {
  double t = 0.0;
  std::vector<double> asset;        // log-price grid
  std::vector<double> vol;          // boosted variance grid
  std::vector<double> vol_weights;  // P(Y_k = vol[i])
  std::vector<double> joint;        // P(X_k = asset[i1], Y_k = vol[i2]) at i1 * n2() + i2

  std::size_t n1() const { return asset.size(); }
  std::size_t n2() const { return vol.size(); }
  std::size_t nodes() const { return n1() * n2(); }
};

/// Transition probabilities from every node of layer k to layer k+1. For each source only a
/// contiguous band of destination asset cells [lo, hi) is stored; the rest is below 1e-19.
struct Transition {
  std::size_t n2_src = 0;
  std::size_t n1_dst = 0;
  std::size_t n2_dst = 0;
  std::vector<std::uint32_t> lo, hi;
  std::vector<std::size_t> offset;  // size sources + 1
  std::vector<double> values;       // block of (hi - lo) x n2_dst per source

  std::size_t sources() const { return lo.size(); }
  double at(std::size_t src, std::size_t j1, std::size_t j2) const;
  double row_sum(std::size_t src) const;
};

struct QuantTree {
  HestonParams params;
  double maturity = 0.0;
  int steps = 0;
  std::vector<TreeLayer> layers;                    // steps + 1
  std::vector<Transition> transitions;              // steps
  std::vector<std::vector<double>> vol_transitions; // steps, each n2_k x n2_{k+1}

  double step() const { return maturity / steps; }
  double time(int k) const { return maturity * k / steps; }
  /// Largest |row sum - 1| over all transition rows.
  double row_sum_max_dev() const;
};

/// Anderson-accelerated Lloyd stopped at 1e-8; tighter tolerances move tree prices by < 1e-4.
LloydOptions default_tree_lloyd();

struct TreeOptions {
  LloydOptions lloyd = default_tree_lloyd();
  bool warm_start = true;
};

/// Allocates layers and builds layer 0: the vol quantizer of the initial law and X_0 = log s0.
QuantTree start_tree(const HestonParams& p, double maturity, int steps, std::size_t n2_0, const TreeOptions& opts = {});

/// Vol grid, vol weights and vol transitions of layer k+1 from layer k.
void build_vol_layer(QuantTree& tree, int k, std::size_t n2_next, const TreeOptions& opts = {});
/// Asset grid of layer k+1 from the Euler normal mixture over the joint weights of layer k.
void build_asset_layer(QuantTree& tree, int k, std::size_t n1_next, const TreeOptions& opts = {});
/// Joint transitions k -> k+1. With factorize_zero_rho the rho = 0 product form is used.
Transition joint_transitions(const QuantTree& tree, int k, bool factorize_zero_rho = true);
/// Joint weights of layer k+1 from layer k by forward Chapman-Kolmogorov.
std::vector<double> propagate_joint(const QuantTree& tree, int k);

/// Full tree with constant sizes (N1 for k >= 1, N1_0 = 1).
QuantTree build_tree(const HestonParams& p, double maturity, int steps, std::size_t n1, std::size_t n2,
                     const TreeOptions& opts = {});
/// Full tree with per-date sizes; n1_schedule[0] must be 1.
QuantTree build_tree(const HestonParams& p, double maturity, int steps, const std::vector<std::size_t>& n1_schedule,
                     const std::vector<std::size_t>& n2_schedule, const TreeOptions& opts = {});

/// Versioned binary serialization.
void save_tree(const QuantTree& tree, std::ostream& out);
QuantTree load_tree(std::istream& in);

}  // namespace shq
