#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "shq/exotics.hpp"

namespace shq {

/// xoshiro256** seeded through splitmix64.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);
  std::uint64_t next();
  /// Uniform on (0, 1), never 0.
  double uniform();

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// Standard normals by the polar-free Box-Muller transform, cached in pairs.
class NormalSampler {
 public:
  explicit NormalSampler(Xoshiro256& rng) : rng_(rng) {}
  double operator()();

 private:
  Xoshiro256& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the U^{1/shape} boost.
double sample_gamma(double shape, Xoshiro256& rng, NormalSampler& normal);

struct McConfig {
  std::size_t paths = 100000;
  int steps = 180;
  std::uint64_t seed = 42;
  bool antithetic = true;
  void validate() const;
};

struct McEstimate {
  double price = 0.0;
  double standard_error = 0.0;
};

/// Paths on the hybrid scheme: Euler log-asset, Milstein boosted variance.
/// Values at i * (steps + 1) + k.
struct PathBatch {
  std::size_t paths = 0;
  int steps = 0;
  std::vector<double> log_asset;
  std::vector<double> vol;  // boosted, Y = e^{kappa t} v
  std::vector<double> z_asset;
  std::vector<double> z_vol;  // Gaussian drivers, steps per path
};

PathBatch simulate_paths(const HestonParams& p, double maturity, const McConfig& cfg);

McEstimate mc_european(const HestonParams& p, const Payoff& payoff, double maturity, const McConfig& cfg);
/// Discretely simulated barrier corrected by the bridge non-crossing factor of each step.
McEstimate mc_barrier(const HestonParams& p, const BarrierSpec& spec, const McConfig& cfg);

}  // namespace shq
