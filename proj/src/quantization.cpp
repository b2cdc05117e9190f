#include "shq/quantization.hpp"

#include <cmath>
#include "json.hpp"

namespace shq {

void Quantizer1D::validate() const {
  if (grid.empty() || grid.size() != weights.size())
    throw InvalidArgument("Quantizer1D: grid and weights must be non-empty and of equal size");
  if (!detail::strictly_increasing(grid)) throw InvalidArgument("Quantizer1D: grid must be strictly increasing");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("Quantizer1D: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("Quantizer1D: weights must sum to 1");
  if (!(distortion >= 0.0)) throw InvalidArgument("Quantizer1D: negative distortion");
}

VoronoiEdges voronoi_edges(std::span<const double> grid, double support_min) {
  VoronoiEdges e;
  e.half_points.reserve(grid.size() + 1);
  e.half_points.push_back(std::isfinite(support_min) ? ExtendedReal(support_min) : ExtendedReal::neg_inf());
  for (std::size_t i = 1; i < grid.size(); ++i) e.half_points.emplace_back(0.5 * (grid[i - 1] + grid[i]));
  e.half_points.push_back(ExtendedReal::pos_inf());
  return e;
}

std::string quantizer_to_json(const Quantizer1D& q) {
  nlohmann::json j;
  j["grid"] = q.grid;
  j["weights"] = q.weights;
  j["distortion"] = q.distortion;
  j["law_tag"] = q.law_tag;
  return j.dump();
}

Quantizer1D quantizer_from_json(const std::string& text) {
  Quantizer1D q;
  try {
    const auto j = nlohmann::json::parse(text);
    q.grid = j.at("grid").get<std::vector<double>>();
    q.weights = j.at("weights").get<std::vector<double>>();
    q.distortion = j.at("distortion").get<double>();
    q.law_tag = j.at("law_tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("quantizer_from_json: ") + e.what());
  }
  q.validate();
  return q;
}

Quantizer1D stationary_vol_quantizer(double theta, double kappa, double xi, std::size_t n,
                                     const LloydOptions& opts) {
  if (!(theta > 0.0) || !(kappa > 0.0) || !(xi > 0.0))
    throw InvalidArgument("stationary_vol_quantizer: theta, kappa, xi must be positive");
  const double beta = 2.0 * kappa / (xi * xi);
  const double alpha = theta * beta;
  Quantizer1D q = optimize(GammaLaw(alpha, 1.0), n, opts, std::nullopt, "gamma");
  for (double& x : q.grid) x /= beta;
  q.distortion /= beta * beta;
  if (n == 1) q.grid[0] = theta;
  q.law_tag = "gamma(alpha=" + std::to_string(alpha) + ",beta=" + std::to_string(beta) + ")";
  return q;
}

}  // namespace shq
