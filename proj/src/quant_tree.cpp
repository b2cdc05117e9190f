#include "shq/quant_tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace shq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCut = kNormalTailCutoff;

std::vector<double> normalized(std::span<const double> w) {
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw InvalidArgument("quant_tree: weights have no mass");
  std::vector<double> out(w.begin(), w.end());
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> midpoints(std::span<const double> grid) {
  std::vector<double> m(grid.size() > 0 ? grid.size() - 1 : 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (grid[i] + grid[i + 1]);
  return m;
}

// Probability of the standard normal in (a, b], differenced in the tail that keeps precision.
double normal_mass(double a, double b) {
  if (b <= a) return 0.0;
  if (a >= 0.0) return normal_cdf(-a) - normal_cdf(-b);
  return normal_cdf(b) - normal_cdf(a);
}

double phi2(double a, double c, double rho) {
  if (a <= -kCut || c <= -kCut) return 0.0;
  if (c >= kCut) return normal_cdf(a);
  if (a >= kCut) return normal_cdf(c);
  return bivariate_normal_cdf(a, c, rho);
}

template <class Law>
Quantizer1D quantize_layer(const Law& law, std::size_t n, const TreeOptions& opts,
                           std::optional<std::vector<double>> init, const std::string& tag) {
  if (init && (init->size() != n || !detail::strictly_increasing(*init) ||
               (n > 0 && init->front() < law.support_min())))
    init.reset();
  try {
    return optimize(law, n, opts.lloyd, std::move(init), tag);
  } catch (const NoConvergence& e) {
    throw NoConvergence(tag + ": " + e.what(), e.last_residual());
  } catch (const EmptyCell& e) {
    throw EmptyCell(tag + ": " + e.what());
  }
}

}  // namespace

LloydOptions default_tree_lloyd() {
  LloydOptions o = default_vol_lloyd();
  o.tolerance = 1e-8;
  return o;
}

double Transition::at(std::size_t src, std::size_t j1, std::size_t j2) const {
  if (j1 < lo[src] || j1 >= hi[src]) return 0.0;
  return values[offset[src] + (j1 - lo[src]) * n2_dst + j2];
}

double Transition::row_sum(std::size_t src) const {
  double s = 0.0;
  for (std::size_t i = offset[src]; i < offset[src + 1]; ++i) s += values[i];
  return s;
}

double QuantTree::row_sum_max_dev() const {
  double dev = 0.0;
  for (const Transition& tr : transitions)
    for (std::size_t s = 0; s < tr.sources(); ++s) dev = std::max(dev, std::abs(tr.row_sum(s) - 1.0));
  return dev;
}

QuantTree start_tree(const HestonParams& p, double maturity, int steps, std::size_t n2_0, const TreeOptions& opts) {
  p.validate();
  require_scheme_positivity(p);
  if (!(maturity > 0.0) || steps < 1 || n2_0 < 1)
    throw InvalidArgument("build_tree: need maturity > 0, steps >= 1 and nonempty grids");
  QuantTree tree;
  tree.params = p;
  tree.maturity = maturity;
  tree.steps = steps;
  tree.layers.resize(static_cast<std::size_t>(steps) + 1);
  tree.transitions.resize(static_cast<std::size_t>(steps));
  tree.vol_transitions.resize(static_cast<std::size_t>(steps));
  for (int k = 0; k <= steps; ++k) tree.layers[k].t = tree.time(k);

  TreeLayer& l0 = tree.layers[0];
  if (p.stationary()) {
    const Quantizer1D q = stationary_vol_quantizer(p.theta, p.kappa, p.xi, n2_0, opts.lloyd);
    l0.vol = q.grid;
    l0.vol_weights = normalized(q.weights);
  } else {
    if (n2_0 != 1) throw InvalidArgument("build_tree: a deterministic v0 needs a single vol node at t = 0");
    l0.vol = {*p.v0};
    l0.vol_weights = {1.0};
  }
  l0.asset = {std::log(p.s0)};
  l0.joint = l0.vol_weights;
  return tree;
}

void build_vol_layer(QuantTree& tree, int k, std::size_t n2_next, const TreeOptions& opts) {
  const HestonParams& p = tree.params;
  const TreeLayer& cur = tree.layers[k];
  TreeLayer& next = tree.layers[k + 1];
  const double h = tree.step();
  const std::vector<double> w = normalized(cur.vol_weights);

  std::vector<MixtureLaw<NoncentralSquareLaw>::Component> comps;
  comps.reserve(cur.n2());
  for (std::size_t i = 0; i < cur.n2(); ++i) {
    const MilsteinCoeffs c = milstein_coeffs(p, cur.t, cur.vol[i], h);
    comps.push_back({w[i], NoncentralSquareLaw(c.mu, c.kappa_c, c.lambda_c)});
  }
  const MixtureLaw<NoncentralSquareLaw> law(std::move(comps));

  std::optional<std::vector<double>> init;
  if (opts.warm_start && cur.n2() == n2_next) {
    double m = 0.0;
    for (std::size_t i = 0; i < cur.n2(); ++i) m += w[i] * cur.vol[i];
    const double scale = law.mean() / m;
    init = cur.vol;
    for (double& y : *init) y *= scale;
  }
  const Quantizer1D q = quantize_layer(law, n2_next, opts, std::move(init), "vol layer " + std::to_string(k + 1));
  next.vol = q.grid;

  const std::vector<double> edges = midpoints(next.vol);
  std::vector<double>& pij = tree.vol_transitions[k];
  pij.assign(cur.n2() * n2_next, 0.0);
  next.vol_weights.assign(n2_next, 0.0);
  for (std::size_t i = 0; i < cur.n2(); ++i) {
    const NoncentralSquareLaw& u = law.components()[i].law;
    double fa = 0.0, sa = 1.0;
    for (std::size_t j = 0; j < n2_next; ++j) {
      const bool last = j + 1 == n2_next;
      const double fb = last ? 1.0 : u.cdf(edges[j]);
      const double sb = last ? 0.0 : u.survival(edges[j]);
      pij[i * n2_next + j] = std::max(0.0, fb <= 0.5 ? fb - fa : sa - sb);
      fa = fb;
      sa = sb;
    }
    for (std::size_t j = 0; j < n2_next; ++j) next.vol_weights[j] += cur.vol_weights[i] * pij[i * n2_next + j];
  }
}

void build_asset_layer(QuantTree& tree, int k, std::size_t n1_next, const TreeOptions& opts) {
  const HestonParams& p = tree.params;
  const TreeLayer& cur = tree.layers[k];
  TreeLayer& next = tree.layers[k + 1];
  const double h = tree.step();
  const std::vector<double> w = normalized(cur.joint);

  std::vector<MixtureLaw<NormalLaw>::Component> comps;
  comps.reserve(cur.nodes());
  for (std::size_t i1 = 0; i1 < cur.n1(); ++i1) {
    for (std::size_t i2 = 0; i2 < cur.n2(); ++i2) {
      const EulerCoeffs c = euler_coeffs(p, cur.t, cur.asset[i1], cur.vol[i2], h);
      comps.push_back({w[i1 * cur.n2() + i2], NormalLaw(c.mean, c.sd)});
    }
  }
  const MixtureLaw<NormalLaw> law(std::move(comps));

  std::optional<std::vector<double>> init;
  if (opts.warm_start && cur.n1() == n1_next) {
    // affine map matching the mean and spread of the previous grid to the new law
    double m = 0.0, m2 = 0.0;
    for (std::size_t i1 = 0; i1 < cur.n1(); ++i1)
      for (std::size_t i2 = 0; i2 < cur.n2(); ++i2) {
        m += w[i1 * cur.n2() + i2] * cur.asset[i1];
        m2 += w[i1 * cur.n2() + i2] * cur.asset[i1] * cur.asset[i1];
      }
    const double sd = std::sqrt(std::max(0.0, m2 - m * m));
    const double scale = sd > 0.0 ? std::sqrt(law.variance()) / sd : 1.0;
    init = cur.asset;
    for (double& x : *init) x = law.mean() + scale * (x - m);
  }
  next.asset = quantize_layer(law, n1_next, opts, std::move(init), "asset layer " + std::to_string(k + 1)).grid;
}

Transition joint_transitions(const QuantTree& tree, int k, bool factorize_zero_rho) {
  const HestonParams& p = tree.params;
  const TreeLayer& cur = tree.layers[k];
  const TreeLayer& next = tree.layers[k + 1];
  const double h = tree.step();
  const std::size_t n1d = next.n1(), n2d = next.n2();
  const std::vector<double> xe = midpoints(next.asset);
  const std::vector<double> ye = midpoints(next.vol);
  const std::vector<double>& pij = tree.vol_transitions[k];
  const bool product_form = factorize_zero_rho && p.rho == 0.0;

  Transition tr;
  tr.n2_src = cur.n2();
  tr.n1_dst = n1d;
  tr.n2_dst = n2d;
  tr.lo.resize(cur.nodes());
  tr.hi.resize(cur.nodes());
  tr.offset.assign(cur.nodes() + 1, 0);

  std::vector<double> a, c_up(n2d + 1), c_dn(n2d + 1), g_up, g_dn;
  for (std::size_t i1 = 0; i1 < cur.n1(); ++i1) {
    for (std::size_t i2 = 0; i2 < cur.n2(); ++i2) {
      const std::size_t src = i1 * cur.n2() + i2;
      const EulerCoeffs e = euler_coeffs(p, cur.t, cur.asset[i1], cur.vol[i2], h);
      // Destination asset cells reachable within kCut standard deviations.
      std::size_t lo, hi;
      if (e.sd > 0.0) {
        lo = static_cast<std::size_t>(std::upper_bound(xe.begin(), xe.end(), e.mean - kCut * e.sd) - xe.begin());
        hi = static_cast<std::size_t>(std::lower_bound(xe.begin(), xe.end(), e.mean + kCut * e.sd) - xe.begin()) + 1;
      } else {
        lo = static_cast<std::size_t>(std::lower_bound(xe.begin(), xe.end(), e.mean) - xe.begin());
        hi = lo + 1;
      }
      hi = std::min(hi, n1d);
      lo = std::min(lo, hi - 1);
      tr.lo[src] = static_cast<std::uint32_t>(lo);
      tr.hi[src] = static_cast<std::uint32_t>(hi);
      const std::size_t nb = hi - lo;
      tr.offset[src + 1] = tr.offset[src] + nb * n2d;

      // Standardised asset edges of the band; the outer ones absorb the negligible tails.
      a.assign(nb + 1, 0.0);
      a[0] = -kInf;
      a[nb] = kInf;
      for (std::size_t b = 1; b < nb; ++b) {
        const double edge = xe[lo + b - 1];
        a[b] = e.sd > 0.0 ? (edge - e.mean) / e.sd : (edge < e.mean ? -kInf : kInf);
      }

      const std::size_t base = tr.values.size();
      tr.values.resize(base + nb * n2d);
      double* out = tr.values.data() + base;
      if (product_form) {
        for (std::size_t b = 0; b < nb; ++b) {
          const double m = normal_mass(a[b], a[b + 1]);
          for (std::size_t j2 = 0; j2 < n2d; ++j2) out[b * n2d + j2] = pij[i2 * n2d + j2] * m;
        }
        continue;
      }

      // Z2 bands: (sqrt(y-) - lambda, sqrt(y+) - lambda] and [-sqrt(y+) - lambda, -sqrt(y-) - lambda).
      const MilsteinCoeffs m = milstein_coeffs(p, cur.t, cur.vol[i2], h);
      for (std::size_t f = 0; f <= n2d; ++f) {
        double s;
        if (f == 0) s = 0.0;
        else if (f == n2d) s = kInf;
        else s = std::sqrt(std::max(0.0, (ye[f - 1] - m.mu) / m.kappa_c));
        c_up[f] = s - m.lambda_c;
        c_dn[f] = -s - m.lambda_c;
      }
      const std::size_t cols = n2d + 1;
      g_up.assign((nb + 1) * cols, 0.0);
      g_dn.assign((nb + 1) * cols, 0.0);
      for (std::size_t b = 0; b <= nb; ++b) {
        for (std::size_t f = 0; f < cols; ++f) {
          g_up[b * cols + f] = phi2(a[b], c_up[f], p.rho);
          g_dn[b * cols + f] = phi2(a[b], c_dn[f], p.rho);
        }
      }
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t f = 0; f < n2d; ++f) {
          const double up = g_up[(b + 1) * cols + f + 1] - g_up[b * cols + f + 1] - g_up[(b + 1) * cols + f] +
                            g_up[b * cols + f];
          const double dn = g_dn[(b + 1) * cols + f] - g_dn[b * cols + f] - g_dn[(b + 1) * cols + f + 1] +
                            g_dn[b * cols + f + 1];
          out[b * n2d + f] = std::max(0.0, up) + std::max(0.0, dn);
        }
      }
    }
  }
  return tr;
}

std::vector<double> propagate_joint(const QuantTree& tree, int k) {
  const TreeLayer& cur = tree.layers[k];
  const Transition& tr = tree.transitions[k];
  std::vector<double> out(tr.n1_dst * tr.n2_dst, 0.0);
  for (std::size_t src = 0; src < cur.nodes(); ++src) {
    const double w = cur.joint[src];
    if (w == 0.0) continue;
    const double* row = tr.values.data() + tr.offset[src];
    const std::size_t width = (tr.hi[src] - tr.lo[src]) * tr.n2_dst;
    double* dst = out.data() + tr.lo[src] * tr.n2_dst;
    for (std::size_t i = 0; i < width; ++i) dst[i] += w * row[i];
  }
  return out;
}

QuantTree build_tree(const HestonParams& p, double maturity, int steps, std::size_t n1, std::size_t n2,
                     const TreeOptions& opts) {
  if (steps < 1) throw InvalidArgument("build_tree: steps must be at least 1");
  std::vector<std::size_t> s1(static_cast<std::size_t>(steps) + 1, n1), s2(static_cast<std::size_t>(steps) + 1, n2);
  s1[0] = 1;
  if (!p.stationary()) s2[0] = 1;
  return build_tree(p, maturity, steps, s1, s2, opts);
}

QuantTree build_tree(const HestonParams& p, double maturity, int steps, const std::vector<std::size_t>& n1_schedule,
                     const std::vector<std::size_t>& n2_schedule, const TreeOptions& opts) {
  if (steps < 1 || n1_schedule.size() != static_cast<std::size_t>(steps) + 1 ||
      n2_schedule.size() != n1_schedule.size())
    throw InvalidArgument("build_tree: schedules must have steps + 1 entries");
  if (n1_schedule[0] != 1) throw InvalidArgument("build_tree: the asset starts from a single node");
  for (std::size_t i = 0; i < n1_schedule.size(); ++i)
    if (n1_schedule[i] < 1 || n2_schedule[i] < 1) throw InvalidArgument("build_tree: grid sizes must be positive");
  QuantTree tree = start_tree(p, maturity, steps, n2_schedule[0], opts);
  for (int k = 0; k < steps; ++k) {
    build_vol_layer(tree, k, n2_schedule[k + 1], opts);
    build_asset_layer(tree, k, n1_schedule[k + 1], opts);
    tree.transitions[k] = joint_transitions(tree, k);
    tree.layers[k + 1].joint = propagate_joint(tree, k);
  }
  return tree;
}

namespace {

constexpr char kMagic[8] = {'S', 'H', 'Q', 'T', 'R', 'E', 'E', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("load_tree: truncated stream");
  return v;
}

template <class T>
std::vector<T> get_vec(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 34) / sizeof(T)) throw IoError("load_tree: implausible vector length");
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw IoError("load_tree: truncated stream");
  return v;
}

}  // namespace

void save_tree(const QuantTree& tree, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put(out, kFormatVersion);
  const HestonParams& p = tree.params;
  for (double v : {p.s0, p.r, p.q, p.theta, p.kappa, p.xi, p.rho}) put(out, v);
  put<std::uint8_t>(out, p.v0 ? 1 : 0);
  put(out, p.v0.value_or(0.0));
  put(out, tree.maturity);
  put<std::int32_t>(out, tree.steps);
  for (const TreeLayer& l : tree.layers) {
    put(out, l.t);
    put_vec(out, l.asset);
    put_vec(out, l.vol);
    put_vec(out, l.vol_weights);
    put_vec(out, l.joint);
  }
  for (const Transition& tr : tree.transitions) {
    put<std::uint64_t>(out, tr.n2_src);
    put<std::uint64_t>(out, tr.n1_dst);
    put<std::uint64_t>(out, tr.n2_dst);
    put_vec(out, tr.lo);
    put_vec(out, tr.hi);
    put_vec(out, tr.offset);
    put_vec(out, tr.values);
  }
  for (const auto& v : tree.vol_transitions) put_vec(out, v);
  if (!out) throw IoError("save_tree: write failed");
}

QuantTree load_tree(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("load_tree: not a tree file");
  if (get<std::uint32_t>(in) != kFormatVersion) throw IoError("load_tree: unsupported format version");
  QuantTree tree;
  HestonParams& p = tree.params;
  p.s0 = get<double>(in);
  p.r = get<double>(in);
  p.q = get<double>(in);
  p.theta = get<double>(in);
  p.kappa = get<double>(in);
  p.xi = get<double>(in);
  p.rho = get<double>(in);
  const bool has_v0 = get<std::uint8_t>(in) != 0;
  const double v0 = get<double>(in);
  if (has_v0) p.v0 = v0;
  tree.maturity = get<double>(in);
  tree.steps = get<std::int32_t>(in);
  if (tree.steps < 1) throw IoError("load_tree: invalid step count");
  tree.layers.resize(static_cast<std::size_t>(tree.steps) + 1);
  for (TreeLayer& l : tree.layers) {
    l.t = get<double>(in);
    l.asset = get_vec<double>(in);
    l.vol = get_vec<double>(in);
    l.vol_weights = get_vec<double>(in);
    l.joint = get_vec<double>(in);
  }
  tree.transitions.resize(static_cast<std::size_t>(tree.steps));
  for (Transition& tr : tree.transitions) {
    tr.n2_src = get<std::uint64_t>(in);
    tr.n1_dst = get<std::uint64_t>(in);
    tr.n2_dst = get<std::uint64_t>(in);
    tr.lo = get_vec<std::uint32_t>(in);
    tr.hi = get_vec<std::uint32_t>(in);
    tr.offset = get_vec<std::size_t>(in);
    tr.values = get_vec<double>(in);
  }
  tree.vol_transitions.resize(static_cast<std::size_t>(tree.steps));
  for (auto& v : tree.vol_transitions) v = get_vec<double>(in);
  return tree;
}

}  // namespace shq
