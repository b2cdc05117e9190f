#include "shq/mc.hpp"

#include <cmath>
#include <numbers>

namespace shq {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr std::size_t kBlock = 4096;  // samples per independently seeded block

struct Welford {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  McEstimate estimate() const {
    return {mean, n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0};
  }
};

// Simulates cfg.paths paths. Each call of visit sees one estimator sample: a single path, or an
// antithetic pair laid out back to back in x and y. Pairs negate the Gaussian drivers only; each
// member draws its own v0, since a shared v0 correlates the pair positively.
template <class Visit>
void run_paths(const HestonParams& p, double maturity, const McConfig& cfg, Visit&& visit) {
  p.validate();
  cfg.validate();
  require_scheme_positivity(p);
  if (!(maturity > 0.0)) throw InvalidArgument("mc: maturity must be positive");
  const int n = cfg.steps;
  const double h = maturity / n;
  const double rho = p.rho, rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double beta = 2.0 * p.kappa / (p.xi * p.xi), alpha = p.theta * beta;
  std::vector<double> boost(n), damp(n);
  for (int k = 0; k < n; ++k) {
    boost[k] = std::exp(p.kappa * h * k);
    damp[k] = 1.0 / boost[k];
  }
  const double quarter_xi2 = 0.25 * p.xi * p.xi;
  const double mu_rate = h * (p.kappa * p.theta - quarter_xi2);
  const double drift = (p.r - p.q) * h;

  const int copies = cfg.antithetic ? 2 : 1;
  const std::size_t samples = cfg.paths / copies;
  std::vector<double> x(static_cast<std::size_t>(copies) * (n + 1)), y(x.size());
  std::vector<double> za(static_cast<std::size_t>(n)), zv(za.size());
  std::vector<double> za_neg(za.size()), zv_neg(za.size());

  for (std::size_t block = 0; block * kBlock < samples; ++block) {
    std::uint64_t st = cfg.seed + 0x632BE59BD9B4E019ull * (block + 1);
    Xoshiro256 rng(splitmix64(st));
    NormalSampler normal(rng);
    const std::size_t end = std::min(samples, (block + 1) * kBlock);
    for (std::size_t s = block * kBlock; s < end; ++s) {
      double v0[2];
      for (int c = 0; c < copies; ++c) v0[c] = p.v0 ? *p.v0 : sample_gamma(alpha, rng, normal) / beta;
      for (int k = 0; k < n; ++k) {
        const double z2 = normal(), zp = normal();
        zv[k] = z2;
        za[k] = rho * z2 + rho_c * zp;
      }
      for (int c = 0; c < copies; ++c) {
        const double sign = c == 0 ? 1.0 : -1.0;
        double* xs = x.data() + c * (n + 1);
        double* ys = y.data() + c * (n + 1);
        xs[0] = std::log(p.s0);
        ys[0] = v0[c];
        for (int k = 0; k < n; ++k) {
          const double yk = ys[k], z2 = sign * zv[k], z1 = sign * za[k];
          // Milstein in completed-square form: mu + kappa_c (z + lambda)^2
          const double kc = quarter_xi2 * boost[k] * h;
          const double lam = 2.0 * std::sqrt(yk * damp[k] / h) / p.xi;
          ys[k + 1] = mu_rate * boost[k] + kc * (z2 + lam) * (z2 + lam);
          const double v = damp[k] * yk;
          xs[k + 1] = xs[k] + drift - 0.5 * v * h + std::sqrt(v * h) * z1;
        }
        if (c == 1) {
          for (int k = 0; k < n; ++k) {
            za_neg[k] = -za[k];
            zv_neg[k] = -zv[k];
          }
        }
      }
      visit(x.data(), y.data(), za.data(), zv.data(), za_neg.data(), zv_neg.data(), copies);
    }
  }
}

}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  std::uint64_t st = seed;
  for (auto& w : s_) w = splitmix64(st);
}

std::uint64_t Xoshiro256::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256::uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

double NormalSampler::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(rng_.uniform()));
  const double a = 2.0 * std::numbers::pi * rng_.uniform();
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double sample_gamma(double shape, Xoshiro256& rng, NormalSampler& normal) {
  if (!(shape > 0.0)) throw InvalidArgument("sample_gamma: shape must be positive");
  if (shape < 1.0) return sample_gamma(shape + 1.0, rng, normal) * std::pow(rng.uniform(), 1.0 / shape);
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

void McConfig::validate() const {
  if (paths < 1 || steps < 1) throw InvalidArgument("McConfig: paths and steps must be at least 1");
  if (antithetic && paths % 2 != 0) throw InvalidArgument("McConfig: antithetic sampling needs an even path count");
}

PathBatch simulate_paths(const HestonParams& p, double maturity, const McConfig& cfg) {
  PathBatch b;
  b.paths = cfg.paths;
  b.steps = cfg.steps;
  const std::size_t stride = static_cast<std::size_t>(cfg.steps) + 1;
  b.log_asset.reserve(cfg.paths * stride);
  b.vol.reserve(cfg.paths * stride);
  run_paths(p, maturity, cfg,
            [&](const double* x, const double* y, const double* za, const double* zv, const double* za_neg,
                const double* zv_neg, int copies) {
              for (int c = 0; c < copies; ++c) {
                b.log_asset.insert(b.log_asset.end(), x + c * stride, x + (c + 1) * stride);
                b.vol.insert(b.vol.end(), y + c * stride, y + (c + 1) * stride);
                const double* a = c == 0 ? za : za_neg;
                const double* v = c == 0 ? zv : zv_neg;
                b.z_asset.insert(b.z_asset.end(), a, a + cfg.steps);
                b.z_vol.insert(b.z_vol.end(), v, v + cfg.steps);
              }
            });
  return b;
}

McEstimate mc_european(const HestonParams& p, const Payoff& payoff, double maturity, const McConfig& cfg) {
  const double df = std::exp(-p.r * maturity);
  const int n = cfg.steps;
  Welford acc;
  run_paths(p, maturity, cfg,
            [&](const double* x, const double*, const double*, const double*, const double*, const double*, int copies) {
              double s = 0.0;
              for (int c = 0; c < copies; ++c) s += payoff(std::exp(x[c * (n + 1) + n]));
              acc.add(df * s / copies);
            });
  return acc.estimate();
}

McEstimate mc_barrier(const HestonParams& p, const BarrierSpec& spec, const McConfig& cfg) {
  if (!(spec.barrier > 0.0)) throw InvalidArgument("mc_barrier: barrier must be positive");
  const double T = spec.maturity, h = T / cfg.steps, df = std::exp(-p.r * T), L_log = std::log(spec.barrier);
  const int n = cfg.steps;
  std::vector<double> damp_h(n);
  for (int k = 0; k < n; ++k) damp_h[k] = std::exp(-p.kappa * h * k) * h;
  Welford acc;
  run_paths(p, T, cfg,
            [&](const double* x, const double* y, const double*, const double*, const double*, const double*, int copies) {
              double s = 0.0;
              for (int c = 0; c < copies; ++c) {
                const double* xs = x + c * (n + 1);
                const double* ys = y + c * (n + 1);
                double g = 1.0;
                for (int k = 0; k < n && g > 0.0; ++k)
                  g *= bridge_noncrossing(xs[k], xs[k + 1], damp_h[k] * ys[k], L_log, spec.direction);
                if (g > 0.0) s += g * spec.payoff(std::exp(xs[n]));
              }
              acc.add(df * s / copies);
            });
  return acc.estimate();
}

}  // namespace shq
