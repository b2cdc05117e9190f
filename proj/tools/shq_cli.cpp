// shq_cli: pricing, calibration and convergence studies for the stationary Heston model.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "shq/io.hpp"
#include "shq/mc.hpp"

using namespace shq;

namespace {

enum Exit { kOk = 0, kUnexpected = 1, kConfig = 2, kIo = 3, kCompute = 4 };

struct KeyDoc {
  const char* group;
  const char* key;
  const char* fallback;
  const char* help;
};

// Every configuration key. Flags are the keys with '_' replaced by '-'.
constexpr KeyDoc kKeys[] = {
    {"common", "config", "", "key = value file; flags override it"},
    {"common", "out", "", "output file (stdout when empty)"},
    {"params", "params", "", "file holding the model parameters (flat keys or a [params] section)"},
    {"params", "s0", "100", "spot"},
    {"params", "r", "0", "risk-free rate"},
    {"params", "q", "0", "dividend yield"},
    {"params", "theta", "", "long-run variance"},
    {"params", "kappa", "", "mean-reversion speed"},
    {"params", "xi", "", "vol of variance"},
    {"params", "rho", "", "spot/variance correlation"},
    {"params", "v0", "", "deterministic initial variance (stationary start when absent)"},
    {"option", "strike", "100", "strike"},
    {"option", "kind", "call", "call or put"},
    {"option", "maturity_days", "180", "maturity in days, ACT/365"},
    {"tree", "n", "180", "time steps"},
    {"tree", "n1", "50", "asset grid size per date"},
    {"tree", "n2", "10", "vol grid size per date"},
    {"tree", "lloyd_tol", "1e-8", "Lloyd stopping tolerance for tree grids"},
    {"tree", "cache_dir", "", "tree cache directory (no caching when empty)"},
    {"european", "method", "quant", "quant, laguerre, fourier-node or mc"},
    {"european", "nodes", "", "Laguerre nodes (default 64) or fourier-node quantizer size (default 500)"},
    {"mc", "mc_paths", "1000000", "Monte Carlo paths"},
    {"mc", "mc_steps", "", "Monte Carlo steps (defaults to n)"},
    {"mc", "seed", "42", "random seed"},
    {"mc", "antithetic", "true", "antithetic pairs"},
    {"bermudan", "exercise_days", "30,60,90,120,150,180", "exercise dates in days, comma separated"},
    {"barrier", "barrier", "115", "barrier level"},
    {"barrier", "direction", "up-out", "up-out or down-out"},
    {"barrier", "barrier_method", "quant", "quant or mc"},
    {"surface", "surface", "", "surface CSV (maturity_days,strike_pct,implied_vol)"},
    {"calibrate", "model", "stationary", "stationary or standard"},
    {"calibrate", "target_days", "50", "calibrated maturity in days"},
    {"calibrate", "lambda", "0.01", "Feller penalty weight"},
    {"calibrate", "initial_guess", "", "starting vector: theta,kappa,xi,rho (v0 first for standard); 0.04,2,0.5,-0.5 when empty"},
    {"calibrate", "max_evals", "5000", "objective evaluations across restarts"},
    {"calibrate", "restarts", "5", "simplex restarts"},
    {"calibrate", "laguerre_nodes", "64", "Laguerre nodes for model prices"},
    {"smile", "maturities_days", "", "report maturities in days (all surface maturities when empty)"},
    {"study", "n_list", "180", "time steps to sweep"},
    {"study", "sizes", "20x5,50x10,100x10,150x10", "(N1)x(N2) pairs to sweep"},
    {"study", "call_strikes", "80,85,90,95,100", "call strikes"},
    {"study", "put_strikes", "100,105,110,115,120", "put strikes"},
    {"synth", "strike_pcts", "80,85,90,95,100,105,110,115,120", "strikes in percent of spot"},
    {"synth", "synth_days", "7,14,22,50", "maturities in days"},
};

struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> groups;
};

const std::vector<Command> kCommands = {
    {"price-european", "European option by tree, Laguerre, quantized-node Fourier or Monte Carlo",
     {"common", "params", "option", "tree", "european", "mc"}},
    {"price-bermudan", "Bermudan option on the quantization tree", {"common", "params", "option", "tree", "bermudan"}},
    {"price-barrier", "Barrier option on the tree or by bridge Monte Carlo",
     {"common", "params", "option", "tree", "barrier", "mc"}},
    {"calibrate", "Nelder-Mead calibration to a surface CSV", {"common", "params", "surface", "calibrate", "mc"}},
    {"smile-report", "Model vs market implied vols", {"common", "params", "surface", "smile", "calibrate"}},
    {"convergence-study", "Tree prices over (n, N1, N2) against the Laguerre benchmark",
     {"common", "params", "option", "tree", "study", "european"}},
    {"synth-surface", "Surface CSV generated by the model", {"common", "params", "synth", "calibrate"}},
    {"config-reference", "Print every configuration key with its default", {"common"}},
};

std::string flag_of(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f)
    if (c == '_') c = '-';
  return f;
}

// Defaults, then config file(s), then flags.
Config resolve(const Config& flags) {
  Config c;
  for (const auto& k : kKeys)
    if (*k.fallback) c.set(k.key, k.fallback);
  const auto flatten = [](const Config& in) {
    Config out;
    for (const auto& [k, v] : in.values()) out.set(k.rfind("params.", 0) == 0 ? k.substr(7) : k, v);
    return out;
  };
  if (const auto f = flags.get("config")) c.merge(flatten(Config::load(*f)));
  const auto pfile = flags.get("params") ? flags.get("params") : c.get("params");
  if (pfile) c.merge(flatten(Config::load(*pfile)));
  c.merge(flags);
  return c;
}

void emit(const Config& c, const std::string& text) {
  const std::string out = c.get_string("out", "");
  if (out.empty())
    std::cout << text << (text.empty() || text.back() == '\n' ? "" : "\n");
  else
    write_file(out, text.back() == '\n' ? text : text + "\n");
}

OptionKind kind_of(const Config& c) {
  const std::string k = c.get_string("kind", "call");
  if (k == "call") return OptionKind::Call;
  if (k == "put") return OptionKind::Put;
  throw ConfigError("kind must be call or put, got '" + k + "'");
}

int positive_int(const Config& c, const std::string& key) {
  const long v = c.get_int(key, 0);
  if (v < 1) throw ConfigError(key + " must be a positive integer");
  return static_cast<int>(v);
}

double maturity_of(const Config& c) {
  const double d = c.get_double("maturity_days", 180.0);
  if (!(d > 0.0)) throw ConfigError("maturity_days must be positive");
  return d / kDaysPerYear;
}

TreeOptions tree_options(const Config& c) {
  TreeOptions o;
  o.lloyd.tolerance = c.get_double("lloyd_tol", o.lloyd.tolerance);
  if (!(o.lloyd.tolerance > 0.0)) throw ConfigError("lloyd_tol must be positive");
  return o;
}

QuantTree tree_for(const Config& c, const HestonParams& p, double T) {
  const int n = positive_int(c, "n");
  const auto n1 = static_cast<std::size_t>(positive_int(c, "n1"));
  const auto n2 = static_cast<std::size_t>(positive_int(c, "n2"));
  const std::string dir = c.get_string("cache_dir", "");
  if (!dir.empty()) return cached_tree(dir, p, T, n, n1, n2, tree_options(c));
  return build_tree(p, T, n, n1, n2, tree_options(c));
}

McConfig mc_config(const Config& c) {
  McConfig m;
  m.paths = static_cast<std::size_t>(positive_int(c, "mc_paths"));
  m.steps = c.has("mc_steps") ? positive_int(c, "mc_steps") : positive_int(c, "n");
  m.seed = static_cast<std::uint64_t>(c.get_int("seed", 42));
  m.antithetic = c.get_bool("antithetic", true);
  return m;
}

using Clock = std::chrono::steady_clock;
double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

std::string run_european(const Config& c) {
  const HestonParams p = params_from_config(c);
  const double T = maturity_of(c), K = c.get_double("strike", 100.0);
  const OptionKind kind = kind_of(c);
  const std::string method = c.get_string("method", "quant");
  const auto t0 = Clock::now();
  PriceReport r;
  if (method == "quant") {
    const QuantTree tree = tree_for(c, p, T);
    r = european_on_tree(tree, Payoff{kind, K, {}}, T);
  } else {
    r.params_hash = params_hash(p);
    r.instrument = "European " + Payoff{kind, K, {}}.describe() + " T=" + std::to_string(T);
    const EuroOption opt{K, T, kind};
    if (method == "laguerre") {
      const int nodes = c.has("nodes") ? positive_int(c, "nodes") : 64;
      r.method = "laguerre";
      r.n1 = static_cast<std::size_t>(nodes);
      r.price = stationary_price_laguerre(p, opt, nodes);
    } else if (method == "fourier-node") {
      const int nodes = c.has("nodes") ? positive_int(c, "nodes") : 500;
      r.method = "fourier_node";
      r.n2 = static_cast<std::size_t>(nodes);
      r.price = stationary_price_quantized(p, opt, static_cast<std::size_t>(nodes));
    } else if (method == "mc") {
      const McConfig m = mc_config(c);
      const McEstimate e = mc_european(p, Payoff{kind, K, {}}, T, m);
      r.method = "monte_carlo";
      r.n = m.steps;
      r.price = e.price;
      r.standard_error = e.standard_error;
    } else {
      throw ConfigError("unknown method '" + method + "'");
    }
  }
  r.runtime_ms = ms_since(t0);
  return price_report_to_json(r);
}

std::string run_bermudan(const Config& c) {
  const HestonParams p = params_from_config(c);
  const double T = maturity_of(c);
  BermudanSpec spec{Payoff{kind_of(c), c.get_double("strike", 100.0), {}}, {}, T};
  for (double d : c.get_list("exercise_days", {})) spec.exercise_dates.push_back(d / kDaysPerYear);
  if (spec.exercise_dates.empty()) throw ConfigError("exercise_days is empty");
  const auto t0 = Clock::now();
  const QuantTree tree = tree_for(c, p, T);
  PriceReport r = bermudan_price(tree, spec);
  r.runtime_ms = ms_since(t0);
  return price_report_to_json(r);
}

std::string run_barrier(const Config& c) {
  const HestonParams p = params_from_config(c);
  const double T = maturity_of(c);
  const std::string dir = c.get_string("direction", "up-out");
  BarrierDirection d;
  if (dir == "up-out") d = BarrierDirection::UpOut;
  else if (dir == "down-out") d = BarrierDirection::DownOut;
  else throw ConfigError("direction must be up-out or down-out");
  const BarrierSpec spec{Payoff{kind_of(c), c.get_double("strike", 100.0), {}}, c.get_double("barrier", 115.0), d, T};
  const std::string method = c.get_string("barrier_method", "quant");
  const auto t0 = Clock::now();
  PriceReport r;
  if (method == "quant") {
    r = barrier_price(tree_for(c, p, T), spec);
  } else if (method == "mc") {
    const McConfig m = mc_config(c);
    const McEstimate e = mc_barrier(p, spec, m);
    r.instrument = std::string(to_string(d)) + " " + spec.payoff.describe() + " L=" + std::to_string(spec.barrier);
    r.method = "monte_carlo_bridge";
    r.params_hash = params_hash(p);
    r.n = m.steps;
    r.price = e.price;
    r.standard_error = e.standard_error;
  } else {
    throw ConfigError("barrier_method must be quant or mc");
  }
  r.runtime_ms = ms_since(t0);
  return price_report_to_json(r);
}

VolSurface surface_of(const Config& c) {
  const std::string path = c.get_string("surface", "");
  if (path.empty()) throw ConfigError("surface is required");
  return read_surface_csv(std::filesystem::path(path), c.get_double("s0", 100.0), c.get_double("r", 0.0),
                          c.get_double("q", 0.0));
}

ModelKind model_of(const Config& c) {
  const std::string m = c.get_string("model", "stationary");
  if (m == "stationary") return ModelKind::Stationary;
  if (m == "standard") return ModelKind::Standard;
  throw ConfigError("model must be stationary or standard");
}

std::string run_calibrate(const Config& c) {
  const VolSurface s = surface_of(c);
  CalibrationSpec spec;
  spec.model = model_of(c);
  spec.target_maturity = c.get_double("target_days", 50.0) / kDaysPerYear;
  spec.penalty_lambda = c.get_double("lambda", 0.01);
  spec.initial_guess = c.get_list("initial_guess", {});
  if (spec.initial_guess.empty())
    spec.initial_guess = spec.model == ModelKind::Stationary ? std::vector<double>{0.04, 2.0, 0.5, -0.5}
                                                             : std::vector<double>{0.04, 0.04, 2.0, 0.5, -0.5};
  spec.optimizer.max_evals = positive_int(c, "max_evals");
  spec.optimizer.restarts = static_cast<int>(c.get_int("restarts", 5));
  spec.optimizer.seed = static_cast<std::uint64_t>(c.get_int("seed", 42));
  spec.laguerre_nodes = positive_int(c, "laguerre_nodes");
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return calibration_result_to_json(calibrate(s, spec), spec.model);
}

std::string run_smile(const Config& c) {
  const HestonParams p = params_from_config(c);
  const VolSurface s = surface_of(c);
  std::vector<double> mats;
  for (double d : c.get_list("maturities_days", {})) mats.push_back(d / kDaysPerYear);
  std::ostringstream out;
  write_smile_csv(smile_report(p, s, mats, positive_int(c, "laguerre_nodes")), s.spot, out);
  return out.str();
}

std::vector<std::pair<std::size_t, std::size_t>> sizes_of(const Config& c) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::istringstream in(c.get_string("sizes", ""));
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t a = 0, b = 0;
    char x = 0;
    std::istringstream is(item);
    if (!(is >> a >> x >> b) || x != 'x' || a < 1 || b < 1) throw ConfigError("bad size entry '" + item + "'");
    out.emplace_back(a, b);
  }
  if (out.empty()) throw ConfigError("sizes is empty");
  return out;
}

std::string run_study(const Config& c) {
  const HestonParams p = params_from_config(c);
  const double T = maturity_of(c);
  const int nodes = c.has("nodes") ? positive_int(c, "nodes") : 64;
  std::vector<std::pair<double, OptionKind>> options;
  for (double k : c.get_list("call_strikes", {})) options.emplace_back(k, OptionKind::Call);
  for (double k : c.get_list("put_strikes", {})) options.emplace_back(k, OptionKind::Put);
  std::vector<double> bench;
  for (const auto& [k, kind] : options) bench.push_back(stationary_price_laguerre(p, {k, T, kind}, nodes));
  std::vector<ConvergenceRow> rows;
  for (double nd : c.get_list("n_list", {})) {
    const int n = static_cast<int>(nd);
    if (n < 1 || n != nd) throw ConfigError("n_list entries must be positive integers");
    for (const auto& [n1, n2] : sizes_of(c)) {
      const auto t0 = Clock::now();
      const QuantTree tree = build_tree(p, T, n, n1, n2, tree_options(c));
      const double build_ms = ms_since(t0);
      for (std::size_t i = 0; i < options.size(); ++i) {
        const auto t1 = Clock::now();
        const PriceReport r = european_on_tree(tree, Payoff{options[i].second, options[i].first, {}}, T);
        // build time is charged to every option priced on the tree
        rows.push_back({n, n1, n2, options[i].first, options[i].second, r.price, bench[i], build_ms + ms_since(t1)});
      }
    }
  }
  std::ostringstream out;
  write_convergence_csv(rows, out);
  return out.str();
}

std::string run_synth(const Config& c) {
  const HestonParams p = params_from_config(c);
  std::vector<double> mats, strikes;
  for (double d : c.get_list("synth_days", {})) mats.push_back(d / kDaysPerYear);
  for (double k : c.get_list("strike_pcts", {})) strikes.push_back(k * p.s0 / 100.0);
  std::ostringstream out;
  write_surface_csv(synthetic_surface(p, mats, strikes, positive_int(c, "laguerre_nodes")), out);
  return out.str();
}

std::string config_reference() {
  std::ostringstream o;
  o << "# shq_cli configuration reference\n\n"
    << "Generated by `shq_cli config-reference`.\n\n"
    << "Configuration files hold `key = value` lines. `#` starts a comment and `[section]` headers are allowed;\n"
    << "model parameters may sit in a `[params]` section. Every key is also a flag (`_` becomes `-`).\n"
    << "Precedence: defaults, then `--config`, then `--params`, then flags.\n"
    << "Maturities are in days and converted with ACT/365.\n\n";
  for (const auto& cmd : kCommands) {
    o << "## " << cmd.name << "\n\n" << cmd.help << ".\n\n| key | flag | default | meaning |\n|---|---|---|---|\n";
    for (const auto& g : cmd.groups)
      for (const auto& k : kKeys)
        if (g == k.group)
          o << "| `" << k.key << "` | `" << flag_of(k.key) << "` | " << (*k.fallback ? k.fallback : "") << " | "
            << k.help << " |\n";
    o << "\n";
  }
  o << "## Exit codes\n\n| code | meaning |\n|---|---|\n"
    << "| 0 | success |\n| 1 | unexpected failure |\n| 2 | configuration error |\n| 3 | I/O error |\n"
    << "| 4 | computation error |\n\nErrors are also written to stderr as `{\"error\": kind, \"message\": text}`.\n";
  return o.str();
}

int fail(int code, const std::string& kind, const std::string& msg) {
  std::cerr << error_json(kind, msg) << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary Heston pricing and calibration"};
  app.require_subcommand(1);
  Config flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : kCommands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    subs[cmd.name] = sub;
    for (const auto& g : cmd.groups)
      for (const auto& k : kKeys)
        if (g == k.group) {
          const std::string key = k.key;
          sub->add_option_function<std::string>(
              flag_of(key), [&flags, key](const std::string& v) { flags.set(key, v); }, k.help);
        }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(kConfig, "ConfigError", e.what());
  }

  try {
    std::string name;
    for (const auto& [n, sub] : subs)
      if (sub->parsed()) name = n;
    const Config c = resolve(flags);
    std::string text;
    if (name == "price-european") text = run_european(c);
    else if (name == "price-bermudan") text = run_bermudan(c);
    else if (name == "price-barrier") text = run_barrier(c);
    else if (name == "calibrate") text = run_calibrate(c);
    else if (name == "smile-report") text = run_smile(c);
    else if (name == "convergence-study") text = run_study(c);
    else if (name == "synth-surface") text = run_synth(c);
    else text = config_reference();
    emit(c, text);
    return kOk;
  } catch (const ConfigError& e) {
    return fail(kConfig, e.kind(), e.what());
  } catch (const IoError& e) {
    return fail(kIo, e.kind(), e.what());
  } catch (const Error& e) {
    return fail(kCompute, e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(kUnexpected, "Unexpected", e.what());
  }
}
