#include "shq/io.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace shq {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
    return v.substr(1, v.size() - 2);
  return v;
}

std::optional<double> to_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* b = t.data();
  const char* e = b + t.size();
  if (*b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) return std::nullopt;
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Round-trip text for doubles in CSV output.
std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

json params_json(const HestonParams& p) {
  json j = {{"s0", p.s0}, {"r", p.r}, {"q", p.q}, {"theta", p.theta}, {"kappa", p.kappa}, {"xi", p.xi}, {"rho", p.rho}};
  j["v0"] = p.v0 ? json(*p.v0) : json(nullptr);
  return j;
}

HestonParams params_of(const json& j) {
  HestonParams p;
  p.s0 = j.at("s0").get<double>();
  p.r = j.at("r").get<double>();
  p.q = j.at("q").get<double>();
  p.theta = j.at("theta").get<double>();
  p.kappa = j.at("kappa").get<double>();
  p.xi = j.at("xi").get<double>();
  p.rho = j.at("rho").get<double>();
  if (j.contains("v0") && !j.at("v0").is_null()) p.v0 = j.at("v0").get<double>();
  return p;
}

template <class F>
auto parse_json(const std::string& text, const char* what, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": " + e.what());
  }
}

// Advisory exclusive lock on a file, released on scope exit.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw IoError("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

constexpr int kCacheVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// Config

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    c.values_[section.empty() ? key : section + "." + key] = unquote(value);
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = to_double(*v);
  if (!d) throw ConfigError("config key '" + key + "': not a number: " + *v);
  return *d;
}

long Config::get_int(const std::string& key, long fallback) const {
  const double d = get_double(key, static_cast<double>(fallback));
  if (d != std::floor(d) || std::abs(d) > 9e15) throw ConfigError("config key '" + key + "': not an integer");
  return static_cast<long>(d);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + *v);
}

double Config::require_double(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing config key '" + key + "'" + (origin_.empty() ? "" : " in " + origin_));
  return get_double(key, 0.0);
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& part : split(*v, ',')) {
    const auto d = to_double(part);
    if (!d) throw ConfigError("config key '" + key + "': bad list entry '" + part + "'");
    out.push_back(*d);
  }
  return out;
}

HestonParams params_from_config(const Config& c) {
  const bool sectioned = c.has("params.theta");
  const auto key = [&](const char* k) { return sectioned ? std::string("params.") + k : std::string(k); };
  HestonParams p;
  p.s0 = c.get_double(key("s0"), 100.0);
  p.r = c.get_double(key("r"), 0.0);
  p.q = c.get_double(key("q"), 0.0);
  p.theta = c.require_double(key("theta"));
  p.kappa = c.require_double(key("kappa"));
  p.xi = c.require_double(key("xi"));
  p.rho = c.require_double(key("rho"));
  if (c.has(key("v0"))) p.v0 = c.get_double(key("v0"), 0.0);
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid model parameters: ") + e.what());
  }
  return p;
}

std::string params_to_config_text(const HestonParams& p) {
  std::ostringstream o;
  o << "[params]\n";
  o << "s0 = " << num(p.s0) << "\nr = " << num(p.r) << "\nq = " << num(p.q) << "\ntheta = " << num(p.theta)
    << "\nkappa = " << num(p.kappa) << "\nxi = " << num(p.xi) << "\nrho = " << num(p.rho) << "\n";
  if (p.v0) o << "v0 = " << num(*p.v0) << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Surface CSV

VolSurface read_surface_csv(std::istream& in, double spot, double rate, double dividend) {
  VolSurface s;
  s.spot = spot;
  s.rate = rate;
  s.dividend = dividend;
  std::string line;
  int lineno = 0;
  int col_t = -1, col_k = -1, col_iv = -1;
  bool pct = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split(line, ',');
    if (col_t < 0) {
      for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
        if (cells[i] == "maturity_days") col_t = i;
        else if (cells[i] == "strike_pct") col_k = i;
        else if (cells[i] == "strike") {
          col_k = i;
          pct = false;
        } else if (cells[i] == "implied_vol") col_iv = i;
      }
      if (col_t < 0 || col_k < 0 || col_iv < 0)
        throw IoError("surface csv: header must name maturity_days, strike_pct (or strike) and implied_vol");
      continue;
    }
    const int need = std::max({col_t, col_k, col_iv});
    if (static_cast<int>(cells.size()) <= need)
      throw IoError("surface csv line " + std::to_string(lineno) + ": too few columns");
    const auto t = to_double(cells[col_t]), k = to_double(cells[col_k]), iv = to_double(cells[col_iv]);
    if (!t || !k || !iv) throw IoError("surface csv line " + std::to_string(lineno) + ": non-numeric value");
    s.quotes.push_back({*t / kDaysPerYear, pct ? *k * spot / 100.0 : *k, *iv});
  }
  if (col_t < 0) throw IoError("surface csv: missing header");
  try {
    s.validate();
  } catch (const Error& e) {
    throw IoError(std::string("surface csv: ") + e.what());
  }
  return s;
}

VolSurface read_surface_csv(const std::filesystem::path& path, double spot, double rate, double dividend) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read surface " + path.string());
  return read_surface_csv(in, spot, rate, dividend);
}

void write_surface_csv(const VolSurface& s, std::ostream& out) {
  out << "maturity_days,strike_pct,implied_vol\n";
  for (const auto& q : s.quotes)
    out << num(q.maturity * kDaysPerYear) << ',' << num(100.0 * q.strike / s.spot) << ',' << num(q.implied_vol) << '\n';
}

// ---------------------------------------------------------------------------
// JSON

std::string price_report_to_json(const PriceReport& r) {
  json d = {{"row_sum_max_dev", r.diagnostics.row_sum_max_dev},
            {"min_g", r.diagnostics.min_g},
            {"max_g", r.diagnostics.max_g}};
  json snaps = json::array();
  for (const auto& [req, got] : r.diagnostics.snapped_dates) snaps.push_back({{"requested", req}, {"tree_date", got}});
  d["snapped_dates"] = snaps;
  json j = {{"instrument", r.instrument}, {"method", r.method}, {"params_hash", r.params_hash},
            {"n", r.n},                   {"N1", r.n1},          {"N2", r.n2},
            {"price", r.price},           {"runtime_ms", r.runtime_ms}};
  if (r.standard_error) j["standard_error"] = *r.standard_error;
  j["diagnostics"] = d;
  return j.dump(2);
}

PriceReport price_report_from_json(const std::string& text) {
  return parse_json(text, "price report json", [](const json& j) {
    PriceReport r;
    r.instrument = j.at("instrument").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.params_hash = j.at("params_hash").get<std::string>();
    r.n = j.at("n").get<int>();
    r.n1 = j.at("N1").get<std::size_t>();
    r.n2 = j.at("N2").get<std::size_t>();
    r.price = j.at("price").get<double>();
    r.runtime_ms = j.at("runtime_ms").get<double>();
    if (j.contains("standard_error")) r.standard_error = j.at("standard_error").get<double>();
    const json& d = j.at("diagnostics");
    r.diagnostics.row_sum_max_dev = d.at("row_sum_max_dev").get<double>();
    r.diagnostics.min_g = d.at("min_g").get<double>();
    r.diagnostics.max_g = d.at("max_g").get<double>();
    if (d.contains("snapped_dates"))
      for (const auto& s : d.at("snapped_dates"))
        r.diagnostics.snapped_dates.emplace_back(s.at("requested").get<double>(), s.at("tree_date").get<double>());
    return r;
  });
}

std::string params_to_json(const HestonParams& p) { return params_json(p).dump(2); }

HestonParams params_from_json(const std::string& text) {
  return parse_json(text, "params json", [](const json& j) { return params_of(j); });
}

std::string calibration_result_to_json(const CalibrationResult& r, ModelKind model) {
  json trace = json::array();
  for (const auto& [e, v] : r.trace) trace.push_back({e, v});
  const HestonParams& p = r.params;
  json j = {{"model", to_string(model)},
            {"params", params_json(p)},
            {"objective_value", r.objective_value},
            {"feller_satisfied", r.feller_satisfied},
            {"feller_ratio", p.xi * p.xi / (2.0 * p.kappa * p.theta)},
            {"evals", r.evals},
            {"no_improvement", r.no_improvement},
            {"params_hash", params_hash(p)},
            {"trace", trace}};
  return j.dump(2);
}

CalibrationResult calibration_result_from_json(const std::string& text) {
  return parse_json(text, "calibration json", [](const json& j) {
    CalibrationResult r;
    r.params = params_of(j.at("params"));
    r.objective_value = j.at("objective_value").get<double>();
    r.feller_satisfied = j.at("feller_satisfied").get<bool>();
    r.evals = j.at("evals").get<int>();
    r.no_improvement = j.at("no_improvement").get<bool>();
    for (const auto& t : j.at("trace")) r.trace.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
    return r;
  });
}

void write_smile_csv(const std::vector<SmileRow>& rows, double spot, std::ostream& out) {
  out << "maturity_days,strike_pct,market_iv,model_iv,rel_error\n";
  for (const auto& r : rows) {
    out << num(r.maturity * kDaysPerYear) << ',' << num(100.0 * r.strike / spot) << ',' << num(r.market_iv) << ','
        << (r.model_iv ? num(*r.model_iv) : "MISSING") << ',' << (r.rel_error ? num(*r.rel_error) : "MISSING")
        << '\n';
  }
}

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, std::ostream& out) {
  out << kConvergenceHeader << '\n';
  for (const auto& r : rows) {
    const double rel = r.benchmark != 0.0 ? (r.price - r.benchmark) / r.benchmark : 0.0;
    out << r.n << ',' << r.n1 << ',' << r.n2 << ',' << num(r.strike) << ',' << to_string(r.kind) << ','
        << num(r.price) << ',' << num(r.benchmark) << ',' << num(rel) << ',' << num(r.runtime_ms) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tree cache

std::filesystem::path tree_cache_path(const std::filesystem::path& dir, const HestonParams& p, double maturity,
                                      int steps, std::size_t n1, std::size_t n2, const TreeOptions& opts) {
  // FNV-1a over the non-parameter part of the key
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto mix = [&](const void* data, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) h = (h ^ b[i]) * 0x100000001b3ull;
  };
  const std::uint64_t sizes[] = {static_cast<std::uint64_t>(steps), n1, n2,
                                 static_cast<std::uint64_t>(opts.lloyd.max_iters),
                                 static_cast<std::uint64_t>(opts.lloyd.anderson),
                                 static_cast<std::uint64_t>(opts.lloyd.anderson_window),
                                 static_cast<std::uint64_t>(opts.warm_start), kCacheVersion};
  mix(&maturity, sizeof maturity);
  mix(&opts.lloyd.tolerance, sizeof opts.lloyd.tolerance);
  mix(sizes, sizeof sizes);
  std::ostringstream name;
  name << "tree-" << params_hash(p) << '-' << std::hex << std::setw(16) << std::setfill('0') << h << ".bin";
  return dir / name.str();
}

QuantTree cached_tree(const std::filesystem::path& dir, const HestonParams& p, double maturity, int steps,
                      std::size_t n1, std::size_t n2, const TreeOptions& opts, bool* hit) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create cache directory " + dir.string() + ": " + ec.message());
  const FileLock lock(dir / ".lock");
  const auto path = tree_cache_path(dir, p, maturity, steps, n1, n2, opts);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    try {
      QuantTree t = load_tree(in);
      if (hit) *hit = true;
      return t;
    } catch (const IoError&) {
      // stale or truncated entry: rebuild below
    }
  }
  if (hit) *hit = false;
  QuantTree t = build_tree(p, maturity, steps, n1, n2, opts);
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache entry " + tmp.string());
    save_tree(t, out);
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot publish cache entry " + path.string() + ": " + ec.message());
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string error_json(const std::string& kind, const std::string& message) {
  return json({{"error", kind}, {"message", message}}).dump();
}

}  // namespace shq
