#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shq/calibration.hpp"
#include "shq/exotics.hpp"

namespace shq {

inline constexpr double kDaysPerYear = 365.0;

/// Flat key/value configuration. Lines are `key = value`; `#` starts a comment;
/// `[section]` headers prefix later keys as `section.key`.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Later values win.
  void merge(const Config& other);

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  double require_double(const std::string& key) const;
  /// Comma-separated numbers.
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// Keys s0, r, q, theta, kappa, xi, rho and optional v0 (a [params] section is also accepted).
HestonParams params_from_config(const Config& c);
std::string params_to_config_text(const HestonParams& p);

/// Header `maturity_days,strike_pct,implied_vol`.
VolSurface read_surface_csv(std::istream& in, double spot, double rate, double dividend);
VolSurface read_surface_csv(const std::filesystem::path& path, double spot, double rate, double dividend);
void write_surface_csv(const VolSurface& s, std::ostream& out);

std::string price_report_to_json(const PriceReport& r);
PriceReport price_report_from_json(const std::string& text);

std::string params_to_json(const HestonParams& p);
HestonParams params_from_json(const std::string& text);

std::string calibration_result_to_json(const CalibrationResult& r, ModelKind model);
CalibrationResult calibration_result_from_json(const std::string& text);

/// Header `maturity_days,strike_pct,market_iv,model_iv,rel_error`; MISSING marks absent values.
void write_smile_csv(const std::vector<SmileRow>& rows, double spot, std::ostream& out);

struct ConvergenceRow {
  int n = 0;
  std::size_t n1 = 0, n2 = 0;
  double strike = 0.0;
  OptionKind kind = OptionKind::Call;
  double price = 0.0;
  double benchmark = 0.0;
  double runtime_ms = 0.0;
};
inline constexpr const char* kConvergenceHeader = "n,N1,N2,K,kind,price,benchmark,rel_err,runtime_ms";
void write_convergence_csv(const std::vector<ConvergenceRow>& rows, std::ostream& out);

/// Cached tree keyed by parameters, maturity, grid sizes and Lloyd tolerance. Builds and stores on a
/// miss while holding an advisory lock on the cache directory; an unreadable entry is rebuilt.
QuantTree cached_tree(const std::filesystem::path& dir, const HestonParams& p, double maturity, int steps,
                      std::size_t n1, std::size_t n2, const TreeOptions& opts = {}, bool* hit = nullptr);
std::filesystem::path tree_cache_path(const std::filesystem::path& dir, const HestonParams& p, double maturity,
                                      int steps, std::size_t n1, std::size_t n2, const TreeOptions& opts);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

/// Machine-readable error record `{"error": kind, "message": ...}`.
std::string error_json(const std::string& kind, const std::string& message);

}  // namespace shq
