#pragma once

// Config-driven experiments: JSON config -> result rows (CSV) + manifest,
// and SVG convergence charts from result CSVs.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "smallball/marginal_spectra.hpp"
#include "smallball/smallball.hpp"

namespace sbl::lab {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

struct MarginalSpec {
  EigenSequence sequence;
  std::optional<SvfExpr> counting;
};

struct ExperimentConfig {
  json raw;
  std::string name;
  std::vector<json> marginals;  ///< one descriptor per tensor factor (after expansion)
  int tensor_order = 1;
  std::vector<double> epsilon_grid;
  std::vector<double> t_grid;
  std::vector<std::string> methods;
  std::int64_t mc_samples = 100000;
  std::uint64_t seed = 1;
  std::optional<AsymptoticFormula> formula;
  double eta = 1e-3;
  std::int64_t truncation_n = 100000;
  /// Per-factor truncation for tensor orders >= 2; 0 means 2 truncation_n + 1.
  std::int64_t factor_n = 0;
  std::string output_dir;  ///< used when the CLI gets no --out

  bool wants(const std::string& method) const;
};

/// Parses and validates; throws ConfigError naming a JSON pointer or line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Builds one factor; n_max is the truncation index of the sequence.
MarginalSpec build_marginal(const json& descriptor, std::int64_t n_max);
AsymptoticFormula parse_formula(const json& descriptor, const std::string& pointer);

struct ResultRow {
  double x = 0.0;  ///< epsilon or t
  std::string method;
  double value = 0.0;
  double error = 0.0;  ///< stderr or residual, per method
  std::int64_t truncation_n = 0;
  bool certified = true;
};

struct RunOutput {
  std::vector<ResultRow> rows;  ///< sorted by (x, method)
  json manifest;
};

/// Throws TruncationExhausted naming the offending grid point.
RunOutput run_experiment(const ExperimentConfig& config);

std::string format_csv(const std::vector<ResultRow>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Throws ConfigError on an unreadable or ragged file.
CsvTable read_csv(const std::string& path);

struct PlotOptions {
  std::string x;
  std::vector<std::string> ys;
  bool logx = false;
  bool logy = false;
  std::string group;  ///< optional column splitting rows into series
};

/// Self-contained SVG, one polyline per series. Throws ConfigError on
/// missing columns, non-numeric data or no data rows.
std::string render_svg(const CsvTable& table, const PlotOptions& options);

}  // namespace sbl::lab
