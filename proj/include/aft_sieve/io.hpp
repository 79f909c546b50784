#pragma once

// CSV ingestion of survival tables and JSON / CSV reports.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aft_sieve/fitter.hpp"
#include "aft_sieve/simulation.hpp"
#include "aft_sieve/variance.hpp"

namespace aft {

inline constexpr std::string_view kVersion = "1.0.0";

enum class TimeTransform { identity, ln, log10 };

TimeTransform time_transform_from_string(std::string_view s);
const char* to_string(TimeTransform t);

struct InputTable {
  std::string time_column = "time";
  std::string status_column = "status";
  std::vector<std::string> covariate_names;
  TimeTransform transform = TimeTransform::identity;
  Dataset data;
};

struct CsvOptions {
  std::string time_column = "time";
  std::string status_column = "status";
  /// Empty selects every column other than time and status.
  std::vector<std::string> covariates;
  TimeTransform transform = TimeTransform::identity;
};

/// Header row required, comma delimiter. Errors name the offending row (1-based,
/// counting the header as row 1) and column.
InputTable read_csv(std::istream& in, const CsvOptions& options = {});
InputTable read_csv_file(const std::string& path, const CsvOptions& options = {});

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// time,status,x1..xd with exact round-trip formatting.
void write_dataset_csv(std::ostream& out, const Dataset& data, const std::vector<std::string>& names);

struct FitReport {
  std::vector<std::string> covariate_names;
  FitResult fit;
  VarianceReport variance;
  int n = 0;
  int n_events = 0;
};

FitReport make_fit_report(const Dataset& data, const FitResult& fit, std::vector<std::string> names);

/// beta-hat, SEE1, SEE2, Wald 95% intervals, diagnostics and the log-hazard
/// on a 200-point grid over [a, b].
nlohmann::ordered_json fit_report_json(const FitReport& report);
void write_fit_report_csv(std::ostream& out, const FitReport& report);

nlohmann::ordered_json summary_json(const SimulationSummary& summary);
/// One row per slope with columns param,est,bias,SE,SEE1,CP1,SEE2,CP2,sigma_star.
void write_summary_csv(std::ostream& out, const SimulationSummary& summary);

}  // namespace aft
