#include "aft_sieve/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace aft {

TimeTransform time_transform_from_string(std::string_view s) {
  if (s == "identity") return TimeTransform::identity;
  if (s == "ln") return TimeTransform::ln;
  if (s == "log10") return TimeTransform::log10;
  throw InvalidArgument("unknown transform '" + std::string(s) + "' (expected identity, ln or log10)");
}

const char* to_string(TimeTransform t) {
  switch (t) {
    case TimeTransform::identity: return "identity";
    case TimeTransform::ln: return "ln";
    case TimeTransform::log10: return "log10";
  }
  return "identity";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t row, std::string_view column) {
  const auto where = [&] { return " at row " + std::to_string(row) + ", column '" + std::string(column) + "'"; };
  if (field.empty()) throw DataError("csv: missing value" + where());
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw DataError("csv: cannot parse '" + std::string(field) + "' as a number" + where());
  }
  return v;
}

}  // namespace

InputTable read_csv(std::istream& in, const CsvOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty input, header row required");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header_views = split(line);
  std::vector<std::string> header(header_views.begin(), header_views.end());

  auto find_column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("csv: header has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t time_col = find_column(options.time_column);
  const std::size_t status_col = find_column(options.status_column);
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  if (options.covariates.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (k != time_col && k != status_col) {
        cov_cols.push_back(k);
        cov_names.push_back(header[k]);
      }
    }
  } else {
    for (const auto& name : options.covariates) {
      cov_cols.push_back(find_column(name));
      cov_names.push_back(name);
    }
  }
  if (cov_cols.empty()) throw DataError("csv: need at least one covariate column");

  std::vector<double> times;
  std::vector<int> status;
  std::vector<double> covs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw DataError("csv: row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    double t = parse_number(fields[time_col], row, header[time_col]);
    switch (options.transform) {
      case TimeTransform::identity: break;
      case TimeTransform::ln:
      case TimeTransform::log10:
        if (!(t > 0.0)) {
          throw DataError("csv: non-positive time at row " + std::to_string(row) + " cannot be log-transformed");
        }
        t = options.transform == TimeTransform::ln ? std::log(t) : std::log10(t);
        break;
    }
    const double s = parse_number(fields[status_col], row, header[status_col]);
    if (s != 0.0 && s != 1.0) {
      throw DataError("csv: status must be 0 or 1 at row " + std::to_string(row) + ", got '" +
                      std::string(fields[status_col]) + "'");
    }
    times.push_back(t);
    status.push_back(static_cast<int>(s));
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      covs.push_back(parse_number(fields[cov_cols[k]], row, header[cov_cols[k]]));
    }
  }
  if (times.empty()) throw DataError("csv: no data rows");

  const auto n = static_cast<Eigen::Index>(times.size());
  const auto d = static_cast<Eigen::Index>(cov_cols.size());
  VectorXd y = Eigen::Map<VectorXd>(times.data(), n);
  Eigen::VectorXi delta = Eigen::Map<Eigen::VectorXi>(status.data(), n);
  MatrixXd x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(covs.data(), n, d);

  InputTable table;
  table.time_column = options.time_column;
  table.status_column = options.status_column;
  table.covariate_names = std::move(cov_names);
  table.transform = options.transform;
  table.data = Dataset(std::move(y), std::move(delta), std::move(x));
  return table;
}

InputTable read_csv_file(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open '" + path + "'");
  return read_csv(in, options);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& out, const Dataset& data, const std::vector<std::string>& names) {
  out << "time,status";
  for (int k = 0; k < data.dim(); ++k) {
    out << ',' << (static_cast<std::size_t>(k) < names.size() ? names[static_cast<std::size_t>(k)]
                                                              : "x" + std::to_string(k + 1));
  }
  out << '\n';
  for (int i = 0; i < data.size(); ++i) {
    out << format_double(data.y()(i)) << ',' << data.delta()(i);
    for (int k = 0; k < data.dim(); ++k) out << ',' << format_double(data.x()(i, k));
    out << '\n';
  }
}

FitReport make_fit_report(const Dataset& data, const FitResult& fit, std::vector<std::string> names) {
  return FitReport{std::move(names), fit, compute_variance(data, fit), data.size(), data.n_events()};
}

namespace {

constexpr double kZ95 = 1.959963984540054;

nlohmann::ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string covariate_name(const FitReport& r, int k) {
  return static_cast<std::size_t>(k) < r.covariate_names.size() ? r.covariate_names[static_cast<std::size_t>(k)]
                                                                 : "x" + std::to_string(k + 1);
}

}  // namespace

nlohmann::ordered_json fit_report_json(const FitReport& r) {
  using json = nlohmann::ordered_json;
  const auto& model = r.fit.model;
  const auto& basis = model.log_hazard.basis();
  json j;
  j["n"] = r.n;
  j["n_events"] = r.n_events;
  j["converged"] = r.fit.converged;
  j["n_iter"] = r.fit.n_iter;
  j["loglik"] = r.fit.loglik;
  j["grad_norm"] = r.fit.grad_norm;
  j["extrapolation_fraction"] = r.fit.extrapolation_fraction;
  j["extrapolation_flag"] = r.fit.extrapolation_flag;
  json held = json::array();
  for (int idx : r.fit.at_bound) held.push_back(idx - static_cast<int>(model.beta.size()));
  j["gamma_at_bound"] = held;
  j["warnings"] = r.fit.warnings;

  json coefs = json::array();
  for (int k = 0; k < model.beta.size(); ++k) {
    const double est = model.beta(k);
    const double s1 = r.variance.see1(k);
    const double s2 = r.variance.see2(k);
    json c;
    c["name"] = covariate_name(r, k);
    c["estimate"] = est;
    c["see1"] = number_or_null(s1);
    c["see2"] = number_or_null(s2);
    c["ci1"] = {number_or_null(est - kZ95 * s1), number_or_null(est + kZ95 * s1)};
    c["ci2"] = {number_or_null(est - kZ95 * s2), number_or_null(est + kZ95 * s2)};
    coefs.push_back(c);
  }
  j["coefficients"] = coefs;

  json var;
  var["condition_efficient"] = number_or_null(r.variance.condition_efficient);
  var["condition_observed"] = number_or_null(r.variance.condition_observed);
  var["efficient_singular"] = r.variance.efficient_singular;
  var["observed_singular"] = r.variance.observed_singular;
  var["efficient_score_mean"] = r.variance.efficient_score_mean;
  j["variance"] = var;

  json spline;
  spline["order"] = basis.order();
  spline["domain"] = {basis.lower(), basis.upper()};
  spline["interior_knots"] = basis.knots().interior();
  const auto& gamma = model.log_hazard.coefficients();
  spline["gamma"] = std::vector<double>(gamma.data(), gamma.data() + gamma.size());
  j["log_hazard_spline"] = spline;

  json curve;
  std::vector<double> ts, gs, hs;
  const int grid = 200;
  for (int k = 0; k < grid; ++k) {
    const double t = basis.lower() + (basis.upper() - basis.lower()) * k / (grid - 1);
    const double g = eval_spline(model.log_hazard, t);
    ts.push_back(t);
    gs.push_back(g);
    hs.push_back(std::exp(g));
  }
  curve["t"] = ts;
  curve["log_hazard"] = gs;
  curve["hazard"] = hs;
  j["hazard_curve"] = curve;
  return j;
}

void write_fit_report_csv(std::ostream& out, const FitReport& r) {
  out << "name,estimate,see1,see2,ci1_lower,ci1_upper,ci2_lower,ci2_upper\n";
  for (int k = 0; k < r.fit.model.beta.size(); ++k) {
    const double est = r.fit.model.beta(k);
    const double s1 = r.variance.see1(k);
    const double s2 = r.variance.see2(k);
    out << covariate_name(r, k) << ',' << format_double(est) << ',' << format_double(s1) << ','
        << format_double(s2) << ',' << format_double(est - kZ95 * s1) << ',' << format_double(est + kZ95 * s1)
        << ',' << format_double(est - kZ95 * s2) << ',' << format_double(est + kZ95 * s2) << '\n';
  }
}

nlohmann::ordered_json summary_json(const SimulationSummary& s) {
  using json = nlohmann::ordered_json;
  json j;
  j["error"] = s.error_key;
  j["error_name"] = s.error_name;
  j["n"] = s.n;
  j["reps"] = s.n_reps;
  j["n_failed"] = s.n_failed;
  j["seed"] = s.seed;
  j["interior_knots"] = s.n_interior_knots;
  j["censor_c"] = number_or_null(s.censor_c);
  j["censor_rate_mean"] = s.censor_rate_mean;
  j["censor_rate_min"] = s.censor_rate_min;
  j["censor_rate_max"] = s.censor_rate_max;
  json rows = json::array();
  for (const auto& p : s.params) {
    json r;
    r["param"] = p.name;
    r["est"] = p.est;
    r["bias"] = p.bias;
    r["SE"] = p.se;
    r["SEE1"] = p.see1;
    r["CP1"] = p.cp1;
    r["SEE2"] = p.see2;
    r["CP2"] = p.cp2;
    r["sigma_star"] = p.sigma_star;
    r["below_bound_flag"] = p.below_bound;
    rows.push_back(r);
  }
  j["table"] = rows;
  return j;
}

void write_summary_csv(std::ostream& out, const SimulationSummary& s) {
  out << "param,est,bias,SE,SEE1,CP1,SEE2,CP2,sigma_star\n";
  for (const auto& p : s.params) {
    out << p.name << ',' << format_double(p.est) << ',' << format_double(p.bias) << ',' << format_double(p.se)
        << ',' << format_double(p.see1) << ',' << format_double(p.cp1) << ',' << format_double(p.see2) << ','
        << format_double(p.cp2) << ',' << format_double(p.sigma_star) << '\n';
  }
}

}  // namespace aft
