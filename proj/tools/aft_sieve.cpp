// aft-sieve: sieve maximum likelihood for the censored linear (AFT) model.
//
//   aft-sieve fit <csv> [flags]     fit a dataset, report beta-hat, SEE1/SEE2 and the log-hazard curve
//   aft-sieve simulate [flags]      Monte Carlo study under one of the error laws a..f
//   aft-sieve bound [flags]         semiparametric efficiency bound sigma*
//
// Exit codes: 0 success, 2 usage, 3 data validation, 4 non-convergence, 5 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aft_sieve/io.hpp"

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(aft::ErrorCode code, const std::string& detail) {
  std::cerr << aft::error_code_name(code) << ": " << detail << '\n';
  std::exit(static_cast<int>(code));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(aft::ErrorCode::usage, "cannot write '" + path + "'");
  out << text;
}

json fit_config_json(const aft::FitConfig& c) {
  json j;
  j["order"] = c.order;
  j["interior_knots"] = c.n_interior_knots;
  j["placement"] = c.placement == aft::KnotPlacement::equal_spaced ? "equal" : "quantile";
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["step_halving_max"] = c.step_halving_max;
  j["ridge_eps"] = c.ridge_eps;
  j["quad_points"] = c.quad_points;
  j["gamma_bound"] = c.gamma_bound;
  j["domain_margin"] = c.domain_margin;
  return j;
}

void write_manifest(const std::string& path, const std::string& command, const std::vector<std::string>& argv,
                    json config, double wall_seconds, json diagnostics) {
  json m;
  m["command"] = command;
  m["argv"] = argv;
  m["version"] = std::string(aft::kVersion);
  m["config"] = std::move(config);
  m["wall_time_seconds"] = wall_seconds;
  m["diagnostics"] = std::move(diagnostics);
  write_text(path, m.dump(2) + "\n");
}

std::string strip_extension(const std::string& path) {
  const std::filesystem::path p(path);
  return (p.parent_path() / p.stem()).string();
}

}  // namespace

int main(int argc, char** argv) {
  const auto started = std::chrono::steady_clock::now();
  const std::vector<std::string> args(argv, argv + argc);
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  CLI::App app{"Sieve maximum likelihood for the censored linear regression model"};
  app.require_subcommand(1);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a right-censored dataset from CSV");
  std::string csv_path;
  std::string transform = "identity";
  std::string placement = "equal";
  std::string out_path;
  std::string format = "json";
  aft::CsvOptions csv;
  aft::FitConfig fit_config;
  fit_cmd->add_option("csv", csv_path, "Input CSV with header")->required();
  fit_cmd->add_option("--transform", transform, "Time transform: identity, ln, log10")
      ->check(CLI::IsMember({"identity", "ln", "log10"}));
  fit_cmd->add_option("--time-col", csv.time_column, "Time column name");
  fit_cmd->add_option("--status-col", csv.status_column, "Event indicator column name");
  fit_cmd->add_option("--covariates", csv.covariates, "Covariate columns (default: all others)")->delimiter(',');
  fit_cmd->add_option("--knots", fit_config.n_interior_knots, "Number of interior knots")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--order", fit_config.order, "Spline order (4 = cubic)")->check(CLI::Range(3, 10));
  fit_cmd->add_option("--placement", placement, "Knot placement: equal or quantile")
      ->check(CLI::IsMember({"equal", "quantile"}));
  fit_cmd->add_option("--tol", fit_config.tol, "Convergence tolerance")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-iter", fit_config.max_iter, "Maximum Newton iterations")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--quad-points", fit_config.quad_points, "Gauss-Legendre points per knot span")
      ->check(CLI::Range(1, 64));
  fit_cmd->add_option("--out", out_path, "Output file (default: stdout)");
  fit_cmd->add_option("--format", format, "Output format: json or csv")->check(CLI::IsMember({"json", "csv"}));

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study");
  std::string dist = "a";
  aft::SimDesign design;
  std::string censoring = "log";
  std::string sim_out;
  std::string emit_dir;
  int reps = 500;
  sim_cmd->add_option("--dist", dist, "Error law a..f");
  sim_cmd->add_option("--n", design.n, "Sample size")->check(CLI::Range(10, 1000000));
  sim_cmd->add_option("--reps", reps, "Replications");
  sim_cmd->add_option("--seed", design.seed, "Master seed");
  sim_cmd->add_option("--rate", design.censor_rate_target, "Target censoring rate");
  sim_cmd->add_option("--censoring", censoring, "Uniform censoring scale: log or time")
      ->check(CLI::IsMember({"log", "time"}));
  sim_cmd->add_option("--knots", design.n_interior_knots, "Interior knots (default: 1 below n=500, else 2)");
  sim_cmd->add_option("--threads", design.threads, "Worker threads (default: AFT_SIEVE_THREADS or all cores)");
  sim_cmd->add_option("--out", sim_out, "Output prefix: writes <prefix>.csv, <prefix>.json and a manifest");
  sim_cmd->add_option("--emit-data", emit_dir, "Directory for replication 0's dataset and in-process fit");

  // bound
  auto* bound_cmd = app.add_subcommand("bound", "Efficiency bound sigma* for an error law");
  std::string bound_dist = "a";
  int bound_n = 200;
  double bound_rate = 0.25;
  std::string bound_censoring = "log";
  bound_cmd->add_option("--dist", bound_dist, "Error law a..f");
  bound_cmd->add_option("--n", bound_n, "Sample size")->check(CLI::PositiveNumber);
  bound_cmd->add_option("--rate", bound_rate, "Target censoring rate");
  bound_cmd->add_option("--censoring", bound_censoring, "Uniform censoring scale: log or time")
      ->check(CLI::IsMember({"log", "time"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    fail(aft::ErrorCode::usage, msg);
  }

  try {
    if (*fit_cmd) {
      csv.transform = aft::time_transform_from_string(transform);
      fit_config.placement =
          placement == "equal" ? aft::KnotPlacement::equal_spaced : aft::KnotPlacement::residual_quantiles;
      fit_config.validate();
      const aft::InputTable table = aft::read_csv_file(csv_path, csv);
      const aft::FitResult result = aft::fit(table.data, fit_config);
      const aft::FitReport report = aft::make_fit_report(table.data, result, table.covariate_names);

      std::ostringstream text;
      if (format == "json") {
        text << aft::fit_report_json(report).dump(2) << '\n';
      } else {
        aft::write_fit_report_csv(text, report);
      }
      if (out_path.empty()) {
        std::cout << text.str();
      } else {
        write_text(out_path, text.str());
        if (format == "csv") {
          std::ostringstream curve;
          curve << "t,log_hazard,hazard\n";
          const json j = aft::fit_report_json(report)["hazard_curve"];
          for (std::size_t k = 0; k < j["t"].size(); ++k) {
            curve << aft::format_double(j["t"][k].get<double>()) << ','
                  << aft::format_double(j["log_hazard"][k].get<double>()) << ','
                  << aft::format_double(j["hazard"][k].get<double>()) << '\n';
          }
          write_text(strip_extension(out_path) + "_hazard.csv", curve.str());
        }
        json config = fit_config_json(fit_config);
        config["transform"] = transform;
        config["input"] = csv_path;
        json diag;
        diag["converged"] = result.converged;
        diag["n_iter"] = result.n_iter;
        diag["grad_norm"] = result.grad_norm;
        diag["extrapolation_fraction"] = result.extrapolation_fraction;
        diag["warnings"] = result.warnings;
        write_manifest(out_path + ".manifest.json", "fit", args, config, elapsed(), diag);
      }
      if (!result.converged) {
        fail(aft::ErrorCode::non_convergence,
             "Newton iterations did not converge (grad_norm=" + aft::format_double(result.grad_norm) + ")");
      }
      return 0;
    }

    if (*sim_cmd) {
      if (reps < 1) fail(aft::ErrorCode::usage, "--reps must be a positive integer");
      design.n_reps = reps;
      design.error = aft::ErrorDistribution::from_key(dist);
      design.censoring = aft::censoring_scale_from_string(censoring);
      const aft::SimulationSummary summary = aft::run_study(design);

      std::ostringstream csv_text;
      aft::write_summary_csv(csv_text, summary);
      if (sim_out.empty()) {
        std::cout << csv_text.str();
      } else {
        write_text(sim_out + ".csv", csv_text.str());
        write_text(sim_out + ".json", aft::summary_json(summary).dump(2) + "\n");
        json config;
        config["dist"] = dist;
        config["n"] = design.n;
        config["reps"] = design.n_reps;
        config["seed"] = design.seed;
        config["rate"] = design.censor_rate_target;
        config["censoring"] = censoring;
        config["interior_knots"] = design.interior_knots();
        config["fit"] = fit_config_json(design.fit);
        json diag;
        diag["n_failed"] = summary.n_failed;
        diag["censor_c"] = summary.censor_c;
        diag["censor_rate_mean"] = summary.censor_rate_mean;
        diag["threads"] = aft::resolve_thread_count(design.threads);
        write_manifest(sim_out + ".manifest.json", "simulate", args, config, elapsed(), diag);
      }

      if (!emit_dir.empty()) {
        std::filesystem::create_directories(emit_dir);
        aft::Rng rng = aft::replication_rng(design.seed, 0);
        const aft::Dataset data = aft::gen_dataset(design, summary.censor_c, rng);
        const std::vector<std::string> names{"x1", "x2"};
        std::ostringstream data_text;
        aft::write_dataset_csv(data_text, data, names);
        write_text((std::filesystem::path(emit_dir) / "rep0_data.csv").string(), data_text.str());
        aft::FitConfig config = design.fit;
        config.n_interior_knots = design.interior_knots();
        const aft::FitResult result = aft::fit(data, config);
        const aft::FitReport report = aft::make_fit_report(data, result, names);
        write_text((std::filesystem::path(emit_dir) / "rep0_fit.json").string(),
                   aft::fit_report_json(report).dump(2) + "\n");
      }
      return 0;
    }

    if (*bound_cmd) {
      const aft::ErrorDistribution error = aft::ErrorDistribution::from_key(bound_dist);
      const aft::EfficiencyBound bound =
          aft::efficiency_bound_at_rate(error, bound_n, bound_rate, aft::censoring_scale_from_string(bound_censoring));
      json j;
      j["dist"] = error.key();
      j["error_name"] = error.name();
      j["n"] = bound_n;
      j["censor_rate"] = bound_rate;
      j["censor_c"] = bound.censor_c;
      j["sigma_star"] = {bound.sigma_star(0), bound.sigma_star(1)};
      std::cout << j.dump(2) << '\n';
      return 0;
    }
  } catch (const aft::Error& e) {
    fail(e.code(), e.what());
  } catch (const std::exception& e) {
    fail(aft::ErrorCode::numerical, e.what());
  }
  return 0;
}
