#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "aft_sieve/io.hpp"
#include "test_support.hpp"

using namespace aft;

namespace {

std::string error_of(const std::string& csv, const CsvOptions& options = {}) {
  std::istringstream in(csv);
  try {
    read_csv(in, options);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("reading a survival table") {
  std::istringstream in("time, status,age,dose\n2.5,1,40,1\n3.0,0,55,0\n\n1.5,1,61,+1\n");
  const InputTable t = read_csv(in);
  REQUIRE(t.data.size() == 3);
  CHECK(t.covariate_names == std::vector<std::string>{"age", "dose"});
  CHECK(t.data.y()(2) == 1.5);
  CHECK(t.data.delta()(1) == 0);
  CHECK(t.data.x()(2, 0) == 61.0);
  CHECK(t.data.x()(2, 1) == 1.0);

  SUBCASE("column selection and log transform") {
    CsvOptions opt;
    opt.covariates = {"dose"};
    opt.transform = TimeTransform::ln;
    std::istringstream again("time,status,age,dose\n2.5,1,40,1\n3.0,0,55,0\n");
    const InputTable s = read_csv(again, opt);
    CHECK(s.data.dim() == 1);
    CHECK(s.data.y()(0) == doctest::Approx(std::log(2.5)).epsilon(1e-15));
    opt.transform = TimeTransform::log10;
    std::istringstream third("time,status,age,dose\n100,1,40,1\n");
    CHECK(read_csv(third, opt).data.y()(0) == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("malformed tables name the offending row") {
  CHECK(error_of("time,status,x\n1,1,0\n2,2,1\n").find("row 3") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1,0\n2,2,1\n").find("status") != std::string::npos);
  const std::string missing = error_of("time,status,x\n1,1,0\n2,0,\n");
  CHECK(missing.find("missing value") != std::string::npos);
  CHECK(missing.find("row 3") != std::string::npos);
  CHECK(missing.find("'x'") != std::string::npos);
  CsvOptions ln;
  ln.transform = TimeTransform::ln;
  CHECK(error_of("time,status,x\n1,1,0\n0,1,1\n", ln).find("non-positive time at row 3") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1,abc\n").find("cannot parse 'abc'") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1\n").find("row 2 has 2 fields") != std::string::npos);
  CHECK(error_of("time,x\n1,1\n").find("no column 'status'") != std::string::npos);
  CHECK(error_of("time,status\n1,1\n").find("at least one covariate") != std::string::npos);
  CHECK(error_of("time,status,x\n").find("no data rows") != std::string::npos);
  CHECK(error_of("").find("header row required") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1,inf\n").find("cannot parse") != std::string::npos);
  CHECK_THROWS_AS(time_transform_from_string("sqrt"), InvalidArgument);
}

TEST_CASE("number formatting round-trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int k = 0; k < 10000; ++k) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.0) == "-2");
}

TEST_CASE("a dataset written and read back fits identically") {
  const Dataset data = testing::random_dataset(60, 2, 7);
  std::ostringstream out;
  write_dataset_csv(out, data, {"u", "v"});
  std::istringstream in(out.str());
  const InputTable back = read_csv(in);
  CHECK(back.covariate_names == std::vector<std::string>{"u", "v"});
  CHECK(back.data.y() == data.y());
  CHECK(back.data.delta() == data.delta());
  CHECK(back.data.x() == data.x());
  const FitResult a = fit(data, FitConfig{});
  const FitResult b = fit(back.data, FitConfig{});
  CHECK(a.model.beta == b.model.beta);
  CHECK(a.loglik == b.loglik);
}

TEST_CASE("fit report contents") {
  const Dataset data = testing::random_dataset(80, 2, 9);
  const FitReport r = make_fit_report(data, fit(data, FitConfig{}), {"u", "v"});
  const auto j = fit_report_json(r);
  CHECK(j["n"] == 80);
  CHECK(j["coefficients"].size() == 2);
  CHECK(j["coefficients"][0]["name"] == "u");
  const double est = j["coefficients"][1]["estimate"];
  const double see2 = j["coefficients"][1]["see2"];
  CHECK(est == r.fit.model.beta(1));
  CHECK(j["coefficients"][1]["ci2"][1].get<double>() == doctest::Approx(est + 1.959963984540054 * see2));
  CHECK(j["hazard_curve"]["t"].size() == 200);
  CHECK(j["gamma_at_bound"].empty());
  const double g0 = j["hazard_curve"]["log_hazard"][0];
  CHECK(std::exp(g0) == doctest::Approx(j["hazard_curve"]["hazard"][0].get<double>()));

  std::ostringstream csv;
  write_fit_report_csv(csv, r);
  const std::string text = csv.str();
  CHECK(text.rfind("name,estimate,see1,see2,", 0) == 0);
  CHECK(text.find("\nv,") != std::string::npos);
}

TEST_CASE("summary table columns") {
  SimulationSummary s;
  s.error_key = "a";
  s.censor_c = std::numeric_limits<double>::infinity();
  ParameterSummary p;
  p.name = "beta1";
  p.se = 0.1;
  s.params.push_back(p);
  std::ostringstream csv;
  write_summary_csv(csv, s);
  CHECK(csv.str().rfind("param,est,bias,SE,SEE1,CP1,SEE2,CP2,sigma_star\nbeta1,", 0) == 0);
  const auto j = summary_json(s);
  CHECK(j["censor_c"].is_null());
  CHECK(j["table"][0]["SE"] == 0.1);
}
