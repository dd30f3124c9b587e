#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "trirobust/cli.hpp"
#include "trirobust/csv.hpp"
#include "trirobust/error.hpp"
#include "trirobust/estimators.hpp"
#include "trirobust/format.hpp"
#include "trirobust/simgen.hpp"

using namespace trirobust;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("trirobust_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

csv::Table parse_text(const std::string& text) {
  std::istringstream in(text);
  return csv::parse(in);
}

cli::RunConfig estimate_config(const std::string& input, const std::string& output) {
  cli::RunConfig c;
  c.command = "estimate";
  c.input = input;
  c.output = output;
  return c;
}

}  // namespace

TEST_CASE("csv parsing: quotes, CRLF, BOM, blank lines") {
  const csv::Table t = parse_text("\xEF\xBB\xBFx,\"na,me\",y\r\n1,\"a \"\"q\"\"\",2\r\n\r\n3,\"multi\nline\",\n");
  CHECK(t.header == std::vector<std::string>{"x", "na,me", "y"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "a \"q\"");
  CHECK(t.rows[1][1] == "multi\nline");
  CHECK(t.rows[1][2].empty());
  CHECK(*t.column("y") == 2);
  CHECK_FALSE(t.column("z"));
}

TEST_CASE("csv parsing errors") {
  try {
    parse_text("a,b\n1,2\n3\n");
    FAIL("expected ragged row error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(*e.row() == 2);
  }
  CHECK_THROWS_AS(parse_text("a,b\n\"1,2\n"), Error);
  CHECK_THROWS_AS(parse_text(""), Error);
  CHECK_THROWS_AS(parse_text("a,b\n1\"x\",2\n"), Error);
}

TEST_CASE("csv escaping round trip") {
  const std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", "line\nbreak", ""};
  std::ostringstream out;
  csv::write_row(out, {"a", "b", "c", "d", "e"});
  csv::write_row(out, fields);
  const csv::Table t = parse_text(out.str());
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0] == fields);
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a\"b") == "\"a\"\"b\"");
}

TEST_CASE("number formatting round trips") {
  for (double v : {0.1, -2.5e-300, 1.0 / 3.0, 123456789.125, 0.0, std::numeric_limits<double>::max()}) {
    CHECK(*parse_number(format_number(v)) == v);
  }
  CHECK(format_number(std::nan("")) == "NaN");
  CHECK(format_number(-INFINITY) == "-Inf");
  CHECK(format_number(2.0) == "2");
  CHECK(*parse_number(" +1.5 ") == 1.5);
  CHECK_FALSE(parse_number("1.5x"));
  CHECK_FALSE(parse_number(""));
}

TEST_CASE("csv to dataset") {
  const csv::Table t = parse_text("x1,y,x2\n1,2.5,0\n2,NA,1\n3,,2\n4,1,3\n");
  const Dataset d = csv::to_dataset(t, "y", {});
  CHECK(d.covariate_names == std::vector<std::string>{"x1", "x2"});
  CHECK(d.delta == std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(*d.outcome[3] == 1.0);

  try {
    csv::to_dataset(t, "y", {"x1", "x9"});
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingColumn);
    CHECK(std::string(e.what()).find("x9") != std::string::npos);
  }
  try {
    csv::to_dataset(parse_text("x1,y\n1,2\nabc,3\n"), "y", {});
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(*e.row() == 2);
    CHECK(*e.column() == 1);
  }
  CHECK_THROWS_AS(csv::to_dataset(parse_text("x1,y\n1,oops\n"), "y", {}), Error);
}

TEST_CASE("estimate on fully observed data returns the mean for every estimator") {
  TempDir tmp;
  write_text(tmp.file("in.csv"), "x1,y\n0.1,2\n-0.4,4\n1.2,6\n0.7,3\n-1.1,5\n");
  std::ostringstream log, err;
  const int code = cli::run(estimate_config(tmp.file("in.csv"), tmp.file("out.csv")), log, err);
  CHECK(code == cli::kSuccess);
  const csv::Table out = csv::read_file(tmp.file("out.csv"));
  CHECK(out.rows.size() == default_roster().size());
  for (const auto& row : out.rows) {
    CAPTURE(row[0]);
    CHECK(*parse_number(row[1]) == doctest::Approx(4.0));
    CHECK(row[6] == "1");
  }
  CHECK(fs::exists(tmp.file("out.csv.meta")));
  CHECK(read_text(tmp.file("out.csv.meta")).find("command=estimate") != std::string::npos);
}

TEST_CASE("configuration and IO errors map to exit codes and leave no output") {
  TempDir tmp;
  write_text(tmp.file("in.csv"), "x1,y\n0.1,2\n-0.4,\n1.2,6\n");
  std::ostringstream log, err;

  cli::RunConfig c = estimate_config(tmp.file("in.csv"), tmp.file("out.csv"));
  c.covariates = {"x7"};
  CHECK(cli::run(c, log, err) == cli::kConfig);
  CHECK_FALSE(fs::exists(tmp.file("out.csv")));
  CHECK_FALSE(fs::exists(tmp.file("out.csv.partial")));

  c = estimate_config(tmp.file("missing.csv"), tmp.file("out.csv"));
  CHECK(cli::run(c, log, err) == cli::kIo);
  CHECK_FALSE(fs::exists(tmp.file("out.csv")));

  c = estimate_config(tmp.file("in.csv"), tmp.file("no_such_dir/out.csv"));
  CHECK(cli::run(c, log, err) == cli::kIo);

  c = estimate_config(tmp.file("in.csv"), tmp.file("out.csv"));
  c.estimators = {"XYZ"};
  CHECK(cli::run(c, log, err) == cli::kConfig);
  c.estimators = {};
  c.folds = 1;
  CHECK(cli::run(c, log, err) == cli::kConfig);
  CHECK(err.str().find("error:") != std::string::npos);
}

TEST_CASE("estimate reports solver failures with exit code 4") {
  TempDir tmp;
  // Respondents all have x1 > 0, the population mean of x1 is far below: the
  // balancing weights cannot exist.
  write_text(tmp.file("in.csv"), "x1,y\n1,1\n2,2\n3,3\n1.5,1\n2.5,2\n-20,\n-20,\n-20,\n0.5,1\n-20,\n");
  cli::RunConfig c = estimate_config(tmp.file("in.csv"), tmp.file("out.csv"));
  c.estimators = {"CC", "HM"};
  c.propensity = {"1"};
  std::ostringstream log, err;
  CHECK(cli::run(c, log, err) == cli::kNonConvergence);
  const csv::Table out = csv::read_file(tmp.file("out.csv"));
  REQUIRE(out.rows.size() == 2);
  CHECK(out.rows[0][6] == "1");
  CHECK(out.rows[1][6] == "0");
  CHECK(out.rows[1][7].find("error=Infeasible") != std::string::npos);
}

TEST_CASE("cv-gamma with a single grid value selects it") {
  TempDir tmp;
  const ScenarioSpec s = resolve_intercept(ScenarioSpec{}, 100000);
  const Dataset d = generate(s);
  {
    std::ofstream out(tmp.file("in.csv"));
    csv::write_row(out, {"x1", "x2", "y"});
    for (std::size_t i = 0; i < d.n(); ++i) {
      csv::write_row(out, {format_number(d.covariates(static_cast<Eigen::Index>(i), 0)),
                           format_number(d.covariates(static_cast<Eigen::Index>(i), 1)),
                           d.outcome[i] ? format_number(*d.outcome[i]) : "NA"});
    }
  }
  cli::RunConfig c;
  c.command = "cv-gamma";
  c.input = tmp.file("in.csv");
  c.output = tmp.file("cv.csv");
  c.gamma_grid = {0.3};
  std::ostringstream log, err;
  CHECK(cli::run(c, log, err) == cli::kSuccess);
  const csv::Table out = csv::read_file(tmp.file("cv.csv"));
  REQUIRE(out.rows.size() == 1);
  CHECK(out.rows[0][0] == "0.3");
  CHECK(out.rows[0][3] == "5");
  CHECK(out.rows[0][4] == "1");
}

TEST_CASE("simulate writes replications, summary and metadata") {
  TempDir tmp;
  cli::RunConfig c;
  c.command = "simulate";
  c.scenario = "OM1PM2";
  c.n = 200;
  c.reps = 1;
  c.output = tmp.file("sim.csv");
  c.estimators = {"CC", "APS"};
  std::ostringstream log, err;
  CHECK(cli::run(c, log, err) == cli::kSuccess);
  const csv::Table reps = csv::read_file(tmp.file("sim.csv"));
  CHECK(reps.header == std::vector<std::string>{"rep", "estimator", "estimate", "converged"});
  CHECK(reps.rows.size() == 2);
  const csv::Table summary = csv::read_file(tmp.file("sim_summary.csv"));
  CHECK(summary.rows.size() == 2);
  CHECK(summary.rows[1][5] == "2");
  const std::string meta = read_text(tmp.file("sim.csv.meta"));
  CHECK(meta.find("scenario=OM1PM2") != std::string::npos);
  CHECK(meta.find("seed=1") != std::string::npos);

  c.scenario = "OM9PM1";
  CHECK(cli::run(c, log, err) == cli::kConfig);
}

TEST_CASE("external table scenario: cross-validated robust estimate covers the table mean") {
  ScenarioSpec s;
  s.outcome = OutcomeModel::External;
  s.response = ResponseModel::PM3;
  s.seed = 4;
  s.table = std::make_shared<ExternalTable>(api_like_table(2000, 4));
  s = resolve_intercept(s);
  const Dataset d = generate(s);
  const BasisMatrix b = build_basis(d, BasisSpec::linear(d));
  const PropensityFit fit = fit_logistic_mle(d, default_design(d));
  EstimationOptions opts;
  opts.cv_grid = {0.1, 0.5, 1.0};
  const EstimateReport r = estimate_aps_gamma(d, b, fit, std::nullopt, opts);
  REQUIRE(r.variance);
  REQUIRE(r.gamma_used);
  CHECK(std::abs(r.theta - truth_theta(s).value) <= 2.0 * std::sqrt(*r.variance));
}
