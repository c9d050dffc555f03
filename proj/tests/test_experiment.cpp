#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "amlmc/experiment.hpp"

using namespace amlmc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

template <class Row>
std::string to_csv(const char* header, const std::vector<Row>& rows) {
  std::ostringstream os;
  write_csv(os, header, rows);
  return os.str();
}

std::vector<LevelRow> geometric_levels(double mean_ratio, double var_ratio, int levels, std::size_t rep = 0) {
  std::vector<LevelRow> rows;
  for (int l = 0; l < levels; ++l)
    rows.push_back({0.1, rep, l, 1000, std::pow(mean_ratio, l), std::pow(var_ratio, l), 100});
  return rows;
}

}  // namespace

TEST_CASE("CSV headers are fixed") {
  CHECK(first_line(to_csv(kEstimatorsHeader, std::vector<EstimatorRow>{})) ==
        "problem,algorithm,p,tol,repetition,seed,estimate,abs_error,within_tol,final_level,total_work,wall_seconds");
  CHECK(first_line(to_csv(kLevelsHeader, std::vector<LevelRow>{})) == "tol,repetition,level,M,mean,variance,work");
  CHECK(first_line(to_csv(kConvergenceHeader, std::vector<ConvergenceRow>{})) == "N,algorithm,mse,stderr");
  std::ostringstream os;
  write_rates_csv(os, {1.0, 2.0, 5});
  CHECK(os.str() == "alpha_hat,beta_hat\n1,2\n");
}

TEST_CASE("17 significant digits round-trip doubles") {
  GaussianStream s({1, 0, 0, StreamPurpose::Auxiliary});
  for (int i = 0; i < 1000; ++i) {
    const double x = std::exp(20 * s.normal()) * (s.uniform() < 0.5 ? -1 : 1);
    REQUIRE(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("single repetition gbm sweep gives one row checked against e") {
  ExperimentSpec spec;
  spec.problem = "gbm";
  spec.tols = {0.1};
  spec.reps = 1;
  spec.seed = 42;
  const auto out = run_sweep(spec);
  REQUIRE(out.estimators.size() == 1);
  const auto& row = out.estimators[0];
  CHECK(row.problem == "gbm");
  CHECK(row.algorithm == "adaptive");
  CHECK_FALSE(row.p.has_value());
  CHECK(row.seed == 42);
  CHECK(row.within_tol == (std::abs(row.estimate - std::numbers::e) <= 0.1));
  CHECK(out.levels.size() == static_cast<std::size_t>(row.final_level) + 1);

  std::istringstream is(to_csv(kEstimatorsHeader, out.estimators));
  const auto back = read_estimators_csv(is);
  REQUIRE(back.size() == 1);
  CHECK(back[0].abs_error == std::abs(back[0].estimate - Gbm{}.reference_mean()));
  CHECK(back[0].estimate == row.estimate);
  CHECK(back[0].total_work == row.total_work);
}

TEST_CASE("sweep seeds are base + repetition at every tolerance") {
  ExperimentSpec spec;
  spec.algorithm = Algorithm::Uniform;
  spec.tols = {0.2, 0.15};
  spec.reps = 3;
  spec.seed = 10;
  const auto out = run_sweep(spec);
  REQUIRE(out.estimators.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(out.estimators[i].repetition == i % 3);
    CHECK(out.estimators[i].seed == 10 + i % 3);
  }
  std::size_t level_rows = 0;
  for (const auto& r : out.estimators) level_rows += static_cast<std::size_t>(r.final_level) + 1;
  CHECK(out.levels.size() == level_rows);

  std::istringstream is(to_csv(kLevelsHeader, out.levels));
  const auto back = read_levels_csv(is);
  REQUIRE(back.size() == out.levels.size());
  CHECK(back[3].mean == out.levels[3].mean);
  CHECK(back[3].variance == out.levels[3].variance);
}

TEST_CASE("sweep specs are validated") {
  ExperimentSpec spec;
  spec.tols = {0.05, 0.1};
  CHECK_THROWS_AS(run_sweep(spec), UsageError);
  spec.tols = {0.1, -0.1};
  CHECK_THROWS_AS(run_sweep(spec), UsageError);
  spec.tols = {0.1};
  spec.reps = 0;
  CHECK_THROWS_AS(run_sweep(spec), UsageError);
  spec.reps = 1;
  spec.problem = "drift_blowup";
  CHECK_THROWS_AS(run_sweep(spec), UsageError);
}

TEST_CASE("aborted estimator runs become failed rows") {
  ExperimentSpec spec;
  spec.problem = "drift_blowup";
  spec.p = 0.75;
  spec.algorithm = Algorithm::Uniform;
  spec.tols = {0.01};
  spec.max_level = 4;
  const auto out = run_sweep(spec);
  REQUIRE(out.estimators.size() == 1);
  CHECK(std::isnan(out.estimators[0].estimate));
  CHECK(out.estimators[0].final_level == -1);
  CHECK_FALSE(out.estimators[0].within_tol);
  CHECK(out.levels.empty());
  CHECK(*out.estimators[0].p == 0.75);
  const std::string csv = to_csv(kEstimatorsHeader, out.estimators);
  CHECK(csv.find(",nan,nan,0,-1,") != std::string::npos);
}

TEST_CASE("sweep CSVs are identical for 1 and 8 worker threads") {
  ExperimentSpec spec;
  spec.problem = "drift_blowup";
  spec.p = 2.0 / 3.0;
  spec.tols = {0.2, 0.1};
  spec.reps = 2;
  spec.seed = 5;
  auto strip_wall = [](std::vector<EstimatorRow> rows) {
    for (auto& r : rows) r.wall_seconds = 0;
    return to_csv(kEstimatorsHeader, rows);
  };
  const auto one = run_sweep(spec);
  spec.threads = 8;
  const auto eight = run_sweep(spec);
  CHECK(strip_wall(one.estimators) == strip_wall(eight.estimators));
  CHECK(to_csv(kLevelsHeader, one.levels) == to_csv(kLevelsHeader, eight.levels));
}

TEST_CASE("rate fit on exact geometric data") {
  const auto fit = fit_rates(geometric_levels(0.5, 0.25, 7));
  CHECK_THAT(fit.alpha_hat, WithinAbs(1.0, 1e-12));
  CHECK_THAT(fit.beta_hat, WithinAbs(2.0, 1e-12));
  CHECK(fit.levels_used == 7);

  auto rows = geometric_levels(0.5, 0.25, 7);
  rows[2].mean = 1e3;  // outside the fitted window below
  const auto window = fit_rates(rows, 3, 6);
  CHECK(window.levels_used == 4);
  CHECK_THAT(window.alpha_hat, WithinAbs(1.0, 1e-12));
}

TEST_CASE("rate fit pools repetitions and skips thin levels") {
  auto rows = geometric_levels(0.5, 0.25, 6, 0);
  const auto more = geometric_levels(0.5, 0.25, 6, 1);
  rows.insert(rows.end(), more.begin(), more.end());
  rows.push_back({0.1, 0, 6, 1, 123.0, 0.0, 10});
  const auto fit = fit_rates(rows);
  CHECK(fit.levels_used == 6);
  CHECK_THAT(fit.alpha_hat, WithinAbs(1.0, 1e-9));
  // Pooling two equal-mean halves leaves the variance essentially unchanged.
  CHECK_THAT(fit.beta_hat, WithinAbs(2.0, 1e-3));
}

TEST_CASE("rate fit needs four levels") {
  CHECK_THROWS_AS(fit_rates(geometric_levels(0.5, 0.25, 3)), UsageError);
  CHECK_THROWS_AS(fit_rates(geometric_levels(0.5, 0.25, 7), 5, 9), UsageError);
}

TEST_CASE("CSV readers reject malformed input") {
  std::istringstream bad_header("tol,rep,level,M,mean,var,work\n");
  CHECK_THROWS(read_levels_csv(bad_header));
  std::istringstream short_row("tol,repetition,level,M,mean,variance,work\n0.1,0,0\n");
  CHECK_THROWS(read_levels_csv(short_row));
  std::istringstream junk("tol,repetition,level,M,mean,variance,work\n0.1,0,0,10,abc,1,4\n");
  CHECK_THROWS(read_levels_csv(junk));
}

TEST_CASE("convergence study matches a direct recomputation") {
  ExperimentSpec spec;
  spec.problem = "gbm";
  spec.n_steps = {8, 16};
  spec.samples = 500;
  spec.seed = 3;
  const auto rows = run_convergence(spec);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].algorithm == "uniform");
  CHECK(rows[1].algorithm == "adaptive");

  const Gbm gbm;
  std::vector<double> sq;
  for (std::uint64_t i = 0; i < 500; ++i) {
    auto streams = SampleStreams::make(3, 8, i);
    const auto path = sample_initial_path<1>(Mesh::uniform(8, 1.0), streams.increments);
    const double e = euler_maruyama(gbm, path, {}).terminal()[0] - gbm.exact_terminal_value(path.terminal());
    sq.push_back(e * e);
  }
  double mean = 0;
  for (double v : sq) mean += v;
  mean /= 500;
  double var = 0;
  for (double v : sq) var += (v - mean) * (v - mean);
  var /= 499;
  CHECK_THAT(rows[0].mse, WithinRel(mean, 1e-12));
  CHECK_THAT(rows[0].stderr_, WithinRel(std::sqrt(var / 500), 1e-10));
}

TEST_CASE("convergence budget for N target steps") {
  const auto b = convergence_budget(64, 1.0);
  CHECK(b.n_refine == 32);
  CHECK(b.dt_max == 1.0 / 32);
  CHECK(b.n_tilde == 5);
  CHECK(convergence_budget(2, 1.0).n_tilde == 1);
}

TEST_CASE("convergence study needs a closed-form solution") {
  ExperimentSpec spec;
  spec.problem = "levy_area";
  spec.n_steps = {16};
  spec.samples = 10;
  CHECK_THROWS_AS(run_convergence(spec), UsageError);
  spec.problem = "gbm";
  spec.n_steps = {15};
  CHECK_THROWS_AS(run_convergence(spec), UsageError);
}
