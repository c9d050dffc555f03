// mlmc: tolerance sweeps, single-level convergence studies and rate fits.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "amlmc/amlmc.hpp"

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Splices `key = value` lines of the --config file into the argument list,
// right after the subcommand, skipping keys also given as flags.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::vector<std::string> extra;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string flag = "--" + trim(line.substr(0, eq));
    if (given_on_command_line(args, flag)) continue;
    extra.push_back(flag);
    extra.push_back(trim(line.substr(eq + 1)));
  }
  const auto sub = std::find_if(args.begin() + 1, args.end(),
                                [](const std::string& a) { return a == "run" || a == "convergence" || a == "rates"; });
  const auto pos = sub == args.end() ? args.end() : sub + 1;
  args.insert(pos, extra.begin(), extra.end());
  return args;
}

void write_file(const fs::path& path, const auto& write) {
  auto os = amlmc::open_output(path);
  write(os);
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive and uniform multilevel Monte Carlo for SDEs"};
  app.require_subcommand(1, 1);

  amlmc::ExperimentSpec spec;
  std::string algorithm = "adaptive";
  std::string out_dir = "results";
  std::string config;
  double p = std::numeric_limits<double>::quiet_NaN();
  int min_level = -1, max_level = -1;
  std::uint64_t m_hat = 0;
  double alpha = 0.0;
  std::string rates_in, rates_out;
  int from_level = 0, to_level = std::numeric_limits<int>::max();

  const std::vector<std::string> problems{"gbm", "ito_integral", "levy_area", "wt_cubed", "drift_blowup"};

  auto* run = app.add_subcommand("run", "tolerance sweep of the multilevel estimator");
  run->add_option("--config", config, "key=value file; flags take precedence");
  run->add_option("--problem", spec.problem)->required()->check(CLI::IsMember(problems));
  run->add_option("--algorithm", algorithm)->capture_default_str()->check(CLI::IsMember({"adaptive", "uniform"}));
  run->add_option("--tol", spec.tols, "comma separated, descending")->delimiter(',')->required();
  run->add_option("--reps", spec.reps)->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--delta", spec.delta)->capture_default_str();
  run->add_option("--seed", spec.seed)->capture_default_str();
  run->add_option("--p", p, "blow-up exponent");
  run->add_option("--threads", spec.threads)->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir)->capture_default_str();
  run->add_option("--min-level", min_level, "lowest level the estimator may stop at");
  run->add_option("--max-level", max_level, "level cap");
  run->add_option("--m-hat", m_hat, "initial samples on a new level");
  run->add_option("--alpha", alpha, "weak rate used by the bias test");

  auto* conv = app.add_subcommand("convergence", "single-level MSE against the exact solution");
  conv->add_option("--config", config, "key=value file; flags take precedence");
  conv->add_option("--problem", spec.problem)->required()->check(CLI::IsMember(problems));
  conv->add_option("--n-steps", spec.n_steps)->delimiter(',')->required();
  conv->add_option("--samples", spec.samples)->capture_default_str()->check(CLI::PositiveNumber);
  conv->add_option("--seed", spec.seed)->capture_default_str();
  conv->add_option("--threads", spec.threads)->capture_default_str()->check(CLI::PositiveNumber);
  conv->add_option("--out", out_dir)->capture_default_str();

  auto* rates = app.add_subcommand("rates", "fit weak and variance rates from levels.csv");
  rates->add_option("--config", config, "key=value file; flags take precedence");
  rates->add_option("--in", rates_in)->required();
  rates->add_option("--out", rates_out)->required();
  rates->add_option("--from-level", from_level);
  rates->add_option("--to-level", to_level);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args));
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "mlmc: " << e.what() << '\n';
    return 2;
  }

  try {
    if (!std::isnan(p)) spec.p = p;
    if (*run) {
      spec.algorithm = amlmc::parse_algorithm(algorithm);
      if (min_level >= 0) spec.min_final_level = min_level;
      if (max_level >= 0) spec.max_level = max_level;
      if (m_hat > 0) spec.m_hat = m_hat;
      if (alpha > 0.0) spec.alpha = alpha;
      const auto result = amlmc::run_sweep(spec, [](const amlmc::EstimatorRow& r) {
        std::fprintf(stderr, "tol=%g rep=%zu estimate=%.10g level=%d work=%llu %.2fs\n", r.tol, r.repetition,
                     r.estimate, r.final_level, static_cast<unsigned long long>(r.total_work), r.wall_seconds);
      });
      const fs::path out(out_dir);
      write_file(out / "estimators.csv",
                 [&](std::ostream& os) { amlmc::write_csv(os, amlmc::kEstimatorsHeader, result.estimators); });
      write_file(out / "levels.csv",
                 [&](std::ostream& os) { amlmc::write_csv(os, amlmc::kLevelsHeader, result.levels); });
      const auto failed = std::count_if(result.estimators.begin(), result.estimators.end(),
                                        [](const amlmc::EstimatorRow& r) { return r.final_level < 0; });
      if (failed > 0) {
        std::cerr << "mlmc: " << failed << " estimator run(s) aborted\n";
        return 1;
      }
    } else if (*conv) {
      const auto rows = amlmc::run_convergence(spec);
      write_file(fs::path(out_dir) / "mse_vs_n.csv",
                 [&](std::ostream& os) { amlmc::write_csv(os, amlmc::kConvergenceHeader, rows); });
    } else if (*rates) {
      std::ifstream in(rates_in);
      if (!in) throw std::runtime_error("cannot read '" + rates_in + "'");
      const auto fit = amlmc::fit_rates(amlmc::read_levels_csv(in), from_level, to_level);
      write_file(rates_out, [&](std::ostream& os) { amlmc::write_rates_csv(os, fit); });
    }
  } catch (const std::exception& e) {
    std::cerr << "mlmc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
