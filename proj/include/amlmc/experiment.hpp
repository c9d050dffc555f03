#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "adaptive_mesh.hpp"
#include "errors.hpp"
#include "mlmc.hpp"
#include "problems.hpp"
#include "statistics.hpp"
#include "thread_pool.hpp"

// Experiment runners behind the command line tool and their CSV formats.

namespace amlmc {

struct ExperimentSpec {
  std::string problem = "gbm";
  std::optional<double> p;
  Algorithm algorithm = Algorithm::Adaptive;
  std::vector<double> tols{0.1};
  std::size_t reps = 1;
  double delta = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t samples = 100000;
  std::vector<std::size_t> n_steps;
  std::size_t threads = 1;

  // Optional estimator overrides; unset means the per-problem default.
  std::optional<int> min_final_level;
  std::optional<int> max_level;
  std::optional<std::uint64_t> m_hat;
  std::optional<double> alpha;

  AnyProblem make() const { return make_problem(problem, ProblemParams{p}); }

  MlmcConfig config(const AnyProblem& prob, double tol, std::uint64_t rep_seed) const {
    MlmcConfig cfg = default_config(prob, algorithm);
    cfg.tol = tol;
    cfg.delta = delta;
    cfg.seed = rep_seed;
    cfg.threads = threads;
    if (min_final_level) cfg.min_final_level = *min_final_level;
    if (max_level) cfg.max_level = *max_level;
    if (m_hat) cfg.m_hat = *m_hat;
    if (alpha) cfg.alpha = *alpha;
    return cfg;
  }

  void validate_sweep() const {
    if (tols.empty()) throw UsageError("at least one tolerance is required");
    for (double t : tols)
      if (!(t > 0.0)) throw UsageError("tolerances must be positive");
    if (!std::is_sorted(tols.begin(), tols.end(), std::greater<>()))
      throw UsageError("tolerances must be sorted in descending order");
    if (reps < 1) throw UsageError("repetitions must be >= 1");
  }
};

/// %.17g, which round-trips every double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct EstimatorRow {
  std::string problem;
  std::string algorithm;
  std::optional<double> p;
  double tol = 0.0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  double estimate = 0.0;
  double abs_error = 0.0;
  bool within_tol = false;
  int final_level = -1;
  std::uint64_t total_work = 0;
  double wall_seconds = 0.0;
};

struct LevelRow {
  double tol = 0.0;
  std::size_t repetition = 0;
  int level = 0;
  std::uint64_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t work = 0;
};

struct ConvergenceRow {
  std::size_t n = 0;
  std::string algorithm;
  double mse = 0.0;
  double stderr_ = 0.0;
};

struct RateFit {
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  std::size_t levels_used = 0;
};

inline constexpr const char* kEstimatorsHeader =
    "problem,algorithm,p,tol,repetition,seed,estimate,abs_error,within_tol,final_level,total_work,wall_seconds";
inline constexpr const char* kLevelsHeader = "tol,repetition,level,M,mean,variance,work";
inline constexpr const char* kConvergenceHeader = "N,algorithm,mse,stderr";
inline constexpr const char* kRatesHeader = "alpha_hat,beta_hat";

inline void write_row(std::ostream& os, const EstimatorRow& r) {
  os << r.problem << ',' << r.algorithm << ',' << (r.p ? format_double(*r.p) : std::string()) << ','
     << format_double(r.tol) << ',' << r.repetition << ',' << r.seed << ',' << format_double(r.estimate) << ','
     << format_double(r.abs_error) << ',' << (r.within_tol ? 1 : 0) << ',' << r.final_level << ','
     << r.total_work << ',' << format_double(r.wall_seconds) << '\n';
}

inline void write_row(std::ostream& os, const LevelRow& r) {
  os << format_double(r.tol) << ',' << r.repetition << ',' << r.level << ',' << r.samples << ','
     << format_double(r.mean) << ',' << format_double(r.variance) << ',' << r.work << '\n';
}

inline void write_row(std::ostream& os, const ConvergenceRow& r) {
  os << r.n << ',' << r.algorithm << ',' << format_double(r.mse) << ',' << format_double(r.stderr_) << '\n';
}

template <class Row>
void write_csv(std::ostream& os, const char* header, const std::vector<Row>& rows) {
  os << header << '\n';
  for (const auto& r : rows) write_row(os, r);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

namespace detail {

inline double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
  return v;
}

/// Reads a CSV whose header must equal `header`; returns the data rows.
inline std::vector<std::vector<std::string>> read_table(std::istream& is, const std::string& header,
                                                        std::size_t columns) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw std::runtime_error("unexpected CSV header: '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns)
      throw std::runtime_error("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                               " fields");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace detail

inline std::vector<LevelRow> read_levels_csv(std::istream& is) {
  std::vector<LevelRow> out;
  try {
    for (const auto& f : detail::read_table(is, kLevelsHeader, 7)) {
      out.push_back({detail::parse_double(f[0]), static_cast<std::size_t>(detail::parse_u64(f[1])),
                     std::stoi(f[2]), detail::parse_u64(f[3]), detail::parse_double(f[4]),
                     detail::parse_double(f[5]), detail::parse_u64(f[6])});
    }
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("levels CSV: ") + e.what());
  }
  return out;
}

inline std::vector<EstimatorRow> read_estimators_csv(std::istream& is) {
  std::vector<EstimatorRow> out;
  try {
    for (const auto& f : detail::read_table(is, kEstimatorsHeader, 12)) {
      EstimatorRow r;
      r.problem = f[0];
      r.algorithm = f[1];
      if (!f[2].empty()) r.p = detail::parse_double(f[2]);
      r.tol = detail::parse_double(f[3]);
      r.repetition = static_cast<std::size_t>(detail::parse_u64(f[4]));
      r.seed = detail::parse_u64(f[5]);
      r.estimate = detail::parse_double(f[6]);
      r.abs_error = detail::parse_double(f[7]);
      r.within_tol = f[8] == "1";
      r.final_level = std::stoi(f[9]);
      r.total_work = detail::parse_u64(f[10]);
      r.wall_seconds = detail::parse_double(f[11]);
      out.push_back(std::move(r));
    }
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("estimators CSV: ") + e.what());
  }
  return out;
}

inline std::vector<ConvergenceRow> read_convergence_csv(std::istream& is) {
  std::vector<ConvergenceRow> out;
  try {
    for (const auto& f : detail::read_table(is, kConvergenceHeader, 4)) {
      out.push_back({static_cast<std::size_t>(detail::parse_u64(f[0])), f[1], detail::parse_double(f[2]),
                     detail::parse_double(f[3])});
    }
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("convergence CSV: ") + e.what());
  }
  return out;
}

struct SweepResult {
  std::vector<EstimatorRow> estimators;
  std::vector<LevelRow> levels;
};

/// Runs reps estimator realizations for every tolerance. Repetition r uses
/// seed spec.seed + r at every tolerance. A run that aborts is recorded as a
/// failed row (NaN estimate, final_level -1) without level rows.
inline SweepResult run_sweep(const ExperimentSpec& spec,
                             const std::function<void(const EstimatorRow&)>& on_row = {}) {
  spec.validate_sweep();
  const AnyProblem prob = spec.make();
  const double reference = reference_mean(prob);
  std::optional<double> p;
  if (const auto* b = std::get_if<DriftBlowup>(&prob)) p = b->p;

  SweepResult out;
  for (double tol : spec.tols) {
    for (std::size_t rep = 0; rep < spec.reps; ++rep) {
      EstimatorRow row;
      row.problem = std::string(problem_name(prob));
      row.algorithm = std::string(algorithm_name(spec.algorithm));
      row.p = p;
      row.tol = tol;
      row.repetition = rep;
      row.seed = spec.seed + rep;
      const MlmcConfig cfg = spec.config(prob, tol, row.seed);
      try {
        const MlmcResult res = run_mlmc(prob, cfg);
        row.estimate = res.estimate;
        row.abs_error = std::abs(res.estimate - reference);
        row.within_tol = row.abs_error <= tol;
        row.final_level = res.final_level;
        row.total_work = res.total_work;
        row.wall_seconds = res.wall_seconds;
        for (const auto& l : res.levels)
          out.levels.push_back({tol, rep, l.level, l.samples, l.mean, l.variance, l.work});
      } catch (const SampleAborted&) {
        row.estimate = row.abs_error = std::numeric_limits<double>::quiet_NaN();
      } catch (const LevelCapExceeded&) {
        row.estimate = row.abs_error = std::numeric_limits<double>::quiet_NaN();
      }
      if (on_row) on_row(row);
      out.estimators.push_back(std::move(row));
    }
  }
  return out;
}

/// Refinement budget of the single-level convergence study for N target
/// steps: input mesh with N/2 uniform steps, N/2 halvings, dt_max = 2T/N and
/// floor(log2(N/2)) complete recomputations.
inline RefinementBudget convergence_budget(std::size_t n, double T) {
  RefinementBudget b;
  b.n_refine = n / 2;
  b.dt_max = 2.0 * T / static_cast<double>(n);
  b.n_tilde = std::max<std::size_t>(1, static_cast<std::size_t>(std::bit_width(n / 2)) - 1);
  return b;
}

namespace detail {

template <HasExactSolution P>
std::vector<ConvergenceRow> convergence_study(const P& problem, const ExperimentSpec& spec) {
  const double T = problem.horizon();
  ThreadPool pool(spec.threads);
  std::vector<ConvergenceRow> rows;
  for (std::size_t n : spec.n_steps) {
    if (n < 2 || n % 2 != 0) throw UsageError("step counts must be even and >= 2");
    for (Algorithm alg : {Algorithm::Uniform, Algorithm::Adaptive}) {
      LevelAccumulator acc;
      std::vector<double> sq;
      for (std::uint64_t first = 0; first < spec.samples; first += 100000) {
        const std::uint64_t batch = std::min<std::uint64_t>(100000, spec.samples - first);
        sq.assign(batch, 0.0);
        pool.parallel_for(batch, [&](std::size_t i) {
          auto streams = SampleStreams::make(spec.seed, static_cast<std::uint32_t>(n), first + i);
          const auto params = problem.sample_path_params(streams.auxiliary);
          const auto path = [&] {
            if (alg == Algorithm::Uniform)
              return sample_initial_path<P::noise_dim>(Mesh::uniform(n, T), streams.increments);
            const auto input = sample_initial_path<P::noise_dim>(Mesh::uniform(n / 2, T), streams.increments);
            return refine_mesh(problem, input, convergence_budget(n, T), streams.bridge, params);
          }();
          const double x = problem.observable(euler_maruyama(problem, path, params).terminal());
          const double e = x - problem.exact_terminal_value(path.terminal());
          sq[i] = e * e;
        });
        acc.add_batch(sq);
      }
      rows.push_back({n, std::string(algorithm_name(alg)), acc.mean(),
                      std::sqrt(acc.variance() / static_cast<double>(acc.count()))});
    }
  }
  return rows;
}

}  // namespace detail

/// Strong (pathwise) MSE of the terminal value against the exact solution,
/// for uniform meshes with N steps and adaptive meshes refined from N/2.
inline std::vector<ConvergenceRow> run_convergence(const ExperimentSpec& spec) {
  if (spec.n_steps.empty()) throw UsageError("at least one step count is required");
  if (spec.samples < 2) throw UsageError("at least 2 samples are required");
  const AnyProblem prob = spec.make();
  return std::visit(
      [&](const auto& p) -> std::vector<ConvergenceRow> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (HasExactSolution<P>) {
          return detail::convergence_study(p, spec);
        } else {
          throw UsageError("problem '" + std::string(p.name()) + "' has no exact solution");
        }
      },
      prob);
}

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

/// Pools the rows of each level (all tolerances and repetitions) and fits
/// log2 |mean| and log2 variance against the level. Levels with fewer than
/// two pooled samples, or outside [from_level, to_level], are left out.
inline RateFit fit_rates(const std::vector<LevelRow>& rows, int from_level = 0,
                         int to_level = std::numeric_limits<int>::max()) {
  std::map<int, LevelAccumulator> pooled;
  for (const auto& r : rows) {
    if (r.level < from_level || r.level > to_level) continue;
    auto [it, inserted] = pooled.try_emplace(r.level, r.level);
    it->second.merge(LevelAccumulator::from_summary(r.level, r.samples, r.mean, r.variance, r.work));
  }
  std::vector<double> lv, log_mean, log_var;
  for (const auto& [level, acc] : pooled) {
    if (acc.count() < 2) continue;
    lv.push_back(level);
    log_mean.push_back(std::log2(std::abs(acc.mean())));
    log_var.push_back(std::log2(acc.variance()));
  }
  if (lv.size() < 4) throw UsageError("rate fit needs at least 4 levels with 2 or more samples");
  for (std::size_t i = 0; i < lv.size(); ++i)
    if (!std::isfinite(log_mean[i]) || !std::isfinite(log_var[i]))
      throw UsageError("rate fit: level " + std::to_string(static_cast<int>(lv[i])) + " has a zero mean or variance");
  return {-ls_slope(lv, log_mean), -ls_slope(lv, log_var), lv.size()};
}

inline void write_rates_csv(std::ostream& os, const RateFit& fit) {
  os << kRatesHeader << '\n' << format_double(fit.alpha_hat) << ',' << format_double(fit.beta_hat) << '\n';
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

}  // namespace amlmc
