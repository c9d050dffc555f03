#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adaptive_mesh.hpp"
#include "errors.hpp"
#include "mesh.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "solver.hpp"
#include "statistics.hpp"
#include "thread_pool.hpp"
#include "wiener_path.hpp"

// Multilevel Monte Carlo on nested adaptive mesh hierarchies, and the
// uniform-step baseline.

namespace amlmc {

enum class Algorithm { Adaptive, Uniform };

inline std::string_view algorithm_name(Algorithm a) {
  return a == Algorithm::Adaptive ? "adaptive" : "uniform";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "adaptive") return Algorithm::Adaptive;
  if (s == "uniform") return Algorithm::Uniform;
  throw UsageError("unknown algorithm '" + std::string(s) + "'");
}

struct MlmcConfig {
  Algorithm algorithm = Algorithm::Adaptive;
  double tol = 0.1;
  double delta = 0.1;
  /// tolT = bias_fraction * tol, tolS = tol - tolT.
  double bias_fraction = 0.5;
  /// Steps of the pre-initial mesh the adaptive hierarchy starts from.
  std::size_t n_minus1 = 2;
  /// Nominal steps on level 0; level l has N_l = n0 * 2^l.
  std::size_t n0 = 4;
  std::uint64_t m_hat = 100;
  double alpha = 1.0;
  std::uint64_t max_batch = 100000;
  std::uint64_t min_samples = 2;
  /// The estimator never stops before reaching this level. Negative means
  /// the algorithm's default (2 adaptive, 3 uniform).
  int min_final_level = -1;
  int max_level = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Redraws allowed per sample before the run is aborted.
  unsigned max_redraws = 16;

  double tol_t() const { return bias_fraction * tol; }
  double tol_s() const { return tol - tol_t(); }

  int resolved_min_level() const {
    if (min_final_level >= 0) return min_final_level;
    return algorithm == Algorithm::Adaptive ? 2 : 3;
  }

  /// N_l, the nominal step count of level l.
  double nominal_steps(int level) const { return std::ldexp(static_cast<double>(n0), level); }

  void validate() const {
    if (!(tol > 0.0)) throw UsageError("tol must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw UsageError("delta must lie in (0, 1)");
    if (!(bias_fraction > 0.0 && bias_fraction < 1.0)) throw UsageError("bias fraction must lie in (0, 1)");
    if (n_minus1 < 1 || n0 < 1) throw UsageError("initial step counts must be positive");
    if (m_hat < 2) throw UsageError("initial batch must hold at least 2 samples");
    if (!(alpha > 0.0)) throw UsageError("alpha must be positive");
    if (max_batch < 1) throw UsageError("max batch must be positive");
    if (min_samples < 2) throw UsageError("at least 2 samples per level are needed");
    if (resolved_min_level() < 1) throw UsageError("the estimator needs at least levels 0 and 1");
    if (max_level < resolved_min_level()) throw UsageError("level cap below the minimum final level");
    if (threads < 1) throw UsageError("threads must be positive");
  }
};

/// Per-problem defaults: initial batch 100 (20 for the blow-up problem);
/// alpha 1, except 1 - p for uniform steps on the blow-up problem.
inline MlmcConfig default_config(const AnyProblem& problem, Algorithm algorithm) {
  MlmcConfig cfg;
  cfg.algorithm = algorithm;
  if (const auto* blowup = std::get_if<DriftBlowup>(&problem)) {
    cfg.m_hat = 20;
    if (algorithm == Algorithm::Uniform) cfg.alpha = 1.0 - blowup->p;
  }
  return cfg;
}

struct Realization {
  double delta_g = 0.0;
  /// Interval count of the fine plus the coarse mesh.
  std::uint64_t work = 0;
  std::size_t fine_intervals = 0;
  std::size_t coarse_intervals = 0;
  std::size_t implicit_steps = 0;
};

/// Paths on the meshes Dt^{-1}, Dt^0, ..., Dt^level (level + 2 entries). Dt^j
/// comes from Dt^{j-1} by N_{j-1} max-indicator halvings followed by halving
/// every step above T / N_j, so Dt^{-1..level-1} do not depend on `level`.
template <SdeProblem P>
std::vector<WienerPath<P::noise_dim>> adaptive_hierarchy(const P& problem, int level, const MlmcConfig& cfg,
                                                         SampleStreams& streams,
                                                         const typename P::PathParams& params,
                                                         RefinementStats* stats = nullptr) {
  if (level < 0) throw UsageError("adaptive_hierarchy: level must be >= 0");
  const double T = problem.horizon();
  std::vector<WienerPath<P::noise_dim>> paths;
  paths.reserve(static_cast<std::size_t>(level) + 2);
  paths.push_back(sample_initial_path<P::noise_dim>(Mesh::uniform(cfg.n_minus1, T), streams.increments));
  for (int j = 0; j <= level; ++j) {
    RefinementBudget budget;
    budget.n_refine = j == 0 ? cfg.n_minus1 : static_cast<std::size_t>(cfg.nominal_steps(j - 1));
    budget.dt_max = T / cfg.nominal_steps(j);
    budget.n_tilde = complete_recompute_count(static_cast<std::size_t>(j));
    paths.push_back(refine_mesh(problem, paths.back(), budget, streams.bridge, params, stats));
  }
  return paths;
}

template <SdeProblem P>
Realization adaptive_realization(const P& problem, int level, const MlmcConfig& cfg, std::uint64_t sample_index) {
  auto streams = SampleStreams::make(cfg.seed, static_cast<std::uint32_t>(level), sample_index);
  const auto params = problem.sample_path_params(streams.auxiliary);
  const auto paths = adaptive_hierarchy(problem, level, cfg, streams, params);

  Realization out;
  const auto& fine = paths.back();
  const auto fine_sol = euler_maruyama(problem, fine, params);
  out.delta_g = problem.observable(fine_sol.terminal());
  out.fine_intervals = fine.mesh.intervals();
  out.implicit_steps = fine_sol.implicit_steps;
  if (level > 0) {
    const auto& coarse = paths[paths.size() - 2];
    out.delta_g -= problem.observable(euler_maruyama(problem, coarse, params).terminal());
    out.coarse_intervals = coarse.mesh.intervals();
  }
  out.work = out.fine_intervals + out.coarse_intervals;
  return out;
}

/// Uniform meshes with N_l and N_{l-1} steps; the coarse path is the
/// restriction of the fine one, i.e. its increments are pairwise sums.
template <SdeProblem P>
Realization uniform_realization(const P& problem, int level, const MlmcConfig& cfg, std::uint64_t sample_index) {
  if (level < 0) throw UsageError("uniform_realization: level must be >= 0");
  auto streams = SampleStreams::make(cfg.seed, static_cast<std::uint32_t>(level), sample_index);
  const auto params = problem.sample_path_params(streams.auxiliary);
  const double T = problem.horizon();
  const auto n_fine = static_cast<std::size_t>(cfg.nominal_steps(level));
  const auto fine = sample_initial_path<P::noise_dim>(Mesh::uniform(n_fine, T), streams.increments);

  Realization out;
  const auto fine_sol = euler_maruyama(problem, fine, params);
  out.delta_g = problem.observable(fine_sol.terminal());
  out.fine_intervals = n_fine;
  out.implicit_steps = fine_sol.implicit_steps;
  if (level > 0) {
    const auto coarse = restrict_to(fine, Mesh::uniform(n_fine / 2, T));
    out.delta_g -= problem.observable(euler_maruyama(problem, coarse, params).terminal());
    out.coarse_intervals = n_fine / 2;
  }
  out.work = out.fine_intervals + out.coarse_intervals;
  return out;
}

template <SdeProblem P>
Realization realize(const P& problem, int level, const MlmcConfig& cfg, std::uint64_t sample_index) {
  return cfg.algorithm == Algorithm::Adaptive ? adaptive_realization(problem, level, cfg, sample_index)
                                              : uniform_realization(problem, level, cfg, sample_index);
}

/// Index used for the `attempt`-th redraw of sample `index`. Regular indices
/// stay far below 2^40, so redraws never collide with them.
constexpr std::uint64_t redraw_index(std::uint64_t index, unsigned attempt) {
  return index + (static_cast<std::uint64_t>(attempt) << 40);
}

struct LevelSummary {
  int level = 0;
  std::uint64_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t work = 0;
  std::uint64_t aborted = 0;
};

struct MlmcResult {
  double estimate = 0.0;
  int final_level = -1;
  std::vector<LevelSummary> levels;
  std::uint64_t total_work = 0;
  double wall_seconds = 0.0;
  double c_c = 0.0;
  /// sum_l V_l / M_l at exit.
  double statistical_variance = 0.0;
  std::uint64_t aborted_samples = 0;
};

/// LevelCapExceeded carrying the levels sampled before the cap was hit, so
/// their statistics remain usable (e.g. for rate fits).
class LevelCapAbort : public LevelCapExceeded {
 public:
  LevelCapAbort(const std::string& what, MlmcResult partial_result)
      : LevelCapExceeded(what), partial(std::move(partial_result)) {}
  MlmcResult partial;
};

namespace detail {

template <SdeProblem P>
class MlmcDriver {
 public:
  MlmcDriver(const P& problem, const MlmcConfig& cfg) : problem_(problem), cfg_(cfg), pool_(cfg.threads) {}

  MlmcResult run() {
    const auto start = std::chrono::steady_clock::now();
    const double c_c = confidence_param(cfg_.delta);
    const int min_level = cfg_.resolved_min_level();

    int L = -1;
    while (L < min_level || !bias_stop(accs_[L - 1].mean(), accs_[L].mean(), cfg_.alpha, cfg_.tol_t())) {
      ++L;
      if (L > cfg_.max_level)
        throw LevelCapAbort("run_mlmc: bias criterion not met by level " + std::to_string(cfg_.max_level),
                            summarize(c_c));
      accs_.emplace_back(L);
      next_index_.push_back(0);
      aborted_.push_back(0);
      draw(L, cfg_.m_hat);
      top_up(c_c);
    }

    MlmcResult res = summarize(c_c);
    const double bound = cfg_.tol_s() * cfg_.tol_s() / (c_c * c_c);
    if (!(res.statistical_variance <= bound * (1.0 + 1e-12)))
      throw std::logic_error("run_mlmc: statistical error constraint violated on exit");
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
  }

 private:
  MlmcResult summarize(double c_c) const {
    MlmcResult res;
    res.c_c = c_c;
    res.final_level = static_cast<int>(accs_.size()) - 1;
    for (const auto& acc : accs_) {
      res.levels.push_back({acc.level(), acc.count(), acc.mean(), acc.variance(), acc.work(),
                            aborted_[static_cast<std::size_t>(acc.level())]});
      res.estimate += acc.mean();
      res.total_work += acc.work();
      res.statistical_variance += acc.variance() / static_cast<double>(acc.count());
      res.aborted_samples += aborted_[static_cast<std::size_t>(acc.level())];
    }
    return res;
  }

  /// Re-solves the sample allocation and tops levels up until no level needs
  /// more samples, so the statistical constraint holds with the final
  /// variance estimates.
  void top_up(double c_c) {
    for (;;) {
      std::vector<LevelCostVariance> lv;
      lv.reserve(accs_.size());
      for (const auto& acc : accs_) lv.push_back({acc.variance(), cfg_.nominal_steps(acc.level())});
      const auto need = required_samples(lv, cfg_.tol_s(), c_c, cfg_.min_samples);
      bool drew = false;
      for (std::size_t l = 0; l < accs_.size(); ++l) {
        if (need[l] > accs_[l].count()) {
          draw(static_cast<int>(l), need[l] - accs_[l].count());
          drew = true;
        }
      }
      if (!drew) return;
    }
  }

  void draw(int level, std::uint64_t count) {
    const auto l = static_cast<std::size_t>(level);
    std::vector<double> values;
    std::vector<std::uint64_t> work;
    std::vector<unsigned> redraws;
    while (count > 0) {
      const std::uint64_t batch = std::min(count, cfg_.max_batch);
      const std::uint64_t first = next_index_[l];
      values.assign(batch, 0.0);
      work.assign(batch, 0);
      redraws.assign(batch, 0);
      pool_.parallel_for(batch, [&](std::size_t i) {
        for (unsigned attempt = 0;; ++attempt) {
          try {
            const auto r = realize(problem_, level, cfg_, redraw_index(first + i, attempt));
            values[i] = r.delta_g;
            work[i] = r.work;
            redraws[i] = attempt;
            return;
          } catch (const SampleAborted&) {
            if (attempt >= cfg_.max_redraws) throw;
          }
        }
      });
      std::uint64_t batch_work = 0;
      for (std::size_t i = 0; i < batch; ++i) {
        batch_work += work[i];
        aborted_[l] += redraws[i];
      }
      accs_[l].add_batch(values, batch_work);
      next_index_[l] += batch;
      count -= batch;
    }
  }

  const P& problem_;
  const MlmcConfig& cfg_;
  ThreadPool pool_;
  std::vector<LevelAccumulator> accs_;
  std::vector<std::uint64_t> next_index_;
  std::vector<std::uint64_t> aborted_;
};

}  // namespace detail

/// Adds levels until the bias estimate is below tolT, drawing an initial
/// batch on every new level and then topping all levels up to the optimal
/// sample counts. Samples are never discarded. Throws LevelCapExceeded if the
/// bias criterion is not met by cfg.max_level.
template <SdeProblem P>
MlmcResult run_mlmc(const P& problem, const MlmcConfig& cfg) {
  cfg.validate();
  detail::MlmcDriver<P> driver(problem, cfg);
  return driver.run();
}

inline MlmcResult run_mlmc(const AnyProblem& problem, const MlmcConfig& cfg) {
  return std::visit([&](const auto& p) { return run_mlmc(p, cfg); }, problem);
}

}  // namespace amlmc
