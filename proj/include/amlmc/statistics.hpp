#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "errors.hpp"

namespace amlmc {

/// Streaming count / mean / second central moment / work for the samples of
/// one level. Batches are folded in with the pairwise (Chan et al.) update,
/// which reproduces the two-pass sample variance and makes merge()
/// associative up to rounding.
class LevelAccumulator {
 public:
  LevelAccumulator() = default;
  explicit LevelAccumulator(int level) : level_(level) {}

  /// Rebuilds an accumulator from a stored summary (count, mean, variance).
  static LevelAccumulator from_summary(int level, std::uint64_t count, double mean, double variance,
                                       std::uint64_t work) {
    LevelAccumulator acc(level);
    acc.count_ = count;
    acc.mean_ = mean;
    acc.m2_ = count > 1 ? variance * static_cast<double>(count - 1) : 0.0;
    acc.work_ = work;
    return acc;
  }

  void add(double x, std::uint64_t work = 0) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
    work_ += work;
  }

  /// Two-pass statistics of the batch, merged into the running state.
  void add_batch(std::span<const double> values, std::uint64_t work = 0) {
    if (values.empty()) {
      work_ += work;
      return;
    }
    LevelAccumulator batch(level_);
    double sum = 0.0;
    for (double x : values) sum += x;
    batch.count_ = values.size();
    batch.mean_ = sum / static_cast<double>(values.size());
    double m2 = 0.0;
    for (double x : values) m2 += (x - batch.mean_) * (x - batch.mean_);
    batch.m2_ = m2;
    batch.work_ = work;
    merge(batch);
  }

  void merge(const LevelAccumulator& other) {
    if (other.count_ == 0) {
      work_ += other.work_;
      return;
    }
    if (count_ == 0) {
      const int level = level_;
      *this = other;
      level_ = level;
      return;
    }
    const double n_a = static_cast<double>(count_);
    const double n_b = static_cast<double>(other.count_);
    const double n = n_a + n_b;
    const double delta = other.mean_ - mean_;
    mean_ += delta * n_b / n;
    m2_ += other.m2_ + delta * delta * n_a * n_b / n;
    count_ += other.count_;
    work_ += other.work_;
  }

  int level() const { return level_; }
  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  double second_moment() const { return m2_; }
  std::uint64_t work() const { return work_; }

  /// Unbiased sample variance; NaN with fewer than two samples.
  double variance() const {
    if (count_ < 2) return std::numeric_limits<double>::quiet_NaN();
    return m2_ / static_cast<double>(count_ - 1);
  }

 private:
  int level_ = 0;
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  std::uint64_t work_ = 0;
};

/// C_c with P(|Z| <= C_c) = 1 - delta for Z ~ N(0, 1), i.e. the standard
/// normal quantile at 1 - delta/2. Safeguarded Newton on erfc.
inline double confidence_param(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("confidence_param: delta must lie in (0, 1)");
  // Two-sided tail: erfc(c / sqrt(2)) = delta.
  auto tail = [](double c) { return std::erfc(c / std::numbers::sqrt2); };
  double lo = 0.0, hi = 1.0;
  while (tail(hi) > delta) hi *= 2.0;
  double c = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = tail(c) - delta;
    if (f > 0.0) lo = c; else hi = c;
    const double slope = -std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * c * c);
    double next = c - f / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - c) <= 1e-15 * std::max(1.0, c)) return next;
    c = next;
  }
  return c;
}

struct LevelCostVariance {
  double variance = 0.0;
  /// Cost proxy, the nominal number of steps N_l.
  double cost = 1.0;
};

/// M_l = ceil((C_c / tolS)^2 sqrt(V_l / N_l) sum_k sqrt(N_k V_k)), never
/// below `min_samples`.
inline std::vector<std::uint64_t> required_samples(std::span<const LevelCostVariance> levels,
                                                   double tol_s, double c_c,
                                                   std::uint64_t min_samples = 2) {
  double sum = 0.0;
  for (const auto& l : levels) {
    if (!(l.variance >= 0.0) || !(l.cost > 0.0)) throw UsageError("required_samples: need V >= 0 and N > 0");
    sum += std::sqrt(l.cost * l.variance);
  }
  const double scale = (c_c * c_c) / (tol_s * tol_s);
  std::vector<std::uint64_t> out;
  out.reserve(levels.size());
  for (const auto& l : levels) {
    const double m = std::ceil(scale * std::sqrt(l.variance / l.cost) * sum);
    out.push_back(std::max(min_samples, static_cast<std::uint64_t>(m)));
  }
  return out;
}

/// Bias stopping rule: max(2^-alpha |mean_{L-1}|, |mean_L|) / (2^alpha - 1) <= tolT.
inline bool bias_stop(double mean_prev, double mean_last, double alpha, double tol_t) {
  if (!(alpha > 0.0)) throw UsageError("bias_stop: alpha must be positive");
  const double bias = std::max(std::exp2(-alpha) * std::abs(mean_prev), std::abs(mean_last)) /
                      (std::exp2(alpha) - 1.0);
  return bias <= tol_t;
}

}  // namespace amlmc
