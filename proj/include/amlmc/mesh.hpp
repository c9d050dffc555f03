#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace amlmc {

/// Smallest step the refinement will create; midpoints of dyadic steps on
/// [0, 1] stay exact in binary64 down to this size.
inline constexpr double kMinStep = 0x1.0p-51;

/// Strictly increasing time grid 0 = t_0 < t_1 < ... < t_N = T.
class Mesh {
 public:
  Mesh() = default;

  explicit Mesh(std::vector<double> points) : points_(std::move(points)) { validate(); }

  static Mesh uniform(std::size_t steps, double horizon) {
    if (steps == 0 || !(horizon > 0.0)) throw UsageError("uniform mesh needs steps > 0 and T > 0");
    std::vector<double> pts(steps + 1);
    for (std::size_t n = 0; n <= steps; ++n)
      pts[n] = horizon * static_cast<double>(n) / static_cast<double>(steps);
    pts.back() = horizon;
    return Mesh(std::move(pts));
  }

  std::size_t intervals() const { return points_.empty() ? 0 : points_.size() - 1; }
  std::size_t size() const { return points_.size(); }
  double horizon() const { return points_.back(); }
  double operator[](std::size_t n) const { return points_[n]; }
  double step(std::size_t n) const { return points_[n + 1] - points_[n]; }
  std::span<const double> points() const { return points_; }

  double max_step() const {
    double m = 0.0;
    for (std::size_t n = 0; n + 1 < points_.size(); ++n) m = std::max(m, step(n));
    return m;
  }

  double min_step() const {
    double m = horizon();
    for (std::size_t n = 0; n + 1 < points_.size(); ++n) m = std::min(m, step(n));
    return m;
  }

  /// True when every point of `coarse` is also a point of this mesh.
  bool contains(const Mesh& coarse) const {
    return std::includes(points_.begin(), points_.end(), coarse.points_.begin(),
                         coarse.points_.end());
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;

 private:
  void validate() const {
    if (points_.size() < 2) throw UsageError("mesh needs at least one interval");
    if (points_.front() != 0.0) throw UsageError("mesh must start at t = 0");
    for (std::size_t n = 0; n + 1 < points_.size(); ++n) {
      if (!(points_[n + 1] > points_[n])) throw UsageError("mesh points must be strictly increasing");
      if (points_[n + 1] - points_[n] < kMinStep) throw UsageError("mesh step below the minimum step");
    }
  }

  std::vector<double> points_;
};

}  // namespace amlmc
