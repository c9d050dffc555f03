#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <ostream>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"

namespace amlmc {

/// Anything that hands out standard normal variates.
template <class S>
concept NormalSource = requires(S s) {
  { s.normal() } -> std::convertible_to<double>;
};

/// A Wiener path in R^Dim sampled at the points of a mesh; W(0) = 0.
template <std::size_t Dim>
struct WienerPath {
  using Value = Vec<Dim>;

  Mesh mesh;
  std::vector<Value> values;

  static constexpr std::size_t dim() { return Dim; }

  Value increment(std::size_t n) const {
    Value dw{};
    for (std::size_t k = 0; k < Dim; ++k) dw[k] = values[n + 1][k] - values[n][k];
    return dw;
  }

  const Value& terminal() const { return values.back(); }

  friend bool operator==(const WienerPath&, const WienerPath&) = default;
};

/// Draws every increment as sqrt(dt_n) * xi with xi ~ N(0, 1), component by
/// component in time order.
template <std::size_t Dim, NormalSource Source>
WienerPath<Dim> sample_initial_path(const Mesh& mesh, Source& source) {
  WienerPath<Dim> path{mesh, std::vector<Vec<Dim>>(mesh.size())};
  path.values[0] = zeros<Dim>();
  for (std::size_t n = 0; n < mesh.intervals(); ++n) {
    const double scale = std::sqrt(mesh.step(n));
    for (std::size_t k = 0; k < Dim; ++k)
      path.values[n + 1][k] = path.values[n][k] + scale * source.normal();
  }
  return path;
}

/// Brownian-bridge value at the midpoint of an interval of length `dt`.
template <std::size_t Dim, NormalSource Source>
Vec<Dim> bridge_midpoint(const Vec<Dim>& left, const Vec<Dim>& right, double dt, Source& source) {
  const double scale = 0.5 * std::sqrt(dt);
  Vec<Dim> mid{};
  for (std::size_t k = 0; k < Dim; ++k)
    mid[k] = 0.5 * (left[k] + right[k]) + scale * source.normal();
  return mid;
}

/// Halving a step is refused when the halves would fall below kMinStep.
inline bool can_halve(double dt) { return 0.5 * dt >= kMinStep; }

/// Inserts the midpoint of interval `interval` into the path. Returns false,
/// leaving the path untouched, when the halved step would be below kMinStep.
template <std::size_t Dim, NormalSource Source>
bool try_bridge_insert(WienerPath<Dim>& path, std::size_t interval, Source& source) {
  if (interval >= path.mesh.intervals()) throw UsageError("bridge_insert: interval index out of range");
  const double dt = path.mesh.step(interval);
  if (!can_halve(dt)) return false;
  const double t_mid = 0.5 * (path.mesh[interval] + path.mesh[interval + 1]);
  const Vec<Dim> w_mid =
      bridge_midpoint<Dim>(path.values[interval], path.values[interval + 1], dt, source);

  std::vector<double> pts(path.mesh.points().begin(), path.mesh.points().end());
  pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(interval) + 1, t_mid);
  path.mesh = Mesh(std::move(pts));
  path.values.insert(path.values.begin() + static_cast<std::ptrdiff_t>(interval) + 1, w_mid);
  return true;
}

template <std::size_t Dim, NormalSource Source>
WienerPath<Dim> bridge_insert(WienerPath<Dim> path, std::size_t interval, Source& source) {
  if (!try_bridge_insert(path, interval, source))
    throw UsageError("bridge_insert: halving would go below the minimum step");
  return path;
}

/// Values of `path` at the points of `coarse`, copied bit for bit.
template <std::size_t Dim>
WienerPath<Dim> restrict_to(const WienerPath<Dim>& path, const Mesh& coarse) {
  WienerPath<Dim> out{coarse, {}};
  out.values.reserve(coarse.size());
  const auto fine = path.mesh.points();
  std::size_t j = 0;
  for (double t : coarse.points()) {
    while (j < fine.size() && fine[j] < t) ++j;
    if (j == fine.size() || fine[j] != t) throw UsageError("restrict: coarse mesh is not a subset of the path mesh");
    out.values.push_back(path.values[j]);
  }
  return out;
}

/// Debug dump: columns t, W_1..W_Dim.
template <std::size_t Dim>
void write_csv(std::ostream& os, const WienerPath<Dim>& path) {
  const auto old_precision = os.precision(17);
  os << "t";
  for (std::size_t k = 1; k <= Dim; ++k) os << ",W_" << k;
  os << '\n';
  for (std::size_t n = 0; n < path.values.size(); ++n) {
    os << path.mesh[n];
    for (double w : path.values[n]) os << ',' << w;
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace amlmc
