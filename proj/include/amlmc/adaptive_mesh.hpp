#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "mesh.hpp"
#include "problems.hpp"
#include "solver.hpp"
#include "wiener_path.hpp"

// MSE-adaptive mesh refinement: repeatedly halve the interval with the
// largest error indicator, bridging the Wiener path at each new midpoint.

namespace amlmc {

struct RefinementBudget {
  /// Number of halvings to perform.
  std::size_t n_refine = 0;
  /// Steps strictly larger than this are halved once by the final sweep.
  double dt_max = 1.0;
  /// How many times all indicators are recomputed from scratch.
  std::size_t n_tilde = 1;
};

/// floor(log2(level + 2)): complete indicator recomputations at a level.
constexpr std::size_t complete_recompute_count(std::size_t level) {
  return static_cast<std::size_t>(std::bit_width(level + 2)) - 1;
}

struct RefinementStats {
  std::size_t refinements = 0;
  std::size_t postcondition_halvings = 0;
  std::size_t complete_recomputes = 0;
  std::size_t local_updates = 0;
  std::size_t refused_halvings = 0;
  /// Budget left over because no interval could be halved any further.
  std::size_t dropped_budget = 0;
  /// Pushes and pops on the indicator heap, including heap construction.
  std::size_t heap_operations = 0;

  RefinementStats& operator+=(const RefinementStats& o) {
    refinements += o.refinements;
    postcondition_halvings += o.postcondition_halvings;
    complete_recomputes += o.complete_recomputes;
    local_updates += o.local_updates;
    refused_halvings += o.refused_halvings;
    dropped_budget += o.dropped_budget;
    heap_operations += o.heap_operations;
    return *this;
  }
};

template <SdeProblem P>
struct IndicatorBundle {
  ErrorIndicators indicators;
  PathSolution<P> solution;
  DualSolution<P> dual;
};

/// Forward solve, backward dual solve and indicator evaluation, in that order.
template <SdeProblem P>
IndicatorBundle<P> compute_error_indicators(const P& problem, const WienerPath<P::noise_dim>& path,
                                            const typename P::PathParams& params) {
  IndicatorBundle<P> out;
  out.solution = euler_maruyama(problem, path, params);
  out.dual = dual_backward(problem, path, out.solution, params);
  out.indicators = error_indicators(problem, path, out.solution, out.dual, params);
  return out;
}

/// Local update after interval `split` was halved and its midpoint inserted
/// into `path` at index split + 1. `bundle` still describes the mesh before
/// the halving. One forward step from t_split gives the midpoint state, one
/// backward step from t_{split+2} its dual weight; only the indicators of the
/// two new intervals change.
template <SdeProblem P>
void local_update(const P& problem, const WienerPath<P::noise_dim>& path, IndicatorBundle<P>& bundle,
                  std::size_t split, const typename P::PathParams& params) {
  const Mesh& mesh = path.mesh;
  if (split + 2 >= mesh.size() || bundle.solution.states.size() + 1 != mesh.size() ||
      bundle.dual.weights.size() + 1 != mesh.size())
    throw UsageError("local_update: bundle does not match the refined path");
  const std::size_t mid = split + 1;
  const std::size_t intervals = mesh.intervals();

  const auto x_left = bundle.solution.states[split];
  const auto x_mid = forward_step(problem, mesh[split], mesh[mid], x_left, path.increment(split), params);
  if (!all_finite(x_mid)) throw SampleAborted("local_update: non-finite midpoint state");
  const auto phi_mid = dual_step(problem, mesh[mid], mesh[mid + 1], x_mid, path.increment(mid), params,
                                 bundle.dual.weights[split + 1]);

  auto& states = bundle.solution.states;
  auto& weights = bundle.dual.weights;
  states.insert(states.begin() + static_cast<std::ptrdiff_t>(mid), x_mid);
  weights.insert(weights.begin() + static_cast<std::ptrdiff_t>(mid), phi_mid);

  auto& rho = bundle.indicators.density;
  auto& r = bundle.indicators.indicators;
  rho.insert(rho.begin() + static_cast<std::ptrdiff_t>(mid), 0.0);
  r.insert(r.begin() + static_cast<std::ptrdiff_t>(mid), 0.0);
  for (std::size_t n : {split, mid}) {
    const double dt = mesh.step(n);
    rho[n] = error_density(problem, mesh[n], dt, states[n], weights[n], params, intervals);
    r[n] = rho[n] * dt * dt;
  }
}

namespace detail {

/// One refinement pass over a path. Intervals are stored as a singly linked
/// list of left endpoints so a halving is O(1); the list is flattened back
/// into ordered arrays whenever indicators are recomputed from scratch.
template <SdeProblem P, NormalSource Source>
class RefinementSession {
 public:
  using State = typename P::State;
  using Noise = typename P::Noise;
  static constexpr std::uint32_t kEnd = ~std::uint32_t{0};

  RefinementSession(const P& problem, const typename P::PathParams& params, Source& bridge,
                    RefinementStats& stats)
      : problem_(problem), params_(params), bridge_(bridge), stats_(stats) {}

  WienerPath<P::noise_dim> run(const WienerPath<P::noise_dim>& input, const RefinementBudget& budget) {
    load(input);
    std::size_t remaining = budget.n_refine;
    const std::size_t n_tilde = std::max<std::size_t>(1, budget.n_tilde);
    const std::size_t batch = (budget.n_refine + n_tilde - 1) / n_tilde;
    for (std::size_t pass = 0; pass < n_tilde && remaining > 0; ++pass) {
      recompute_all();
      const std::size_t limit = remaining > 2 * batch ? batch : remaining;
      for (std::size_t j = 0; j < limit; ++j) {
        if (!refine_largest()) {
          stats_.dropped_budget += remaining;
          remaining = 0;
          break;
        }
        --remaining;
      }
    }
    return postcondition(flatten(), budget.dt_max);
  }

 private:
  struct Node {
    double t;
    Noise w;
    State x;
    State phi;
    double r;
    std::uint32_t next;
    std::uint32_t version;
    bool frozen;
  };

  struct HeapEntry {
    double r;
    double t;
    std::uint32_t node;
    std::uint32_t version;
  };

  /// Max-heap order: larger indicator first, earlier interval on ties.
  static bool heap_less(const HeapEntry& a, const HeapEntry& b) {
    return a.r < b.r || (a.r == b.r && a.t > b.t);
  }

  void load(const WienerPath<P::noise_dim>& path) {
    const std::size_t n_points = path.mesh.size();
    nodes_.clear();
    nodes_.reserve(2 * n_points);
    for (std::size_t n = 0; n < n_points; ++n) {
      nodes_.push_back({path.mesh[n], path.values[n], {}, {}, 0.0,
                        n + 1 < n_points ? static_cast<std::uint32_t>(n + 1) : kEnd, 0, false});
    }
    intervals_ = n_points - 1;
  }

  WienerPath<P::noise_dim> flatten() const {
    std::vector<double> times;
    std::vector<Noise> values;
    times.reserve(intervals_ + 1);
    values.reserve(intervals_ + 1);
    for (std::uint32_t i = 0; i != kEnd; i = nodes_[i].next) {
      times.push_back(nodes_[i].t);
      values.push_back(nodes_[i].w);
    }
    return {Mesh(std::move(times)), std::move(values)};
  }

  void recompute_all() {
    const WienerPath<P::noise_dim> path = flatten();
    const auto bundle = compute_error_indicators(problem_, path, params_);
    ++stats_.complete_recomputes;

    std::vector<bool> frozen;
    frozen.reserve(path.mesh.size());
    for (std::uint32_t i = 0; i != kEnd; i = nodes_[i].next) frozen.push_back(nodes_[i].frozen);

    const std::size_t n_points = path.mesh.size();
    nodes_.clear();
    heap_.clear();
    for (std::size_t n = 0; n < n_points; ++n) {
      const bool last = n + 1 == n_points;
      const double r = last ? 0.0 : bundle.indicators.indicators[n];
      nodes_.push_back({path.mesh[n], path.values[n], bundle.solution.states[n], bundle.dual.weights[n],
                        r, last ? kEnd : static_cast<std::uint32_t>(n + 1), 0, frozen[n]});
      if (!last && !frozen[n]) heap_.push_back({r, path.mesh[n], static_cast<std::uint32_t>(n), 0});
    }
    std::make_heap(heap_.begin(), heap_.end(), heap_less);
    stats_.heap_operations += heap_.size();
  }

  void push(std::uint32_t node) {
    heap_.push_back({nodes_[node].r, nodes_[node].t, node, nodes_[node].version});
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
    ++stats_.heap_operations;
  }

  /// Halves the interval with the largest live indicator. Returns false when
  /// every interval is already at the minimum step.
  bool refine_largest() {
    while (!heap_.empty()) {
      std::pop_heap(heap_.begin(), heap_.end(), heap_less);
      const HeapEntry top = heap_.back();
      heap_.pop_back();
      ++stats_.heap_operations;
      Node& left = nodes_[top.node];
      if (top.version != left.version || left.frozen) continue;
      const Node& right = nodes_[left.next];
      if (!can_halve(right.t - left.t)) {
        left.frozen = true;
        ++stats_.refused_halvings;
        continue;
      }
      split(top.node);
      return true;
    }
    return false;
  }

  void split(std::uint32_t left_id) {
    const std::uint32_t right_id = nodes_[left_id].next;
    const double t_left = nodes_[left_id].t;
    const double t_right = nodes_[right_id].t;
    const double t_mid = 0.5 * (t_left + t_right);
    const Noise w_mid =
        bridge_midpoint<P::noise_dim>(nodes_[left_id].w, nodes_[right_id].w, t_right - t_left, bridge_);

    const Node& left = nodes_[left_id];
    const Node& right = nodes_[right_id];
    Noise dw_left{}, dw_right{};
    for (std::size_t k = 0; k < P::noise_dim; ++k) {
      dw_left[k] = w_mid[k] - left.w[k];
      dw_right[k] = right.w[k] - w_mid[k];
    }
    const State x_mid = forward_step(problem_, t_left, t_mid, left.x, dw_left, params_);
    if (!all_finite(x_mid)) throw SampleAborted("refine_mesh: non-finite midpoint state");
    const State phi_mid = dual_step(problem_, t_mid, t_right, x_mid, dw_right, params_, right.phi);

    ++intervals_;
    const double rho_left =
        error_density(problem_, t_left, t_mid - t_left, left.x, left.phi, params_, intervals_);
    const double rho_mid = error_density(problem_, t_mid, t_right - t_mid, x_mid, phi_mid, params_, intervals_);

    const auto mid_id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({t_mid, w_mid, x_mid, phi_mid, rho_mid * (t_right - t_mid) * (t_right - t_mid),
                      right_id, 0, false});
    Node& l = nodes_[left_id];
    l.next = mid_id;
    l.r = rho_left * (t_mid - t_left) * (t_mid - t_left);
    ++l.version;
    push(left_id);
    push(mid_id);
    ++stats_.refinements;
    ++stats_.local_updates;
  }

  WienerPath<P::noise_dim> postcondition(const WienerPath<P::noise_dim>& path, double dt_max) {
    const Mesh& mesh = path.mesh;
    std::vector<double> times;
    std::vector<Noise> values;
    times.reserve(2 * mesh.size());
    values.reserve(2 * mesh.size());
    for (std::size_t n = 0; n < mesh.intervals(); ++n) {
      times.push_back(mesh[n]);
      values.push_back(path.values[n]);
      const double dt = mesh.step(n);
      if (dt > dt_max && can_halve(dt)) {
        times.push_back(0.5 * (mesh[n] + mesh[n + 1]));
        values.push_back(bridge_midpoint<P::noise_dim>(path.values[n], path.values[n + 1], dt, bridge_));
        ++stats_.postcondition_halvings;
      }
    }
    times.push_back(mesh.horizon());
    values.push_back(path.values.back());
    return {Mesh(std::move(times)), std::move(values)};
  }

  const P& problem_;
  const typename P::PathParams& params_;
  Source& bridge_;
  RefinementStats& stats_;
  std::vector<Node> nodes_;
  std::vector<HeapEntry> heap_;
  std::size_t intervals_ = 0;
};

}  // namespace detail

/// Refines `path` (and its mesh) by `budget.n_refine` max-indicator halvings
/// followed by one postconditioning sweep that halves every step strictly
/// larger than `budget.dt_max`. All indicators are recomputed from scratch
/// `budget.n_tilde` times, in batches of ceil(n_refine / n_tilde); between
/// recomputations only the two indicators next to each new midpoint are
/// updated. Bridge noise is drawn from `bridge` in insertion order.
///
/// Ties between equal indicators go to the earliest interval. An interval
/// whose halves would be shorter than kMinStep is skipped; if no interval can
/// be halved the rest of the budget is dropped and counted in the stats.
template <SdeProblem P, NormalSource Source>
WienerPath<P::noise_dim> refine_mesh(const P& problem, const WienerPath<P::noise_dim>& path,
                                     const RefinementBudget& budget, Source& bridge,
                                     const typename P::PathParams& params,
                                     RefinementStats* stats = nullptr) {
  if (!(budget.dt_max > kMinStep)) throw UsageError("refine_mesh: dt_max must exceed the minimum step");
  RefinementStats local;
  detail::RefinementSession<P, Source> session(problem, params, bridge, stats ? *stats : local);
  return session.run(path, budget);
}

}  // namespace amlmc
