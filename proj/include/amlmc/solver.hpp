#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "problems.hpp"
#include "wiener_path.hpp"

// Euler-Maruyama forward solve, backward first-variation (dual) solve and the
// MSE error density / indicators built from them.

namespace amlmc {

template <SdeProblem P>
struct PathSolution {
  std::vector<typename P::State> states;
  /// Steps whose drift was evaluated at the right endpoint.
  std::size_t implicit_steps = 0;

  const typename P::State& terminal() const { return states.back(); }
};

template <SdeProblem P>
struct DualSolution {
  /// weights[n] approximates d g(X_T) / d X_{t_n}.
  std::vector<typename P::State> weights;
};

struct ErrorIndicators {
  /// rho_n >= 0 per interval.
  std::vector<double> density;
  /// r_n = rho_n * dt_n^2 per interval.
  std::vector<double> indicators;

  double total() const {
    double s = 0.0;
    for (double r : indicators) s += r;
    return s;
  }
};

/// Time at which the drift of step (t0, t1) is evaluated.
template <SdeProblem P>
double drift_time(const P& problem, double t0, double t1, const typename P::PathParams& params) {
  if constexpr (P::scheme == Scheme::SemiImplicitBlowup) {
    return problem.drift_time(t0, t1, params);
  } else {
    (void)problem, (void)t1, (void)params;
    return t0;
  }
}

/// One Euler-Maruyama step c(t0, x) = x + a(tau, x) dt + b(t0, x) dW.
template <SdeProblem P>
typename P::State forward_step(const P& problem, double t0, double t1, const typename P::State& x,
                               const typename P::Noise& dw, const typename P::PathParams& params) {
  const double dt = t1 - t0;
  const auto a = problem.drift(drift_time(problem, t0, t1, params), x, params);
  const auto bdw = matvec(problem.diffusion(t0, x, params), dw);
  typename P::State next{};
  for (std::size_t i = 0; i < P::state_dim; ++i) next[i] = x[i] + a[i] * dt + bdw[i];
  return next;
}

/// One backward step phi_n = c_x(t0, x)^T phi_{n+1}, where
/// (c_x)_{ji} = delta_ji + (a_x)_{ji} dt + sum_k (d b_{jk} / d x_i) dW_k.
template <SdeProblem P>
typename P::State dual_step(const P& problem, double t0, double t1, const typename P::State& x,
                            const typename P::Noise& dw, const typename P::PathParams& params,
                            const typename P::State& phi_next) {
  constexpr std::size_t d1 = P::state_dim;
  const double dt = t1 - t0;
  const auto ax = problem.drift_jacobian(drift_time(problem, t0, t1, params), x, params);
  const auto bx = problem.diffusion_jacobian(t0, x, params);
  typename P::State phi{};
  for (std::size_t i = 0; i < d1; ++i) {
    double s = phi_next[i];
    for (std::size_t j = 0; j < d1; ++j) {
      double cji = ax[j][i] * dt;
      for (std::size_t k = 0; k < P::noise_dim; ++k) cji += bx[i][j][k] * dw[k];
      s += cji * phi_next[j];
    }
    phi[i] = s;
  }
  return phi;
}

/// Error density of the interval starting at (t, x) with length dt, given the
/// dual weight phi at t. `intervals` is the current interval count of the
/// mesh, used only by the drift-augmented density.
///
/// Standard: rho = 1/2 phi_i ((b b^T)_{kl} (b_{x_k} b_{x_l}^T))_{ij} phi_j,
/// which reduces to phi^2 (b_x b)^2 / 2 in one dimension.
/// DriftAugmented adds N (phi . (a_t + a_x a))^2 dt^2 / 2.
template <SdeProblem P>
double error_density(const P& problem, double t, double dt, const typename P::State& x,
                     const typename P::State& phi, const typename P::PathParams& params,
                     std::size_t intervals) {
  constexpr std::size_t d1 = P::state_dim;
  constexpr std::size_t d2 = P::noise_dim;
  const auto b = problem.diffusion(t, x, params);
  const auto bx = problem.diffusion_jacobian(t, x, params);

  // v_k = b_{x_k}^T phi
  std::array<Vec<d2>, d1> v{};
  for (std::size_t k = 0; k < d1; ++k) v[k] = matvec_transposed(bx[k], phi);

  double quad = 0.0;
  for (std::size_t k = 0; k < d1; ++k) {
    for (std::size_t l = 0; l < d1; ++l) {
      const double bbt_kl = dot(b[k], b[l]);
      if (bbt_kl != 0.0) quad += bbt_kl * dot(v[k], v[l]);
    }
  }
  double rho = 0.5 * quad;

  if constexpr (P::density == DensityKind::DriftAugmented) {
    const auto a = problem.drift(t, x, params);
    const auto ax = problem.drift_jacobian(t, x, params);
    const auto at = problem.drift_time_derivative(t, x, params);
    const auto axa = matvec(ax, a);
    double proj = 0.0;
    for (std::size_t i = 0; i < d1; ++i) proj += phi[i] * (at[i] + axa[i]);
    rho += 0.5 * static_cast<double>(intervals) * proj * proj * dt * dt;
  }
  return rho;
}

/// Forward Euler-Maruyama solve on the path's mesh.
template <SdeProblem P>
PathSolution<P> euler_maruyama(const P& problem, const WienerPath<P::noise_dim>& path,
                               const typename P::PathParams& params) {
  const Mesh& mesh = path.mesh;
  if (path.values.size() != mesh.size()) throw UsageError("euler_maruyama: path and mesh disagree");
  PathSolution<P> sol;
  sol.states.resize(mesh.size());
  sol.states[0] = problem.initial_state();
  for (std::size_t n = 0; n < mesh.intervals(); ++n) {
    if (drift_time(problem, mesh[n], mesh[n + 1], params) != mesh[n]) ++sol.implicit_steps;
    sol.states[n + 1] =
        forward_step(problem, mesh[n], mesh[n + 1], sol.states[n], path.increment(n), params);
    if (!all_finite(sol.states[n + 1]))
      throw SampleAborted("euler_maruyama: non-finite state at step " + std::to_string(n));
  }
  return sol;
}

/// Backward solve phi_N = g'(X_T), phi_n = c_x(t_n, X_n)^T phi_{n+1}.
template <SdeProblem P>
DualSolution<P> dual_backward(const P& problem, const WienerPath<P::noise_dim>& path,
                              const PathSolution<P>& sol, const typename P::PathParams& params) {
  const Mesh& mesh = path.mesh;
  if (sol.states.size() != mesh.size()) throw UsageError("dual_backward: solution and mesh disagree");
  DualSolution<P> dual;
  dual.weights.resize(mesh.size());
  const std::size_t last = mesh.intervals();
  dual.weights[last] = problem.observable_gradient(sol.states[last]);
  for (std::size_t n = last; n-- > 0;) {
    dual.weights[n] = dual_step(problem, mesh[n], mesh[n + 1], sol.states[n], path.increment(n),
                                params, dual.weights[n + 1]);
  }
  return dual;
}

template <SdeProblem P>
ErrorIndicators error_indicators(const P& problem, const WienerPath<P::noise_dim>& path,
                                 const PathSolution<P>& sol, const DualSolution<P>& dual,
                                 const typename P::PathParams& params) {
  const Mesh& mesh = path.mesh;
  if (sol.states.size() != mesh.size() || dual.weights.size() != mesh.size())
    throw UsageError("error_indicators: inputs live on different meshes");
  const std::size_t intervals = mesh.intervals();
  ErrorIndicators ind;
  ind.density.resize(intervals);
  ind.indicators.resize(intervals);
  for (std::size_t n = 0; n < intervals; ++n) {
    const double dt = mesh.step(n);
    ind.density[n] =
        error_density(problem, mesh[n], dt, sol.states[n], dual.weights[n], params, intervals);
    ind.indicators[n] = ind.density[n] * dt * dt;
  }
  return ind;
}

}  // namespace amlmc
