#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "errors.hpp"
#include "linalg.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

// Benchmark SDE problems dX = a(t, X) dt + b(t, X) dW with analytic
// Jacobians, observables and reference solutions.

namespace amlmc {

enum class Scheme {
  Explicit,
  /// Drift evaluated at t_n or t_{n+1}, whichever is less singular.
  SemiImplicitBlowup,
};

enum class DensityKind {
  Standard,
  /// Adds the N (a_t + a_x a)^2 dt^2 drift term for low-regularity drifts.
  DriftAugmented,
};

/// Per-path random parameters of problems that have none.
struct NoPathParams {
  friend bool operator==(const NoPathParams&, const NoPathParams&) = default;
};

template <class P>
concept SdeProblem = requires(const P& p, double t, const typename P::State& x,
                              const typename P::PathParams& params, GaussianStream& aux) {
  { P::state_dim } -> std::convertible_to<std::size_t>;
  { P::noise_dim } -> std::convertible_to<std::size_t>;
  { P::scheme } -> std::convertible_to<Scheme>;
  { P::density } -> std::convertible_to<DensityKind>;
  { p.name() } -> std::convertible_to<std::string_view>;
  { p.horizon() } -> std::convertible_to<double>;
  { p.initial_state() } -> std::same_as<typename P::State>;
  { p.drift(t, x, params) } -> std::same_as<typename P::State>;
  { p.diffusion(t, x, params) } -> std::same_as<typename P::Diffusion>;
  { p.drift_jacobian(t, x, params) } -> std::same_as<typename P::Jacobian>;
  { p.diffusion_jacobian(t, x, params) } -> std::same_as<typename P::DiffusionJacobian>;
  { p.observable(x) } -> std::convertible_to<double>;
  { p.observable_gradient(x) } -> std::same_as<typename P::State>;
  { p.sample_path_params(aux) } -> std::same_as<typename P::PathParams>;
  { p.reference_mean() } -> std::convertible_to<double>;
};

/// Problems with a pathwise closed-form solution X_T(W).
template <class P>
concept HasExactSolution = SdeProblem<P> && requires(const P& p, const Vec<P::noise_dim>& w) {
  { p.exact_terminal_value(w) } -> std::convertible_to<double>;
};

/// Shared type aliases for a problem with state dimension D1 and noise D2.
template <std::size_t D1, std::size_t D2>
struct ProblemShape {
  static constexpr std::size_t state_dim = D1;
  static constexpr std::size_t noise_dim = D2;
  using State = Vec<D1>;
  using Noise = Vec<D2>;
  using Diffusion = Mat<D1, D2>;
  /// (i, k) = d a_i / d x_k
  using Jacobian = Mat<D1, D1>;
  /// [k] = d b / d x_k
  using DiffusionJacobian = std::array<Mat<D1, D2>, D1>;
};

/// dX = X dt + X dW, X_0 = 1, g(x) = x.
struct Gbm : ProblemShape<1, 1> {
  static constexpr Scheme scheme = Scheme::Explicit;
  static constexpr DensityKind density = DensityKind::Standard;
  using PathParams = NoPathParams;

  double x0 = 1.0;
  double T = 1.0;

  std::string_view name() const { return "gbm"; }
  double horizon() const { return T; }
  State initial_state() const { return {x0}; }
  State drift(double, const State& x, const PathParams&) const { return {x[0]}; }
  Diffusion diffusion(double, const State& x, const PathParams&) const { return {{{x[0]}}}; }
  Jacobian drift_jacobian(double, const State&, const PathParams&) const { return {{{1.0}}}; }
  DiffusionJacobian diffusion_jacobian(double, const State&, const PathParams&) const {
    return {{{{{1.0}}}}};
  }
  double observable(const State& x) const { return x[0]; }
  State observable_gradient(const State&) const { return {1.0}; }
  PathParams sample_path_params(GaussianStream&) const { return {}; }
  double reference_mean() const { return x0 * std::exp(T); }
  double exact_terminal_value(const Noise& w) const { return x0 * std::exp(0.5 * T + w[0]); }
};

/// State (W, X) with dX = W dW; X_T is the Ito integral of W.
struct ItoIntegral : ProblemShape<2, 1> {
  static constexpr Scheme scheme = Scheme::Explicit;
  static constexpr DensityKind density = DensityKind::Standard;
  using PathParams = NoPathParams;

  double T = 1.0;

  std::string_view name() const { return "ito_integral"; }
  double horizon() const { return T; }
  State initial_state() const { return {0.0, 0.0}; }
  State drift(double, const State&, const PathParams&) const { return {0.0, 0.0}; }
  Diffusion diffusion(double, const State& x, const PathParams&) const {
    return {{{1.0}, {x[0]}}};
  }
  Jacobian drift_jacobian(double, const State&, const PathParams&) const { return {}; }
  DiffusionJacobian diffusion_jacobian(double, const State&, const PathParams&) const {
    return {{{{{0.0}, {1.0}}}, {{{0.0}, {0.0}}}}};
  }
  double observable(const State& x) const { return x[1]; }
  State observable_gradient(const State&) const { return {0.0, 1.0}; }
  PathParams sample_path_params(GaussianStream&) const { return {}; }
  double reference_mean() const { return 0.0; }
};

/// State (W1, W2, X) with dX = W1 dW2 - W2 dW1 (Levy area).
struct LevyArea : ProblemShape<3, 2> {
  static constexpr Scheme scheme = Scheme::Explicit;
  static constexpr DensityKind density = DensityKind::Standard;
  using PathParams = NoPathParams;

  double T = 1.0;

  std::string_view name() const { return "levy_area"; }
  double horizon() const { return T; }
  State initial_state() const { return {0.0, 0.0, 0.0}; }
  State drift(double, const State&, const PathParams&) const { return {0.0, 0.0, 0.0}; }
  Diffusion diffusion(double, const State& x, const PathParams&) const {
    return {{{1.0, 0.0}, {0.0, 1.0}, {-x[1], x[0]}}};
  }
  Jacobian drift_jacobian(double, const State&, const PathParams&) const { return {}; }
  DiffusionJacobian diffusion_jacobian(double, const State&, const PathParams&) const {
    DiffusionJacobian j{};
    j[0][2] = {0.0, 1.0};
    j[1][2] = {-1.0, 0.0};
    return j;
  }
  double observable(const State& x) const { return x[2]; }
  State observable_gradient(const State&) const { return {0.0, 0.0, 1.0}; }
  PathParams sample_path_params(GaussianStream&) const { return {}; }
  double reference_mean() const { return 0.0; }
};

/// State (W, X) with dX = 3 (W^2 - t) dW, so X_T = W_T^3 - 3 W_T T.
struct WtCubed : ProblemShape<2, 1> {
  static constexpr Scheme scheme = Scheme::Explicit;
  static constexpr DensityKind density = DensityKind::Standard;
  using PathParams = NoPathParams;

  double T = 1.0;

  std::string_view name() const { return "wt_cubed"; }
  double horizon() const { return T; }
  State initial_state() const { return {0.0, 0.0}; }
  State drift(double, const State&, const PathParams&) const { return {0.0, 0.0}; }
  Diffusion diffusion(double t, const State& x, const PathParams&) const {
    return {{{1.0}, {3.0 * (x[0] * x[0] - t)}}};
  }
  Jacobian drift_jacobian(double, const State&, const PathParams&) const { return {}; }
  DiffusionJacobian diffusion_jacobian(double, const State& x, const PathParams&) const {
    return {{{{{0.0}, {6.0 * x[0]}}}, {{{0.0}, {0.0}}}}};
  }
  double observable(const State& x) const { return x[1]; }
  State observable_gradient(const State&) const { return {0.0, 1.0}; }
  PathParams sample_path_params(GaussianStream&) const { return {}; }
  double reference_mean() const { return 0.0; }
  double exact_terminal_value(const Noise& w) const {
    return w[0] * w[0] * w[0] - 3.0 * w[0] * T;
  }
};

struct BlowupRealization {
  double xi = 0.5;
  friend bool operator==(const BlowupRealization&, const BlowupRealization&) = default;
};

/// Singularity point from a uniform u in [0, 1]: xi = 1/4 + u/2.
constexpr double blowup_xi_from_uniform(double u) { return 0.25 + 0.5 * u; }

/// 2 * int_{1/4}^{3/4} exp(r (x^{1-p} + (1-x)^{1-p}) / (1-p)) dx
inline double blowup_reference_mean(double p, double r, double tol = 1e-11) {
  const double q = 1.0 - p;
  auto integrand = [=](double x) {
    return std::exp(r * (std::pow(x, q) + std::pow(1.0 - x, q)) / q);
  };
  return 2.0 * adaptive_simpson(integrand, 0.25, 0.75, 0.5 * tol);
}

/// dX = r |t - xi|^{-p} X dt + sigma X dW with xi ~ U(1/4, 3/4) per path.
struct DriftBlowup : ProblemShape<1, 1> {
  static constexpr Scheme scheme = Scheme::SemiImplicitBlowup;
  static constexpr DensityKind density = DensityKind::DriftAugmented;
  using PathParams = BlowupRealization;

  double p = 0.5;
  double r = 0.2;
  double sigma = 0.5;
  double x0 = 1.0;
  double T = 1.0;

  std::string_view name() const { return "drift_blowup"; }
  double horizon() const { return T; }
  State initial_state() const { return {x0}; }

  /// |t - xi|; a mesh point landing exactly on xi is treated as if xi were
  /// one ulp larger.
  static double distance(double t, double xi) {
    if (t == xi) return std::nextafter(xi, 2.0) - xi;
    return std::abs(t - xi);
  }

  /// f(t; xi) = |t - xi|^{-p}
  double singular_factor(double t, const PathParams& prm) const {
    return std::pow(distance(t, prm.xi), -p);
  }

  /// Time at which the drift of step (t0, t1) is evaluated.
  double drift_time(double t0, double t1, const PathParams& prm) const {
    return singular_factor(t0, prm) < 2.0 * singular_factor(t1, prm) ? t0 : t1;
  }

  State drift(double t, const State& x, const PathParams& prm) const {
    return {r * singular_factor(t, prm) * x[0]};
  }
  Diffusion diffusion(double, const State& x, const PathParams&) const { return {{{sigma * x[0]}}}; }
  Jacobian drift_jacobian(double t, const State&, const PathParams& prm) const {
    return {{{r * singular_factor(t, prm)}}};
  }
  DiffusionJacobian diffusion_jacobian(double, const State&, const PathParams&) const {
    return {{{{{sigma}}}}};
  }
  State drift_time_derivative(double t, const State& x, const PathParams& prm) const {
    const double d = distance(t, prm.xi);
    const double sign = (t > prm.xi) ? 1.0 : -1.0;
    return {-r * p * x[0] * std::pow(d, -p - 1.0) * sign};
  }
  double observable(const State& x) const { return x[0]; }
  State observable_gradient(const State&) const { return {1.0}; }
  PathParams sample_path_params(GaussianStream& aux) const {
    return {blowup_xi_from_uniform(aux.uniform())};
  }
  double reference_mean() const { return x0 * blowup_reference_mean(p, r); }
};

using AnyProblem = std::variant<Gbm, ItoIntegral, LevyArea, WtCubed, DriftBlowup>;

struct ProblemParams {
  std::optional<double> p;
};

/// Accepts p in [1/2, 3/4]; values within 1e-3 of 2/3 (e.g. "0.6667") are
/// snapped to 2/3 exactly.
inline double normalize_blowup_exponent(double p) {
  if (std::abs(p - 2.0 / 3.0) < 1e-3) return 2.0 / 3.0;
  if (!(p >= 0.5 && p <= 0.75)) throw UsageError("drift_blowup: p must lie in [0.5, 0.75]");
  return p;
}

inline AnyProblem make_problem(std::string_view name, const ProblemParams& params = {}) {
  if (name == "gbm") return Gbm{};
  if (name == "ito_integral") return ItoIntegral{};
  if (name == "levy_area") return LevyArea{};
  if (name == "wt_cubed") return WtCubed{};
  if (name == "drift_blowup") {
    if (!params.p) throw UsageError("drift_blowup requires the exponent p");
    DriftBlowup problem;
    problem.p = normalize_blowup_exponent(*params.p);
    return problem;
  }
  throw UsageError("unknown problem '" + std::string(name) + "'");
}

inline std::string_view problem_name(const AnyProblem& problem) {
  return std::visit([](const auto& p) { return p.name(); }, problem);
}

inline double reference_mean(const AnyProblem& problem) {
  return std::visit([](const auto& p) { return p.reference_mean(); }, problem);
}

}  // namespace amlmc
