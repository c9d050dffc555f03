#pragma once

#include <array>
#include <cmath>
#include <cstddef>

// Fixed-size vector/matrix helpers. State and noise dimensions of the
// supported problems are tiny (at most 3), so everything lives on the stack.

namespace amlmc {

template <std::size_t N>
using Vec = std::array<double, N>;

/// Row-major R x C matrix.
template <std::size_t R, std::size_t C>
using Mat = std::array<std::array<double, C>, R>;

template <std::size_t N>
constexpr Vec<N> zeros() {
  Vec<N> v{};
  v.fill(0.0);
  return v;
}

template <std::size_t N>
constexpr double dot(const Vec<N>& a, const Vec<N>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < N; ++i) s += a[i] * b[i];
  return s;
}

template <std::size_t R, std::size_t C>
constexpr Vec<R> matvec(const Mat<R, C>& m, const Vec<C>& v) {
  Vec<R> out{};
  for (std::size_t i = 0; i < R; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < C; ++j) s += m[i][j] * v[j];
    out[i] = s;
  }
  return out;
}

/// m^T v
template <std::size_t R, std::size_t C>
constexpr Vec<C> matvec_transposed(const Mat<R, C>& m, const Vec<R>& v) {
  Vec<C> out{};
  out.fill(0.0);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[j] += m[i][j] * v[i];
  return out;
}

template <std::size_t N>
bool all_finite(const Vec<N>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace amlmc
