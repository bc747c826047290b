#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "torusflux/common.hpp"

namespace torusflux {

template <typename Scalar>
struct QuadratureResult {
  Scalar value;
  Scalar error;
  int evaluations;
};

namespace detail {

// Gauss-Kronrod 7/15 nodes on [-1, 1]; index 7 is the center.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the center.
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename Scalar, typename F>
void gk15(F&& f, Scalar a, Scalar b, Scalar& kronrod, Scalar& gauss) {
  const Scalar center = (a + b) / 2;
  const Scalar half = (b - a) / 2;
  const Scalar fc = f(center);
  kronrod = Scalar(kKronrodWeights[7]) * fc;
  gauss = Scalar(kGaussWeights[3]) * fc;
  for (int j = 0; j < 7; ++j) {
    const Scalar dx = half * Scalar(kKronrodNodes[j]);
    const Scalar sum = f(center - dx) + f(center + dx);
    kronrod += Scalar(kKronrodWeights[j]) * sum;
    if (j % 2 == 1) gauss += Scalar(kGaussWeights[j / 2]) * sum;
  }
  kronrod *= half;
  gauss *= half;
}

template <typename Scalar, typename F>
Scalar adaptive_gk(F& f, Scalar a, Scalar b, Scalar abs_tol, Scalar rel_tol, int depth,
                   int max_depth, Scalar& err, int& evals, bool& ok) {
  Scalar k, g;
  gk15(f, a, b, k, g);
  evals += 15;
  const Scalar e = std::abs(k - g);
  if (e <= std::max(abs_tol, rel_tol * std::abs(k)) || !(e == e)) {
    err += e;
    return k;
  }
  if (depth >= max_depth) {
    ok = false;
    err += e;
    return k;
  }
  const Scalar mid = (a + b) / 2;
  return adaptive_gk(f, a, mid, abs_tol / 2, rel_tol, depth + 1, max_depth, err, evals, ok) +
         adaptive_gk(f, mid, b, abs_tol / 2, rel_tol, depth + 1, max_depth, err, evals, ok);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod quadrature of f over [a, b] (b < a allowed).
/// Throws NumericError when the subdivision depth is exhausted.
template <typename Scalar, typename F>
QuadratureResult<Scalar> integrate(F&& f, Scalar a, Scalar b, Scalar abs_tol = Scalar(1e-14),
                                   Scalar rel_tol = Scalar(1e-13), int max_depth = 40) {
  if (a == b) return {Scalar(0), Scalar(0), 0};
  const Scalar sign = b < a ? Scalar(-1) : Scalar(1);
  const Scalar lo = std::min(a, b), hi = std::max(a, b);
  Scalar err(0);
  int evals = 0;
  bool ok = true;
  const Scalar value =
      detail::adaptive_gk(f, lo, hi, abs_tol, rel_tol, 0, max_depth, err, evals, ok);
  if (!ok) {
    std::ostringstream msg;
    msg << "quadrature did not converge on [" << lo << ", " << hi << "]: estimate " << value
        << ", error " << err << " after " << evals << " evaluations";
    throw NumericError(msg.str());
  }
  return {sign * value, err, evals};
}

}  // namespace torusflux
