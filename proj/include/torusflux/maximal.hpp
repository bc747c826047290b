#pragma once

// Discrete Hardy-Littlewood maximal function and the singular average
// D_r f(x) = (1/r) int_{B(0,r)} |grad f(x+z)| / |z|^{d-1} dz.

#include <algorithm>
#include <cmath>
#include <vector>

#include "torusflux/quadrature.hpp"
#include "torusflux/spectral.hpp"

namespace torusflux {

namespace detail {

/// Periodic centered box sum of half-width r cells along one axis (width
/// clamped to n so no sample is counted twice).
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> box_sum_axis(const Eigen::Array<Scalar, Eigen::Dynamic, 1>& f,
                                                     const TorusGrid<Scalar>& grid, int axis, int r) {
  const int n = grid.n();
  const int width = std::min(2 * r + 1, n);
  const int left = width == n ? n / 2 : r;
  const Eigen::Index s = grid.stride(axis);
  const Eigen::Index outer_count = grid.points() / (Eigen::Index(n) * s);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> out(f.size());
  std::vector<Scalar> prefix(3 * n + 1);
  for (Eigen::Index outer = 0; outer < outer_count; ++outer) {
    for (Eigen::Index inner = 0; inner < s; ++inner) {
      const Eigen::Index base = outer * n * s + inner;
      prefix[0] = 0;
      for (int j = 0; j < 3 * n; ++j) prefix[j + 1] = prefix[j] + f[base + (j % n) * s];
      for (int j = 0; j < n; ++j) {
        const int start = j - left + n;
        out[base + j * s] = prefix[start + width] - prefix[start];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Maximum of f and its centered cube averages with half-widths 1, 2, 4, ..., n/2 cells.
template <typename Scalar>
PeriodicField<Scalar> maximal_function(const PeriodicField<Scalar>& f) {
  if (!f.is_scalar()) throw DomainError("maximal_function expects a scalar field");
  const auto& grid = f.grid();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> best = f.component(0);
  for (int r = 1; r <= grid.n() / 2; r *= 2) {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> acc = f.component(0);
    for (int a = 0; a < grid.dim(); ++a) acc = detail::box_sum_axis(acc, grid, a, r);
    const Scalar count = std::pow(Scalar(std::min(2 * r + 1, grid.n())), Scalar(grid.dim()));
    best = best.max(acc / count);
  }
  PeriodicField<Scalar> out(grid, best);
  out.set_nonnegative(f.nonnegative());
  return out;
}

// ---------------------------------------------------------------------------
// D_r

namespace detail {

/// int over the cell [-1/2, 1/2]^d (unit spacing) of |z|^{1-d}.
template <typename Scalar>
Scalar singular_cell_integral(int dim) {
  if (dim == 1) return Scalar(1);
  if (dim == 2) return Scalar(4) * std::asinh(Scalar(1));
  // Six pyramids over the faces of [-1,1]^3 each contribute
  // A = int_{[-1,1]^2} ds dt / (1 + s^2 + t^2); the half-width cube scales by 1/2.
  static const Scalar A = integrate(
      [](Scalar s) {
        return integrate([s](Scalar t) { return Scalar(1) / (1 + s * s + t * t); }, Scalar(-1), Scalar(1))
            .value;
      },
      Scalar(-1), Scalar(1)).value;
  return Scalar(3) * A;
}

}  // namespace detail

/// Stencil of offsets and weights approximating int_{B(0,r)} g(x+z)|z|^{1-d} dz.
template <typename Scalar>
struct SingularStencil {
  std::vector<std::array<int, 3>> offsets;
  std::vector<Scalar> weights;
  Scalar radius = 0;

  Scalar total_weight() const { return pairwise_sum(weights.data(), weights.size()); }
};

template <typename Scalar>
SingularStencil<Scalar> singular_stencil(const TorusGrid<Scalar>& grid, Scalar r) {
  const Scalar h = grid.spacing();
  if (!(r >= 2 * h)) throw ResolutionError("D_r radius must be at least two grid spacings");
  const int d = grid.dim();
  const int reach = int(std::ceil(r / h + Scalar(0.5)));
  constexpr int kSub = 8;
  SingularStencil<Scalar> st;
  st.radius = r;
  const int lo1 = -reach, hi1 = reach;
  const int lo2 = d > 1 ? -reach : 0, hi2 = d > 1 ? reach : 0;
  const int lo3 = d > 2 ? -reach : 0, hi3 = d > 2 ? reach : 0;
  const Scalar cell = std::pow(h, Scalar(d));
  for (int i = lo1; i <= hi1; ++i)
    for (int j = lo2; j <= hi2; ++j)
      for (int k = lo3; k <= hi3; ++k) {
        const Scalar c0 = i * h, c1 = j * h, c2 = k * h;
        Scalar w(0);
        if (i == 0 && j == 0 && k == 0) {
          w = detail::singular_cell_integral<Scalar>(d) * h;
        } else {
          // Farthest and nearest corners decide inside / outside / straddling.
          const Scalar centers[3] = {c0, c1, c2};
          Scalar far2(0), near2(0);
          for (int a = 0; a < d; ++a) {
            const Scalar c = std::abs(centers[a]);
            far2 += (c + h / 2) * (c + h / 2);
            const Scalar nn = std::max(c - h / 2, Scalar(0));
            near2 += nn * nn;
          }
          const Scalar center = std::sqrt(c0 * c0 + c1 * c1 + c2 * c2);
          if (std::sqrt(near2) >= r) continue;
          if (std::sqrt(far2) <= r) {
            w = cell / std::pow(center, Scalar(d - 1));
          } else if (d == 1) {
            w = std::min(std::abs(c0) + h / 2, r) - (std::abs(c0) - h / 2);
          } else {
            const Scalar sub = h / kSub;
            const Scalar sub_cell = std::pow(sub, Scalar(d));
            const int s2 = d > 1 ? kSub : 1, s3 = d > 2 ? kSub : 1;
            for (int a = 0; a < kSub; ++a)
              for (int b = 0; b < s2; ++b)
                for (int c = 0; c < s3; ++c) {
                  const Scalar z0 = c0 - h / 2 + (a + Scalar(0.5)) * sub;
                  const Scalar z1 = d > 1 ? c1 - h / 2 + (b + Scalar(0.5)) * sub : Scalar(0);
                  const Scalar z2 = d > 2 ? c2 - h / 2 + (c + Scalar(0.5)) * sub : Scalar(0);
                  const Scalar rz = std::sqrt(z0 * z0 + z1 * z1 + z2 * z2);
                  if (rz <= r) w += sub_cell / std::pow(rz, Scalar(d - 1));
                }
          }
        }
        if (w > 0) {
          st.offsets.push_back({i, j, k});
          st.weights.push_back(w);
        }
      }
  return st;
}

/// D_r applied to a precomputed nonnegative gradient magnitude g = |grad f|.
template <typename Scalar>
PeriodicField<Scalar> D_r_of_magnitude(const PeriodicField<Scalar>& g, Scalar r) {
  const auto& grid = g.grid();
  const auto st = singular_stencil(grid, r);
  PeriodicField<Scalar> out(grid, 1);
  std::vector<Scalar> terms(st.weights.size());
  for (Eigen::Index x = 0; x < grid.points(); ++x) {
    const auto idx = grid.multi_index(x);
    for (std::size_t s = 0; s < st.weights.size(); ++s) {
      const auto& o = st.offsets[s];
      terms[s] = st.weights[s] * g(grid.flat_index({idx[0] + o[0], idx[1] + o[1], idx[2] + o[2]}));
    }
    out(x) = pairwise_sum(terms.data(), terms.size()) / r;
  }
  out.set_nonnegative(true);
  return out;
}

/// D_r f at a single grid point from a gradient magnitude field.
template <typename Scalar>
Scalar D_r_at(const PeriodicField<Scalar>& g, const SingularStencil<Scalar>& st, Eigen::Index x) {
  const auto& grid = g.grid();
  const auto idx = grid.multi_index(x);
  std::vector<Scalar> terms(st.weights.size());
  for (std::size_t s = 0; s < st.weights.size(); ++s) {
    const auto& o = st.offsets[s];
    terms[s] = st.weights[s] * g(grid.flat_index({idx[0] + o[0], idx[1] + o[1], idx[2] + o[2]}));
  }
  return pairwise_sum(terms.data(), terms.size()) / st.radius;
}

template <typename Scalar>
PeriodicField<Scalar> D_r(const PeriodicField<Scalar>& f, Scalar r) {
  if (!f.is_scalar()) throw DomainError("D_r expects a scalar field");
  return D_r_of_magnitude(grad(f).magnitude(), r);
}

}  // namespace torusflux
