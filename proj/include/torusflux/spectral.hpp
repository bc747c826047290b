#pragma once

// Trigonometric-collocation calculus on the torus: FFT helpers, gradient,
// divergence, Laplacian, (-Delta)^{-1}, and kernel mollification.

#include <complex>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "torusflux/grid.hpp"

namespace torusflux {

template <typename Scalar>
using Spectrum = Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1>;

namespace detail {

template <typename Scalar>
Eigen::FFT<Scalar>& fft_engine() {
  thread_local Eigen::FFT<Scalar> engine;
  return engine;
}

/// In-place d-dimensional transform, one axis at a time. The inverse carries the 1/N.
template <typename Scalar>
void transform(Spectrum<Scalar>& data, const TorusGrid<Scalar>& grid, bool inverse) {
  auto& fft = fft_engine<Scalar>();
  const int n = grid.n();
  std::vector<std::complex<Scalar>> line(n), out(n);
  for (int axis = 0; axis < grid.dim(); ++axis) {
    const Eigen::Index s = grid.stride(axis);
    const Eigen::Index outer_count = grid.points() / (Eigen::Index(n) * s);
    for (Eigen::Index outer = 0; outer < outer_count; ++outer) {
      for (Eigen::Index inner = 0; inner < s; ++inner) {
        const Eigen::Index base = outer * n * s + inner;
        for (int j = 0; j < n; ++j) line[j] = data[base + j * s];
        if (inverse) fft.inv(out, line);
        else fft.fwd(out, line);
        for (int j = 0; j < n; ++j) data[base + j * s] = out[j];
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
Spectrum<Scalar> forward(const PeriodicField<Scalar>& f, int component = 0) {
  Spectrum<Scalar> data = f.component(component).template cast<std::complex<Scalar>>();
  detail::transform(data, f.grid(), false);
  return data;
}

template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> inverse_real(Spectrum<Scalar> data, const TorusGrid<Scalar>& grid) {
  detail::transform(data, grid, true);
  return data.real();
}

/// Per-point signed wavenumber along one axis of the spectral index.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> axis_wavenumbers(const TorusGrid<Scalar>& grid, int axis,
                                                         bool zero_nyquist) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> k(grid.points());
  for (Eigen::Index i = 0; i < grid.points(); ++i) {
    const int j = grid.multi_index(i)[axis];
    k[i] = (zero_nyquist && j == grid.n() / 2) ? Scalar(0) : grid.wavenumber(j);
  }
  return k;
}

/// |k|^2 per spectral index, Nyquist modes included.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> wavenumber_squared(const TorusGrid<Scalar>& grid) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> k2 = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(grid.points());
  for (int a = 0; a < grid.dim(); ++a) k2 += axis_wavenumbers(grid, a, false).square();
  return k2;
}

/// Fraction of spectral energy in the two highest retained modes of any axis.
template <typename Scalar>
Scalar highest_mode_fraction(const Spectrum<Scalar>& spec, const TorusGrid<Scalar>& grid) {
  Scalar total(0), high(0);
  const int n = grid.n();
  for (Eigen::Index i = 0; i < grid.points(); ++i) {
    const Scalar e = std::norm(spec[i]);
    total += e;
    const auto idx = grid.multi_index(i);
    for (int a = 0; a < grid.dim(); ++a) {
      const int j = idx[a] <= n / 2 ? idx[a] : n - idx[a];
      if (j >= n / 2 - 1) {
        high += e;
        break;
      }
    }
  }
  return total > 0 ? high / total : Scalar(0);
}

namespace detail {

template <typename Scalar>
void check_resolution(const Spectrum<Scalar>& spec, const TorusGrid<Scalar>& grid,
                      std::vector<std::string>* warnings, const char* what) {
  if (!warnings) return;
  const Scalar fraction = highest_mode_fraction(spec, grid);
  if (fraction > Scalar(1e-6))
    warnings->push_back(std::string(what) + ": under-resolved field, energy fraction " +
                        std::to_string(double(fraction)) + " in the two highest modes");
}

}  // namespace detail

/// Spectral gradient of a scalar field. Nyquist modes are dropped, as for any
/// odd-order derivative of a real trigonometric interpolant.
template <typename Scalar>
PeriodicField<Scalar> grad(const PeriodicField<Scalar>& f, std::vector<std::string>* warnings = nullptr) {
  if (!f.is_scalar()) throw DomainError("grad expects a scalar field");
  const auto& grid = f.grid();
  const Spectrum<Scalar> spec = forward(f);
  detail::check_resolution(spec, grid, warnings, "grad");
  PeriodicField<Scalar> out(grid, grid.dim());
  const std::complex<Scalar> I(0, 1);
  for (int a = 0; a < grid.dim(); ++a) {
    const auto k = axis_wavenumbers(grid, a, true);
    Spectrum<Scalar> d = spec * (I * k.template cast<std::complex<Scalar>>());
    out.component(a) = inverse_real(std::move(d), grid);
  }
  return out;
}

/// Spectral divergence of a vector field.
template <typename Scalar>
PeriodicField<Scalar> div(const PeriodicField<Scalar>& u, std::vector<std::string>* warnings = nullptr) {
  const auto& grid = u.grid();
  if (u.components() != grid.dim()) throw DomainError("div expects a vector field");
  Spectrum<Scalar> acc = Spectrum<Scalar>::Zero(grid.points());
  const std::complex<Scalar> I(0, 1);
  for (int a = 0; a < grid.dim(); ++a) {
    const Spectrum<Scalar> spec = forward(u, a);
    detail::check_resolution(spec, grid, warnings, "div");
    acc += spec * (I * axis_wavenumbers(grid, a, true).template cast<std::complex<Scalar>>());
  }
  return PeriodicField<Scalar>(grid, inverse_real(std::move(acc), grid));
}

/// Jacobian of a vector field: component a*dim + b holds d_b u_a.
template <typename Scalar>
std::vector<PeriodicField<Scalar>> jacobian(const PeriodicField<Scalar>& u) {
  std::vector<PeriodicField<Scalar>> out;
  for (int a = 0; a < u.components(); ++a) {
    PeriodicField<Scalar> ua(u.grid(), typename PeriodicField<Scalar>::Values(u.component(a)));
    const auto g = grad(ua);
    for (int b = 0; b < u.grid().dim(); ++b)
      out.emplace_back(u.grid(), typename PeriodicField<Scalar>::Values(g.component(b)));
  }
  return out;
}

/// Spectral Laplacian, componentwise; multiplier -|k|^2 including Nyquist modes.
template <typename Scalar>
PeriodicField<Scalar> laplacian(const PeriodicField<Scalar>& f, std::vector<std::string>* warnings = nullptr) {
  const auto& grid = f.grid();
  const auto k2 = wavenumber_squared(grid);
  PeriodicField<Scalar> out(grid, f.components());
  for (int c = 0; c < f.components(); ++c) {
    Spectrum<Scalar> spec = forward(f, c);
    detail::check_resolution(spec, grid, warnings, "laplacian");
    spec *= (-k2).template cast<std::complex<Scalar>>();
    out.component(c) = inverse_real(std::move(spec), grid);
  }
  return out;
}

/// (-Delta)^{-1} on zero-mean scalar fields; output has exactly zero mean.
/// With subtract_mean the mean is removed first, otherwise a nonzero mean is an error.
template <typename Scalar>
PeriodicField<Scalar> inv_laplacian(const PeriodicField<Scalar>& f, bool subtract_mean = false) {
  if (!f.is_scalar()) throw DomainError("inv_laplacian expects a scalar field");
  const auto& grid = f.grid();
  const Scalar mean = f.mean();
  const Scalar scale = Scalar(1) + f.values().abs().maxCoeff();
  if (!subtract_mean && std::abs(mean) > Scalar(1e-12) * scale)
    throw DomainError("inv_laplacian needs a zero-mean field (mean " + std::to_string(double(mean)) + ")");
  Spectrum<Scalar> spec = forward(f);
  const auto k2 = wavenumber_squared(grid);
  spec[0] = 0;
  for (Eigen::Index i = 1; i < grid.points(); ++i) spec[i] /= k2[i];
  PeriodicField<Scalar> out(grid, inverse_real(std::move(spec), grid));
  // Remove the roundoff mean so the output mean is zero to summation accuracy.
  out.values() -= out.mean();
  return out;
}

// ---------------------------------------------------------------------------
// Mollification.

template <typename Scalar>
struct MollifierSpec {
  Scalar epsilon = Scalar(0.2);
};

/// Bump profile exp(-1/(1 - s^2)) on |s| < 1, s = |z|/epsilon.
template <typename Scalar>
Scalar bump_profile(Scalar s) {
  if (s >= 1) return Scalar(0);
  return std::exp(Scalar(-1) / (Scalar(1) - s * s));
}

/// Discrete mollifier on one grid: normalized kernel weights and their
/// (real, by evenness) Fourier multiplier.
template <typename Scalar>
class Mollifier {
 public:
  Mollifier(const TorusGrid<Scalar>& grid, MollifierSpec<Scalar> spec) : grid_(grid), spec_(spec) {
    if (!(spec.epsilon >= 2 * grid.spacing())) {
      throw ResolutionError("mollifier scale " + std::to_string(double(spec.epsilon)) +
                            " is below two grid spacings (" + std::to_string(double(2 * grid.spacing())) + ")");
    }
    weights_.resize(grid.points());
    const int n = grid.n();
    for (Eigen::Index i = 0; i < grid.points(); ++i) {
      const auto idx = grid.multi_index(i);
      Scalar r2(0);
      for (int a = 0; a < grid.dim(); ++a) {
        const int j = idx[a] <= n / 2 ? idx[a] : idx[a] - n;
        const Scalar z = j * grid.spacing();
        r2 += z * z;
      }
      weights_[i] = bump_profile(std::sqrt(r2) / spec.epsilon);
    }
    weights_ /= pairwise_sum(weights_.data(), std::size_t(weights_.size()));
    Spectrum<Scalar> spec_w = weights_.template cast<std::complex<Scalar>>();
    detail::transform(spec_w, grid, false);
    multiplier_ = spec_w.real();
    multiplier_[0] = Scalar(1);
  }

  const TorusGrid<Scalar>& grid() const { return grid_; }
  Scalar epsilon() const { return spec_.epsilon; }
  const Eigen::Array<Scalar, Eigen::Dynamic, 1>& weights() const { return weights_; }
  const Eigen::Array<Scalar, Eigen::Dynamic, 1>& multiplier() const { return multiplier_; }

  PeriodicField<Scalar> operator()(const PeriodicField<Scalar>& f) const {
    if (f.grid() != grid_) throw DomainError("mollifier built for a different grid");
    PeriodicField<Scalar> out(grid_, f.components());
    for (int c = 0; c < f.components(); ++c) {
      Spectrum<Scalar> spec = forward(f, c);
      spec *= multiplier_.template cast<std::complex<Scalar>>();
      out.component(c) = inverse_real(std::move(spec), grid_);
    }
    if (f.nonnegative()) {
      // A nonnegative kernel keeps nonnegative data nonnegative; clear FFT roundoff.
      out.values() = out.values().max(Scalar(0));
      out.set_nonnegative(true);
    }
    return out;
  }

 private:
  TorusGrid<Scalar> grid_;
  MollifierSpec<Scalar> spec_;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> weights_, multiplier_;
};

template <typename Scalar>
PeriodicField<Scalar> mollify(const PeriodicField<Scalar>& f, MollifierSpec<Scalar> spec) {
  return Mollifier<Scalar>(f.grid(), spec)(f);
}

}  // namespace torusflux
