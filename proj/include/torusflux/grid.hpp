#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <string>

#include <Eigen/Core>

#include "torusflux/common.hpp"

namespace torusflux {

/// Uniform grid on the d-torus [0, L)^d with n points per axis, d in {1, 2, 3}.
/// Flat indices are row-major: axis 0 varies slowest.
template <typename Scalar>
class TorusGrid {
 public:
  static constexpr std::size_t kDefaultMaxPoints = std::size_t(1) << 24;

  TorusGrid() : TorusGrid(1, 8) {}

  TorusGrid(int dim, int n, Scalar length = two_pi<Scalar>,
            std::size_t max_points = kDefaultMaxPoints)
      : dim_(dim), n_(n), length_(length) {
    if (dim < 1 || dim > 3) throw DomainError("grid dimension must be 1, 2 or 3");
    if (n < 8 || !is_power_of_two(n)) throw DomainError("points per axis must be a power of two >= 8");
    if (!(length > 0)) throw DomainError("grid period must be positive");
    points_ = 1;
    for (int a = 0; a < dim; ++a) points_ *= std::size_t(n);
    if (points_ > max_points) {
      std::ostringstream msg;
      msg << "grid of " << points_ << " points exceeds the memory budget of " << max_points;
      throw DomainError(msg.str());
    }
  }

  int dim() const { return dim_; }
  int n() const { return n_; }
  Scalar length() const { return length_; }
  Scalar spacing() const { return length_ / Scalar(n_); }
  Eigen::Index points() const { return Eigen::Index(points_); }
  Scalar cell_volume() const { return std::pow(spacing(), Scalar(dim_)); }
  Scalar volume() const { return std::pow(length_, Scalar(dim_)); }

  /// Stride of axis a in the flat index.
  Eigen::Index stride(int axis) const {
    Eigen::Index s = 1;
    for (int a = axis + 1; a < dim_; ++a) s *= n_;
    return s;
  }

  std::array<int, 3> multi_index(Eigen::Index flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = dim_ - 1; a >= 0; --a) {
      idx[a] = int(flat % n_);
      flat /= n_;
    }
    return idx;
  }

  Eigen::Index flat_index(const std::array<int, 3>& idx) const {
    Eigen::Index flat = 0;
    for (int a = 0; a < dim_; ++a) flat = flat * n_ + ((idx[a] % n_) + n_) % n_;
    return flat;
  }

  std::array<Scalar, 3> coordinates(Eigen::Index flat) const {
    const auto idx = multi_index(flat);
    return {idx[0] * spacing(), dim_ > 1 ? idx[1] * spacing() : Scalar(0),
            dim_ > 2 ? idx[2] * spacing() : Scalar(0)};
  }

  /// Signed wavenumber of Fourier index j on one axis.
  Scalar wavenumber(int j) const {
    const int signed_j = j <= n_ / 2 ? j : j - n_;
    return two_pi<Scalar> / length_ * Scalar(signed_j);
  }

  bool operator==(const TorusGrid& other) const {
    return dim_ == other.dim_ && n_ == other.n_ && length_ == other.length_;
  }
  bool operator!=(const TorusGrid& other) const { return !(*this == other); }

 private:
  int dim_;
  int n_;
  Scalar length_;
  std::size_t points_ = 0;
};

/// Real samples of a scalar (1 component) or vector (dim components) field.
/// Storage is points x components, so each component is a contiguous column.
template <typename Scalar>
class PeriodicField {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  PeriodicField() = default;

  PeriodicField(const TorusGrid<Scalar>& grid, int components = 1, Scalar value = Scalar(0))
      : grid_(grid), values_(Values::Constant(grid.points(), components, value)) {
    if (components != 1 && components != grid.dim())
      throw DomainError("field must have 1 or dim components");
  }

  PeriodicField(const TorusGrid<Scalar>& grid, Values values) : grid_(grid), values_(std::move(values)) {
    if (values_.rows() != grid.points()) throw DomainError("field sample count does not match grid");
    if (values_.cols() != 1 && values_.cols() != grid.dim())
      throw DomainError("field must have 1 or dim components");
  }

  /// Samples f(x) with x = (x0, x1, x2) grid coordinates (unused axes zero).
  template <typename F>
  static PeriodicField sample(const TorusGrid<Scalar>& grid, F&& f) {
    PeriodicField out(grid, 1);
    for (Eigen::Index i = 0; i < grid.points(); ++i) out.values_(i, 0) = f(grid.coordinates(i));
    return out;
  }

  template <typename F>
  static PeriodicField sample_vector(const TorusGrid<Scalar>& grid, F&& f) {
    PeriodicField out(grid, grid.dim());
    for (Eigen::Index i = 0; i < grid.points(); ++i) {
      const auto v = f(grid.coordinates(i));
      for (int c = 0; c < grid.dim(); ++c) out.values_(i, c) = v[c];
    }
    return out;
  }

  const TorusGrid<Scalar>& grid() const { return grid_; }
  int components() const { return int(values_.cols()); }
  bool is_scalar() const { return values_.cols() == 1; }

  Values& values() { return values_; }
  const Values& values() const { return values_; }
  auto component(int c) { return values_.col(c); }
  auto component(int c) const { return values_.col(c); }
  Scalar& operator()(Eigen::Index i, int c = 0) { return values_(i, c); }
  Scalar operator()(Eigen::Index i, int c = 0) const { return values_(i, c); }

  bool nonnegative() const { return nonnegative_; }
  void set_nonnegative(bool flag) { nonnegative_ = flag; }

  bool all_finite() const { return values_.allFinite(); }

  /// Integral of one component over the torus (pairwise-summed).
  Scalar integral(int c = 0) const {
    return pairwise_sum(values_.col(c).data(), std::size_t(values_.rows())) * grid_.cell_volume();
  }
  Scalar mean(int c = 0) const {
    return pairwise_sum(values_.col(c).data(), std::size_t(values_.rows())) / Scalar(values_.rows());
  }
  Scalar min() const { return values_.minCoeff(); }
  Scalar max() const { return values_.maxCoeff(); }

  /// Pointwise Euclidean magnitude of a vector field.
  PeriodicField magnitude() const {
    PeriodicField out(grid_, 1);
    out.values_.col(0) = values_.square().rowwise().sum().sqrt();
    out.nonnegative_ = true;
    return out;
  }

 private:
  TorusGrid<Scalar> grid_;
  Values values_;
  bool nonnegative_ = false;
};

/// Discrete L^p norm with cell-volume weights.
template <typename Scalar>
Scalar lp_norm(const PeriodicField<Scalar>& f, Scalar p) {
  typename PeriodicField<Scalar>::Values pointwise;
  if (f.is_scalar()) pointwise = f.values().abs();
  else pointwise = f.values().square().rowwise().sum().sqrt();
  if (std::isinf(p)) return pointwise.maxCoeff();
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> powered = pointwise.col(0).pow(p);
  const Scalar s = pairwise_sum(powered.data(), std::size_t(powered.size())) * f.grid().cell_volume();
  return std::pow(s, Scalar(1) / p);
}

template <typename Scalar>
Scalar l2_norm(const PeriodicField<Scalar>& f) {
  return lp_norm(f, Scalar(2));
}

template <typename Scalar>
Scalar l1_distance(const PeriodicField<Scalar>& a, const PeriodicField<Scalar>& b) {
  if (a.grid() != b.grid()) throw DomainError("fields live on different grids");
  PeriodicField<Scalar> d(a.grid(), a.values() - b.values());
  return lp_norm(d, Scalar(1));
}

template <typename Scalar>
Scalar l2_distance(const PeriodicField<Scalar>& a, const PeriodicField<Scalar>& b) {
  if (a.grid() != b.grid()) throw DomainError("fields live on different grids");
  PeriodicField<Scalar> d(a.grid(), a.values() - b.values());
  return l2_norm(d);
}

/// Cell-average restriction to a coarser grid with the same period; the
/// coarse cell j averages fine samples j*r .. j*r + r - 1 on every axis.
template <typename Scalar>
PeriodicField<Scalar> restrict_to(const PeriodicField<Scalar>& f, const TorusGrid<Scalar>& coarse) {
  const auto& fine = f.grid();
  if (coarse.dim() != fine.dim() || coarse.length() != fine.length() || fine.n() % coarse.n() != 0)
    throw DomainError("restriction target must be a coarsening of the source grid");
  const int r = fine.n() / coarse.n();
  PeriodicField<Scalar> out(coarse, f.components());
  const Scalar weight = Scalar(1) / std::pow(Scalar(r), Scalar(fine.dim()));
  for (Eigen::Index i = 0; i < fine.points(); ++i) {
    auto idx = fine.multi_index(i);
    for (int a = 0; a < fine.dim(); ++a) idx[a] /= r;
    const Eigen::Index j = coarse.flat_index(idx);
    for (int c = 0; c < f.components(); ++c) out(j, c) += weight * f(i, c);
  }
  out.set_nonnegative(f.nonnegative());
  return out;
}

}  // namespace torusflux
