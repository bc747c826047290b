#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

namespace torusflux {

/// Input outside the mathematical domain of an operation (negative density, k < 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A length scale is not resolved by the grid.
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Quadrature or other numerical procedure failed to reach its tolerance.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Construction of a derived object (e.g. a potential splitting) failed.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Advective CFL bound violated; carries a time step that would pass.
class CflError : public std::runtime_error {
 public:
  CflError(const std::string& what, double suggested_dt)
      : std::runtime_error(what), suggested_dt_(suggested_dt) {}
  double suggested_dt() const noexcept { return suggested_dt_; }

 private:
  double suggested_dt_;
};

/// Fixed-point iteration hit its cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual, int iterations)
      : std::runtime_error(what), last_residual_(last_residual), iterations_(iterations) {}
  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  int iterations_;
};

template <typename Scalar>
inline constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is reproducible run to run.
template <typename Scalar>
Scalar pairwise_sum(const Scalar* data, std::size_t count) {
  constexpr std::size_t kBlock = 64;
  if (count <= kBlock) {
    Scalar acc(0);
    for (std::size_t i = 0; i < count; ++i) acc += data[i];
    return acc;
  }
  const std::size_t half = count / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, count - half);
}

template <typename Scalar>
Scalar pairwise_sum(std::span<const Scalar> values) {
  return pairwise_sum(values.data(), values.size());
}

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace torusflux
