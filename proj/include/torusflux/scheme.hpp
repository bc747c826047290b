#pragma once

// Time stepping for
//   d_t rho + div(rho [u]_eps) + delta rho^m = 0,
//   d_t u + grad [pi_mu(rho)]_eps = Delta u,
// coupled by a Picard iteration on the transport velocity.

#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

#include "torusflux/pressure_laws.hpp"
#include "torusflux/spectral.hpp"

namespace torusflux {

/// Which pressure drives the momentum step inside one Picard iteration.
///   StepStart: pi_mu(rho_n), transport by [u~]_eps.
///   Midpoint:  (pi_mu(rho_n) + pi_mu(rho*))/2, transport by [(u_n + u~)/2]_eps.
enum class ForcingMode { StepStart, Midpoint };

template <typename Scalar>
struct SchemeParams {
  Scalar epsilon = Scalar(0.2);
  Scalar epsilon_pressure = Scalar(0);  // <= 0: same as epsilon
  Scalar delta = Scalar(0);
  Scalar m = Scalar(11.5);
  Scalar dt = Scalar(1e-3);
  Scalar t_end = Scalar(0);
  Scalar picard_tol = Scalar(1e-10);
  int picard_max = 50;
  Scalar relaxation = Scalar(1);
  ForcingMode forcing = ForcingMode::StepStart;

  static Scalar default_m(Scalar Gamma) { return Scalar(2.5) * Gamma + Scalar(1.5); }

  Scalar pressure_epsilon() const { return epsilon_pressure > 0 ? epsilon_pressure : epsilon; }

  void validate() const {
    if (!(epsilon > 0)) throw DomainError("epsilon must be positive");
    if (!(delta >= 0)) throw DomainError("delta must be nonnegative");
    if (delta > 0 && !(m > 1)) throw DomainError("damping exponent m must exceed 1 when delta > 0");
    if (!(dt > 0)) throw DomainError("dt must be positive");
    if (picard_max < 1) throw DomainError("picard_max must be at least 1");
    if (!(relaxation > 0 && relaxation <= 1)) throw DomainError("relaxation must lie in (0, 1]");
    if (!(picard_tol >= 0)) throw DomainError("picard_tol must be nonnegative");
  }
};

template <typename Scalar>
struct SchemeState {
  Scalar t = 0;
  PeriodicField<Scalar> rho;
  PeriodicField<Scalar> u;
  SchemeParams<Scalar> params;
  PressureLaw<Scalar> law;

  const TorusGrid<Scalar>& grid() const { return rho.grid(); }
};

/// Pointwise pi_mu(rho).
template <typename Scalar>
PeriodicField<Scalar> pressure_field(const PressureLaw<Scalar>& law, const PeriodicField<Scalar>& rho) {
  PeriodicField<Scalar> p(rho.grid(), 1);
  for (Eigen::Index i = 0; i < rho.grid().points(); ++i) p(i) = law.pressure(std::max(rho(i), Scalar(0)));
  return p;
}

/// Pointwise Pi_mu(rho).
template <typename Scalar>
PeriodicField<Scalar> potential_field(const PressureLaw<Scalar>& law, const PeriodicField<Scalar>& rho) {
  PeriodicField<Scalar> p(rho.grid(), 1);
  for (Eigen::Index i = 0; i < rho.grid().points(); ++i) p(i) = law.potential(std::max(rho(i), Scalar(0)));
  return p;
}

// ---------------------------------------------------------------------------
// Continuity

/// Exact solution of rho' = -delta rho^m after time tau.
template <typename Scalar>
Scalar damp_exact(Scalar rho, Scalar delta, Scalar m, Scalar tau) {
  if (!(rho > 0)) return Scalar(0);
  if (m == 1) return rho * std::exp(-delta * tau);
  return rho * std::pow(1 + delta * (m - 1) * tau * std::pow(rho, m - 1), Scalar(-1) / (m - 1));
}

/// Fields entering and leaving each damping half step, for energy bookkeeping.
template <typename Scalar>
struct ContinuityTrace {
  std::vector<std::pair<PeriodicField<Scalar>, PeriodicField<Scalar>>> damping;
};

/// Largest dt allowed by the advective bound dt <= 0.5 h / max|v|.
template <typename Scalar>
Scalar cfl_limit(const PeriodicField<Scalar>& v) {
  const Scalar vmax = v.values().abs().maxCoeff();
  if (vmax == 0) return std::numeric_limits<Scalar>::infinity();
  return Scalar(0.5) * v.grid().spacing() / vmax;
}

namespace detail {

template <typename Scalar>
void upwind_sweep(PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& v, int axis, Scalar lambda) {
  const auto& grid = rho.grid();
  const int n = grid.n();
  const Eigen::Index s = grid.stride(axis);
  const Eigen::Index outer_count = grid.points() / (Eigen::Index(n) * s);
  std::vector<Scalar> flux(n);
  for (Eigen::Index outer = 0; outer < outer_count; ++outer) {
    for (Eigen::Index inner = 0; inner < s; ++inner) {
      const Eigen::Index base = outer * n * s + inner;
      for (int j = 0; j < n; ++j) {
        const Eigen::Index i0 = base + j * s, i1 = base + ((j + 1) % n) * s;
        const Scalar vf = Scalar(0.5) * (v(i0, axis) + v(i1, axis));
        flux[j] = std::max(vf, Scalar(0)) * rho(i0) + std::min(vf, Scalar(0)) * rho(i1);
      }
      for (int j = 0; j < n; ++j) rho(base + j * s) -= lambda * (flux[j] - flux[(j + n - 1) % n]);
    }
  }
}

template <typename Scalar>
void damp_field(PeriodicField<Scalar>& rho, Scalar delta, Scalar m, Scalar tau) {
  for (Eigen::Index i = 0; i < rho.grid().points(); ++i) rho(i) = damp_exact(rho(i), delta, m, tau);
}

}  // namespace detail

/// One Strang-split step: exact damping over dt/2, conservative upwind
/// transport axis by axis, exact damping over dt/2. v must already be mollified.
template <typename Scalar>
PeriodicField<Scalar> continuity_step(const PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& v_mollified,
                                      Scalar delta, Scalar m, Scalar dt, ContinuityTrace<Scalar>* trace = nullptr) {
  const auto& grid = rho.grid();
  if (v_mollified.grid() != grid || v_mollified.components() != grid.dim())
    throw DomainError("transport velocity must be a vector field on the density grid");
  const Scalar limit = cfl_limit(v_mollified);
  if (dt > limit) {
    std::ostringstream msg;
    msg << "CFL violated: dt = " << dt << " exceeds 0.5 h / max|v| = " << limit;
    throw CflError(msg.str(), double(limit));
  }
  PeriodicField<Scalar> out = rho;
  const bool damping = delta > 0;
  if (trace) trace->damping.clear();
  const auto half_damp = [&] {
    if (!damping) return;
    if (trace) trace->damping.emplace_back(out, out);
    detail::damp_field(out, delta, m, dt / 2);
    if (trace) trace->damping.back().second = out;
  };
  half_damp();
  const Scalar lambda = dt / grid.spacing();
  for (int a = 0; a < grid.dim(); ++a) detail::upwind_sweep(out, v_mollified, a, lambda);
  half_damp();
  out.set_nonnegative(true);
  return out;
}

// ---------------------------------------------------------------------------
// Momentum

template <typename Scalar>
struct MomentumTrace {
  Scalar enstrophy_increment = 0;  // int_{t}^{t+dt} int |grad u|^2, exact for the step's ODE
};

namespace detail {

/// Exponential Euler for u_t = Delta u + g with g frozen over the step, per
/// mode; forcing_hat holds the transform of the (already mollified) pressure.
template <typename Scalar>
PeriodicField<Scalar> exponential_step(const PeriodicField<Scalar>& u, const Spectrum<Scalar>& forcing_hat, Scalar dt,
                                       MomentumTrace<Scalar>* trace) {
  const auto& grid = u.grid();
  const auto k2 = wavenumber_squared(grid);
  const std::complex<Scalar> I(0, 1);
  PeriodicField<Scalar> out(grid, u.components());
  const Scalar parseval = grid.volume() / (Scalar(grid.points()) * Scalar(grid.points()));
  std::vector<Scalar> increments;
  increments.reserve(std::size_t(grid.points()));
  Scalar enstrophy(0);
  for (int c = 0; c < u.components(); ++c) {
    const Spectrum<Scalar> u_hat = forward(u, c);
    const auto kc = axis_wavenumbers(grid, c, true);
    Spectrum<Scalar> next(grid.points());
    increments.clear();
    for (Eigen::Index i = 0; i < grid.points(); ++i) {
      const Scalar a = k2[i];
      const std::complex<Scalar> g = -I * kc[i] * forcing_hat[i];
      if (a == 0) {
        next[i] = u_hat[i] + dt * g;
        continue;
      }
      const Scalar decay = std::exp(-a * dt);
      const Scalar phi = -std::expm1(-a * dt) / a;  // (1 - e^{-a dt}) / a
      next[i] = decay * u_hat[i] + phi * g;
      if (trace) {
        const std::complex<Scalar> cst = g / a, d = u_hat[i] - cst;
        const Scalar one_minus = -std::expm1(-a * dt), one_minus2 = -std::expm1(-2 * a * dt);
        increments.push_back(a * std::norm(cst) * dt + 2 * std::real(std::conj(cst) * d) * one_minus +
                             std::norm(d) * one_minus2 / 2);
      }
    }
    out.component(c) = inverse_real(std::move(next), grid);
    if (trace) enstrophy += pairwise_sum(increments.data(), increments.size());
  }
  if (trace) trace->enstrophy_increment = enstrophy * parseval;
  return out;
}

}  // namespace detail

/// Velocity update with diffusion integrated exactly and -grad[pressure]_eps
/// frozen over the step. The mollifier is applied to `pressure` here.
template <typename Scalar>
PeriodicField<Scalar> momentum_step(const PeriodicField<Scalar>& u, const PeriodicField<Scalar>& pressure,
                                    const Mollifier<Scalar>& mollifier, Scalar dt,
                                    MomentumTrace<Scalar>* trace = nullptr) {
  if (u.components() != u.grid().dim()) throw DomainError("momentum_step expects a vector velocity");
  Spectrum<Scalar> p_hat = forward(pressure);
  p_hat *= mollifier.multiplier().template cast<std::complex<Scalar>>();
  return detail::exponential_step(u, p_hat, dt, trace);
}

template <typename Scalar>
PeriodicField<Scalar> momentum_step(const PeriodicField<Scalar>& u, const PeriodicField<Scalar>& pressure,
                                    MollifierSpec<Scalar> spec, Scalar dt, MomentumTrace<Scalar>* trace = nullptr) {
  return momentum_step(u, pressure, Mollifier<Scalar>(u.grid(), spec), dt, trace);
}

/// Variant with an already-smoothed forcing potential F: u_t = Delta u - grad F.
template <typename Scalar>
PeriodicField<Scalar> momentum_step_unmollified(const PeriodicField<Scalar>& u, const PeriodicField<Scalar>& F,
                                                Scalar dt, MomentumTrace<Scalar>* trace = nullptr) {
  if (u.components() != u.grid().dim()) throw DomainError("momentum_step expects a vector velocity");
  return detail::exponential_step(u, forward(F), dt, trace);
}

// ---------------------------------------------------------------------------
// Picard coupling

template <typename Scalar>
struct StepTrace {
  Scalar dt = 0;
  int picard_iterations = 0;
  std::vector<Scalar> residuals;            // relative ||u_{j+1} - u_j|| / ||u_j||
  PeriodicField<Scalar> transport_velocity;  // velocity used by the accepted continuity solve
  ContinuityTrace<Scalar> continuity;
  MomentumTrace<Scalar> momentum;
};

/// Owns the mollifiers for one grid and parameter set.
template <typename Scalar>
class Stepper {
 public:
  Stepper(const TorusGrid<Scalar>& grid, const SchemeParams<Scalar>& params)
      : params_(params),
        velocity_mollifier_(grid, {params.epsilon}),
        pressure_mollifier_(grid, {params.pressure_epsilon()}) {
    params.validate();
  }

  const SchemeParams<Scalar>& params() const { return params_; }
  const Mollifier<Scalar>& velocity_mollifier() const { return velocity_mollifier_; }
  const Mollifier<Scalar>& pressure_mollifier() const { return pressure_mollifier_; }

  /// Advances by dt (defaults to params.dt). Throws ConvergenceError at the
  /// iteration cap and CflError when the transport velocity is too fast.
  SchemeState<Scalar> step(const SchemeState<Scalar>& state, StepTrace<Scalar>* trace = nullptr,
                           Scalar dt = Scalar(0)) const {
    if (dt <= 0) dt = params_.dt;
    const auto& p = params_;
    const PeriodicField<Scalar> pressure_n = pressure_field(state.law, state.rho);
    PeriodicField<Scalar> iterate = state.u;
    SchemeState<Scalar> next = state;
    StepTrace<Scalar> local;
    StepTrace<Scalar>& tr = trace ? *trace : local;
    tr.dt = dt;
    tr.residuals.clear();
    Scalar residual = std::numeric_limits<Scalar>::infinity();
    for (int j = 1; j <= p.picard_max; ++j) {
      PeriodicField<Scalar> transport_source = iterate;
      if (p.forcing == ForcingMode::Midpoint) transport_source.values() = (state.u.values() + iterate.values()) / 2;
      tr.transport_velocity = velocity_mollifier_(transport_source);
      next.rho = continuity_step(state.rho, tr.transport_velocity, p.delta, p.m, dt, &tr.continuity);
      PeriodicField<Scalar> pressure = pressure_n;
      if (p.forcing == ForcingMode::Midpoint)
        pressure.values() = (pressure_n.values() + pressure_field(state.law, next.rho).values()) / 2;
      PeriodicField<Scalar> u_new = momentum_step(state.u, pressure, pressure_mollifier_, dt, &tr.momentum);
      if (p.relaxation != 1) u_new.values() = p.relaxation * u_new.values() + (1 - p.relaxation) * iterate.values();
      const Scalar change = l2_distance(u_new, iterate);
      const Scalar base = l2_norm(iterate);
      residual = base > 0 ? change / base : (change > 0 ? std::numeric_limits<Scalar>::infinity() : Scalar(0));
      tr.residuals.push_back(residual);
      iterate = std::move(u_new);
      tr.picard_iterations = j;
      if (change <= p.picard_tol * base) {
        next.u = std::move(iterate);
        next.t = state.t + dt;
        return next;
      }
    }
    std::ostringstream msg;
    msg << "Picard iteration did not converge in " << p.picard_max << " iterations at t = " << state.t
        << " (last relative change " << residual << ")";
    throw ConvergenceError(msg.str(), double(residual), p.picard_max);
  }

 private:
  SchemeParams<Scalar> params_;
  Mollifier<Scalar> velocity_mollifier_;
  Mollifier<Scalar> pressure_mollifier_;
};

/// Single coupled step with mollifiers built on the fly.
template <typename Scalar>
SchemeState<Scalar> picard_coupled_step(const SchemeState<Scalar>& state, StepTrace<Scalar>* trace = nullptr) {
  return Stepper<Scalar>(state.grid(), state.params).step(state, trace);
}

// ---------------------------------------------------------------------------
// Driver

template <typename Scalar>
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_start(const SchemeState<Scalar>& /*state*/) {}
  /// Called after every accepted step; `sample` is true on stride multiples and the final step.
  virtual void on_step(const SchemeState<Scalar>& /*before*/, const SchemeState<Scalar>& /*after*/,
                       const StepTrace<Scalar>& /*trace*/, bool /*sample*/) {}
};

template <typename Scalar>
struct RunOptions {
  int stride = 1;
  std::vector<Scalar> snapshot_times;
  std::function<void(const SchemeState<Scalar>&)> on_snapshot;
  Scalar nonnegativity_tolerance = Scalar(1e-12);
};

template <typename Scalar>
struct Trajectory {
  SchemeState<Scalar> final_state;
  long steps = 0;
  bool complete = true;
  std::string failure;  // set when a step error aborted the run
};

/// Steps from state.t to params.t_end. Step errors abort the run and are
/// reported through the partial-trajectory fields rather than thrown.
template <typename Scalar>
Trajectory<Scalar> run(const SchemeState<Scalar>& initial, const std::vector<RunObserver<Scalar>*>& observers,
                       const RunOptions<Scalar>& options = {}) {
  Trajectory<Scalar> traj{initial};
  const Scalar t_end = initial.params.t_end;
  if (!(t_end > initial.t)) return traj;
  const Stepper<Scalar> stepper(initial.grid(), initial.params);
  for (auto* obs : observers) obs->on_start(initial);
  std::size_t next_snapshot = 0;
  std::vector<Scalar> snaps = options.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  const auto maybe_snapshot = [&](const SchemeState<Scalar>& s) {
    while (next_snapshot < snaps.size() && snaps[next_snapshot] <= s.t + Scalar(1e-9) * std::max(Scalar(1), s.t)) {
      if (options.on_snapshot) options.on_snapshot(s);
      ++next_snapshot;
    }
  };
  maybe_snapshot(initial);
  SchemeState<Scalar> state = initial;
  StepTrace<Scalar> trace;
  const Scalar dt = initial.params.dt;
  const long total = std::max(1L, long(std::ceil((t_end - initial.t) / dt - Scalar(1e-9))));
  try {
    for (long k = 1; k <= total; ++k) {
      // The last step is shortened to land exactly on t_end.
      const Scalar h = k == total ? t_end - state.t : dt;
      SchemeState<Scalar> next = stepper.step(state, &trace, h);
      if (k == total) next.t = t_end;
      if (!next.rho.all_finite() || !next.u.all_finite())
        throw NumericError("non-finite values after step " + std::to_string(k));
      if (next.rho.min() < -options.nonnegativity_tolerance)
        throw NumericError("density went negative after step " + std::to_string(k));
      const bool sample = (options.stride <= 1) || (k % options.stride == 0) || k == total;
      for (auto* obs : observers) obs->on_step(state, next, trace, sample);
      state = std::move(next);
      traj.steps = k;
      maybe_snapshot(state);
    }
  } catch (const std::exception& e) {
    traj.complete = false;
    traj.failure = e.what();
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace torusflux
