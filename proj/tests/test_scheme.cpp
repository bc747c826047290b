#include <doctest.h>

#include <cmath>

#include "torusflux/scheme.hpp"

using namespace torusflux;
using Grid = TorusGrid<double>;
using Field = PeriodicField<double>;
using State = SchemeState<double>;

namespace {

State smoke_state(int dim, int n, double delta, ForcingMode mode = ForcingMode::StepStart) {
  const Grid grid(dim, n);
  SchemeParams<double> params;
  params.epsilon = 0.2;
  params.delta = delta;
  params.m = SchemeParams<double>::default_m(4.0);
  params.dt = 1e-3;
  params.forcing = mode;
  State s{0.0, Field::sample(grid, [](auto x) { return 1 + 0.5 * std::sin(x[0]); }), Field(grid, dim), params,
          PressureLaw<double>::isentropic(2.0)};
  s.rho.set_nonnegative(true);
  return s;
}

// Advects a smooth bump once around the circle and returns the L1 error.
double translation_error(int n) {
  const Grid grid(1, n);
  const auto profile = [](double x) { return 1 + 0.5 * std::exp(2 * std::cos(x)); };
  Field rho = Field::sample(grid, [&](auto x) { return profile(x[0]); });
  const Field v(grid, 1, 1.0);
  const double dt = 0.4 * grid.spacing();
  const int steps = int(std::round(grid.length() / dt));
  const double h = grid.length() / steps;
  for (int k = 0; k < steps; ++k) rho = continuity_step(rho, v, 0.0, 2.0, h);
  const Field exact = Field::sample(grid, [&](auto x) { return profile(x[0]); });
  return l1_distance(rho, exact);
}

// u_t = Delta u - grad F with u = e^{-2t} sin x needs F = -e^{-2t} cos x.
double manufactured_error(double dt) {
  const Grid grid(1, 32);
  Field u = Field::sample(grid, [](auto x) { return std::sin(x[0]); });
  const double T = 0.5;
  const int steps = int(std::round(T / dt));
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const Field F = Field::sample(grid, [t](auto x) { return -std::exp(-2 * t) * std::cos(x[0]); });
    u = momentum_step_unmollified(u, F, dt);
  }
  const Field exact = Field::sample(grid, [T](auto x) { return std::exp(-2 * T) * std::sin(x[0]); });
  return l2_distance(u, exact);
}

}  // namespace

TEST_CASE("damping ODE has the closed-form solution") {
  CHECK(damp_exact(1.0, 1.0, 2.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(damp_exact(2.0, 0.5, 1.0, 2.0) == doctest::Approx(2 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(damp_exact(0.0, 1.0, 3.0, 1.0) == 0.0);

  const Grid grid(1, 8);
  Field rho(grid, 1, 1.0);
  const Field v(grid, 1);
  for (int k = 0; k < 10; ++k) rho = continuity_step(rho, v, 1.0, 2.0, 0.1);
  CHECK(std::abs(rho(3) - 0.5) <= 1e-12 * 0.5);
}

TEST_CASE("continuity conserves mass without damping and loses it with damping") {
  const Grid grid(2, 32);
  Field rho = Field::sample(grid, [](auto x) { return 1 + 0.5 * std::sin(x[0]) * std::cos(x[1]); });
  const Field v = Field::sample_vector(grid, [](auto x) {
    return std::array<double, 2>{std::sin(x[1]), 0.5 * std::cos(x[0])};
  });
  const double m0 = rho.integral();
  Field a = rho;
  for (int k = 0; k < 50; ++k) a = continuity_step(a, v, 0.0, 2.0, 0.02);
  CHECK(std::abs(a.integral() - m0) <= 1e-13 * m0);
  CHECK(a.min() >= 0.0);
  double prev = m0;
  Field b = rho;
  for (int k = 0; k < 20; ++k) {
    b = continuity_step(b, v, 0.1, 3.0, 0.02);
    CHECK(b.integral() < prev);
    prev = b.integral();
  }
}

TEST_CASE("continuity rejects time steps above the CFL bound") {
  const Grid grid(1, 64);
  const Field rho(grid, 1, 1.0), v(grid, 1, 10.0);
  const double limit = cfl_limit(v);
  CHECK(limit == doctest::Approx(0.5 * grid.spacing() / 10));
  try {
    (void)continuity_step(rho, v, 0.0, 2.0, 2 * limit);
    FAIL("expected CflError");
  } catch (const CflError& e) {
    CHECK(e.suggested_dt() == doctest::Approx(limit));
  }
}

TEST_CASE("upwind translation converges at first order") {
  const double e1 = translation_error(128), e2 = translation_error(256);
  MESSAGE("translation L1 errors " << e1 << " " << e2);
  CHECK(e1 / e2 >= 1.8);
}

TEST_CASE("heat mode decays like exp(-k^2 t)") {
  const Grid grid(1, 32);
  Field u = Field::sample(grid, [](auto x) { return std::sin(x[0]); });
  const Field zero(grid, 1);
  for (int k = 0; k < 100; ++k) u = momentum_step_unmollified(u, zero, 0.01);
  const Field exact = Field::sample(grid, [](auto x) { return std::exp(-1.0) * std::sin(x[0]); });
  CHECK(l2_distance(u, exact) <= 1e-10 * l2_norm(exact));
}

TEST_CASE("manufactured forcing converges at first order in time") {
  const double e1 = manufactured_error(0.01), e2 = manufactured_error(0.005);
  MESSAGE("manufactured errors " << e1 << " " << e2);
  CHECK(e1 / e2 >= 1.8);
}

TEST_CASE("enstrophy increment matches quadrature of the exact mode solution") {
  // u = a sin x with constant forcing -grad F, F = b cos x: u_hat evolves toward b.
  const Grid grid(1, 16);
  const double a = 0.7, b = 0.3, dt = 0.4;
  const Field u = Field::sample(grid, [a](auto x) { return a * std::sin(x[0]); });
  const Field F = Field::sample(grid, [b](auto x) { return b * std::cos(x[0]); });
  MomentumTrace<double> tr;
  (void)momentum_step_unmollified(u, F, dt, &tr);
  // Coefficient c(t) of sin x: c' = -c + b, int |grad u|^2 = pi c^2.
  const auto c = [&](double t) { return b + (a - b) * std::exp(-t); };
  const double oracle =
      integrate([&](double t) { return std::numbers::pi * c(t) * c(t); }, 0.0, dt).value;
  CHECK(tr.enstrophy_increment == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("uniform state is a fixed point of the coupled step") {
  State s = smoke_state(1, 64, 0.0);
  s.rho = Field(s.rho.grid(), 1, 1.3);
  StepTrace<double> tr;
  const State next = picard_coupled_step(s, &tr);
  CHECK(tr.picard_iterations == 1);
  CHECK(l2_distance(next.rho, s.rho) == 0.0);
  CHECK(l2_norm(next.u) == 0.0);
}

TEST_CASE("Picard residuals are nonincreasing on the smoke test") {
  for (auto mode : {ForcingMode::StepStart, ForcingMode::Midpoint}) {
    State s = smoke_state(1, 64, 0.1, mode);
    const Stepper<double> stepper(s.rho.grid(), s.params);
    StepTrace<double> tr;
    for (int k = 0; k < 20; ++k) {
      s = stepper.step(s, &tr);
      for (std::size_t j = 2; j < tr.residuals.size(); ++j) CHECK(tr.residuals[j] <= tr.residuals[j - 1] * (1 + 1e-9));
    }
    CHECK(tr.picard_iterations <= 10);
  }
}

TEST_CASE("iteration cap raises ConvergenceError") {
  State s = smoke_state(1, 64, 0.1, ForcingMode::Midpoint);
  s = picard_coupled_step(s);
  s.params.picard_max = 1;
  s.params.picard_tol = 0;
  CHECK_THROWS_AS(picard_coupled_step(s), ConvergenceError);
}

TEST_CASE("coupled step self-converges under dt halving") {
  const auto final_rho = [](double dt) {
    State s = smoke_state(1, 64, 0.1);
    s.params.dt = dt;
    s.params.t_end = 0.1;
    return run<double>(s, {}).final_state;
  };
  const State a = final_rho(4e-3), b = final_rho(2e-3), c = final_rho(1e-3);
  const double d1 = l1_distance(a.rho, b.rho), d2 = l1_distance(b.rho, c.rho);
  MESSAGE("self-convergence " << d1 << " " << d2);
  CHECK(d1 / d2 >= 1.6);
  CHECK(c.t == doctest::Approx(0.1));
}

TEST_CASE("run handles zero horizon and a shortened last step") {
  State s = smoke_state(1, 64, 0.0);
  s.params.t_end = 0;
  const auto none = run<double>(s, {});
  CHECK(none.steps == 0);
  CHECK(none.complete);
  CHECK(l2_distance(none.final_state.rho, s.rho) == 0.0);

  s.params.t_end = 0.0105;
  const auto traj = run<double>(s, {});
  CHECK(traj.steps == 11);
  CHECK(traj.final_state.t == 0.0105);
}

TEST_CASE("run records failures as partial trajectories") {
  State s = smoke_state(1, 64, 0.0);
  s.u = Field::sample(s.rho.grid(), [](auto) { return 1e4; });
  s.params.t_end = 0.01;
  const auto traj = run<double>(s, {});
  CHECK_FALSE(traj.complete);
  CHECK(traj.failure.find("CFL") != std::string::npos);
}

TEST_CASE("2D smoke test keeps mass and positivity for 500 steps") {
  State s = smoke_state(2, 64, 0.0);
  s.params.t_end = 0.5;
  const double m0 = s.rho.integral();
  const auto traj = run<double>(s, {});
  REQUIRE(traj.complete);
  CHECK(traj.steps == 500);
  CHECK(std::abs(traj.final_state.rho.integral() - m0) <= 1e-12 * m0);
  CHECK(traj.final_state.rho.min() >= -1e-12);

  // Identical inputs give bit-identical output.
  const auto again = run<double>(s, {});
  CHECK(l2_distance(again.final_state.rho, traj.final_state.rho) == 0.0);
  CHECK(l2_distance(again.final_state.u, traj.final_state.u) == 0.0);
}
