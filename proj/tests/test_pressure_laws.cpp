#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "torusflux/pressure_laws.hpp"

using namespace torusflux;
using Law = PressureLaw<double>;

namespace {

// Composite Simpson rule, independent of the library quadrature.
template <typename F>
double simpson(F&& f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4 : 2) * f(a + i * h);
  return s * h / 3;
}

double potential_by_simpson(const Law& law, double rho) {
  return rho * simpson([&](double xi) { return law.pressure(xi) / (xi * xi); }, 1.0, rho);
}

// Five-point central difference, independent of the Richardson helper.
template <typename F>
double five_point(F&& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

}  // namespace

TEST_CASE("eval_pressure on power laws") {
  CHECK(eval_pressure(Law::isentropic(2.0), 3.0) == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(eval_pressure(Law::isentropic(2.0, 4.0, 0.5), 2.0) == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(eval_pressure(Law::isentropic(1.4), 0.0) == 0.0);
  CHECK_THROWS_AS(eval_pressure(Law::isentropic(2.0), -1.0), DomainError);
}

TEST_CASE("perturbed law equals the power law outside the bump support") {
  const auto law = Law::perturbed(2.0, 4.0, 0.0);
  CHECK(eval_pressure(law, 5.0) == 25.0);
  CHECK(eval_pressure(law, 0.25) == 0.0625);
  // Dip in the middle of the support.
  CHECK(eval_pressure(law, 0.75) == doctest::Approx(0.5625 - 0.3).epsilon(1e-14));
  CHECK(law.base(0.0) == 0.0);
}

TEST_CASE("bump perturbation derivatives match finite differences") {
  BumpPerturbation<double> q;
  for (double rho : {0.55, 0.62, 0.7, 0.75, 0.81, 0.93}) {
    CHECK(q(rho, 1) == doctest::Approx(five_point([&](double r) { return q(r); }, rho, 1e-4)).epsilon(1e-7));
    CHECK(q(rho, 2) == doctest::Approx(five_point([&](double r) { return q(r, 1); }, rho, 1e-4)).epsilon(1e-7));
  }
}

TEST_CASE("potential closed forms") {
  CHECK(eval_potential(Law::isentropic(2.0), 2.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(eval_potential(Law::isentropic(2.0, 3.0, 1.0), 2.0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(eval_potential(Law::isentropic(2.0), 1.0) == 0.0);
  CHECK(eval_potential(Law::perturbed(1.4, 4.0, 0.3), 1.0) == 0.0);
  CHECK(eval_potential(Law::isentropic(1.4), 0.0) == 0.0);
}

TEST_CASE("potential agrees with Simpson quadrature of the defining integral") {
  const Law laws[] = {Law::isentropic(2.0), Law::isentropic(1.4, 4.0, 0.1), Law::perturbed(2.0, 4.0, 1.0)};
  for (const auto& law : laws)
    for (double rho : {0.3, 0.6, 0.75, 0.9, 2.0, 7.0})
      CHECK(law.potential(rho) == doctest::Approx(potential_by_simpson(law, rho)).epsilon(1e-10));
}

TEST_CASE("tabulated law reproduces a sampled power law") {
  std::vector<double> rho, pi;
  for (int i = 1; i <= 400; ++i) {
    rho.push_back(0.01 * i);
    pi.push_back(std::pow(0.01 * i, 2.0));
  }
  const auto law = Law::tabulated(rho, pi, 2.0);
  const auto exact = Law::isentropic(2.0);
  for (double r : {0.05, 0.5, 1.5, 3.3, 6.0, 10.0}) {
    CHECK(law.pressure(r) == doctest::Approx(exact.pressure(r)).epsilon(2e-4));
    CHECK(law.potential(r) == doctest::Approx(exact.potential(r)).epsilon(2e-4));
  }
  // Extrapolation continues as pi_end (rho/rho_end)^gamma.
  CHECK(law.pressure(8.0) == doctest::Approx(16.0 * 4.0).epsilon(1e-14));
}

TEST_CASE("tabulated law parsing and validation") {
  std::istringstream good("# rho pi\n0.5 0.25\n1.0 1.0 # comment\n\n2.0 4.0\n3.0 9.0\n");
  const auto law = Law::read_tabulated(good, 2.0);
  CHECK(law.kind() == LawKind::Tabulated);
  CHECK(law.pressure(2.0) == doctest::Approx(4.0).epsilon(1e-14));
  std::istringstream bad("1.0 1.0\n0.5 0.25\n2.0 4.0\n");
  CHECK_THROWS_AS(Law::read_tabulated(bad, 2.0), DomainError);
  std::istringstream ragged("1.0\n");
  CHECK_THROWS_AS(Law::read_tabulated(ragged, 2.0), DomainError);
}

TEST_CASE("identity rho Pi' - Pi = pi_mu on 200 log-spaced densities") {
  std::vector<double> rho, pi;
  for (int i = 1; i <= 60; ++i) {
    rho.push_back(0.05 * i);
    pi.push_back(std::pow(0.05 * i, 1.6) + 0.1 * (0.05 * i));
  }
  const Law laws[] = {Law::isentropic(1.4), Law::isentropic(2.0, 4.0, 1.0), Law::isentropic(2.0, 3.5, 0.1),
                      Law::perturbed(2.0, 4.0, 1.0), Law::tabulated(rho, pi, 1.6)};
  for (const auto& law : laws) {
    double worst = 0;
    for (double r : log_grid(1e-3, 1e3, 200)) {
      const double h = std::min(1e-2 * r, 2e-3);
      const double d = five_point([&](double x) { return law.potential(x); }, r, h / 4);
      const double p = law.pressure(r);
      worst = std::max(worst, std::abs(r * d - law.potential(r) - p) / (1 + std::abs(p)));
    }
    CAPTURE(to_string(law.kind()));
    CHECK(worst < 1e-7);
    CHECK(certify_law(law).identity_residual <= 1e-8);
  }
}

TEST_CASE("growth envelope holds for built-in laws") {
  for (const auto& law : {Law::isentropic(1.4), Law::isentropic(2.0), Law::perturbed(2.0, 4.0, 0.0)}) {
    const auto cert = certify_law(law);
    CHECK(cert.positivity);
    CHECK(cert.envelope_violation <= 0.0);
  }
}

TEST_CASE("septic cutoff is C3 at both ends") {
  const double M = 2.0;
  for (int order = 0; order <= 3; ++order) {
    CHECK(cutoff(M, M, order) == 0.0);
    CHECK(std::abs(cutoff(M * (1 + 1e-9), M, order)) < 1e-6);
    CHECK(std::abs(cutoff(2 * M * (1 - 1e-9), M, order) - (order == 0 ? 1.0 : 0.0)) < 1e-6);
  }
  for (double rho : {2.3, 2.9, 3.4, 3.8})
    for (int order = 0; order < 3; ++order)
      CHECK(cutoff(rho, M, order + 1) ==
            doctest::Approx(five_point([&](double r) { return cutoff(r, M, order); }, rho, 1e-4)).epsilon(1e-8));
  CHECK(cutoff(1.5 * M, M) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("split of a monotone law") {
  const auto law = Law::isentropic(2.0, 4.0, 1.0);
  const auto split = build_split(law);
  // Pi_mu is negative on (0, 1) under the integral normalization, so a cutoff is needed.
  CHECK(law.potential(0.5) < 0);
  CHECK_FALSE(split.trivial());
  CHECK(std::isfinite(split.lambda_q()));
  CHECK(split.lambda_q() > 0);
  for (double rho : {0.5, 1.0, 3.0, 10.0})
    CHECK(split.p_mu(rho) + split.q(rho) == doctest::Approx(law.pressure(rho)).epsilon(1e-8));
  // P + Q reassembles Pi_mu.
  for (double rho : {0.2, 1.0, split.M() * 1.5, 50.0})
    CHECK(split.P(rho) + split.Q(rho) == doctest::Approx(law.potential(rho)).epsilon(1e-12));
}

TEST_CASE("split of the perturbed law: support, signs and convexity by independent sampling") {
  const auto law = Law::perturbed(2.0, 4.0, 0.1);
  const auto split = build_split(law);
  const double M = split.M();
  for (int i = 0; i <= 4000; ++i) {
    const double rho = 2 * M + i * 0.01 * M;
    CHECK(split.Q(rho) == 0.0);
  }
  // Derivative signs via differences of P values only.
  const double h = 1e-4;
  int bad = 0;
  for (int i = 1; i <= 600; ++i) {
    const double rho = 3 * M * i / 600.0 + 3 * h;
    const double P0 = split.P(rho);
    const double P1 = (split.P(rho + h) - split.P(rho - h)) / (2 * h);
    const double P2 = (split.P(rho + h) - 2 * P0 + split.P(rho - h)) / (h * h);
    if (P0 < -1e-12 || P1 < -1e-8 || P2 < -1e-4) ++bad;
  }
  CHECK(bad == 0);
  // lambda_q P +- p_mu convex on the certification grid.
  const auto grid = split_sample_grid(M);
  const double lq = split.lambda_q();
  double worst = 1e300;
  for (double sign : {1.0, -1.0}) {
    std::vector<double> v;
    for (double r : grid) v.push_back(lq * split.P(r) + sign * split.p_mu(r));
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
      const double d2 = 2 * ((v[i + 1] - v[i]) / (grid[i + 1] - grid[i]) - (v[i] - v[i - 1]) / (grid[i] - grid[i - 1])) /
                        (grid[i + 1] - grid[i - 1]);
      worst = std::min(worst, d2);
    }
  }
  CHECK(worst >= -1e-10);
  const auto cert = certify_law(law);
  CHECK(cert.passed());
}

TEST_CASE("P_mu growth bounds C1 rho^Gamma <= P_mu <= C2 (rho^Gamma + rho^gamma + 1)") {
  const auto law = Law::isentropic(1.4, 4.0, 0.1);
  const auto split = build_split(law);
  double lo = 1e300, hi = 0;
  for (double r : log_grid(1e-3, 1e3, 200)) {
    lo = std::min(lo, split.P(r) / std::pow(r, 4.0));
    hi = std::max(hi, split.P(r) / (std::pow(r, 4.0) + std::pow(r, 1.4) + 1));
  }
  CHECK(lo > 0);
  CHECK(hi < 1e3);
}

TEST_CASE("split preconditions") {
  CHECK_THROWS_AS(build_split(Law::isentropic(2.0, 4.0, 0.0)), DomainError);
  CHECK_THROWS_AS(build_split(Law::isentropic(2.0, 3.0, 1.0)), DomainError);
  SplitOptions tight;
  tight.scan_limit = 1.01;
  CHECK_THROWS_AS(build_split(Law::perturbed(2.0, 4.0, 1e-6), tight), ConstructionError);
}

TEST_CASE("truncation T_k") {
  CHECK(truncation_T(5.0, 2.0) == 2.0);
  CHECK(truncation_T(1.0, 10.0) == 2.0);
  const double t = truncation_T(2.0, 5.0) / 2.0;
  CHECK(t > 1.75);
  CHECK(t < 2.0);
  CHECK(t == doctest::Approx(1.9375).epsilon(1e-15));
  CHECK(truncation_T(3.0, 9.0) == 6.0);
  CHECK_THROWS_AS(truncation_T(0.5, 1.0), DomainError);
  // C1 joins and concavity.
  CHECK(five_point([](double x) { return truncation_unit(x); }, 1.0 + 1e-3, 1e-4) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(five_point([](double x) { return truncation_unit(x); }, 3.0 - 1e-3, 1e-4)) < 1e-3);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(0.0, 40.0), kd(1.0, 8.0);
  for (int i = 0; i < 2000; ++i) {
    const double k = kd(rng), a = dist(rng), b = dist(rng);
    CHECK(std::abs(truncation_T(k, a) - truncation_T(k, b)) <= std::abs(a - b) + 1e-14);
    const double m = 0.5 * (a + b);
    CHECK(truncation_T(k, m) >= 0.5 * (truncation_T(k, a) + truncation_T(k, b)) - 1e-14);
    if (a <= b) CHECK(truncation_T(k, a) <= truncation_T(k, b));
  }
}

TEST_CASE("renormalization L_k") {
  CHECK(renorm_L(4.0, 2.0) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  CHECK(renorm_L(3.0, 1.0) == 0.0);
  CHECK(renorm_L(3.0, 0.0) == 0.0);
  const double by_simpson = 8.0 * simpson([](double xi) { return truncation_T(1.0, xi) / (xi * xi); }, 1.0, 8.0);
  CHECK(renorm_L(1.0, 8.0) == doctest::Approx(by_simpson).epsilon(1e-10));
  for (double k : {1.0, 2.5})
    for (double rho : {0.3, 1.7, 2.4, 5.0, 8.0, 30.0}) {
      const double d = five_point([&](double r) { return renorm_L(k, r); }, rho, 1e-4);
      CHECK(rho * d - renorm_L(k, rho) == doctest::Approx(truncation_T(k, rho)).epsilon(1e-8));
    }
  CHECK_THROWS_AS(renorm_L(0.9, 1.0), DomainError);
}
